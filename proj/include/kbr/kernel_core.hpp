#pragma once

#include <cstdint>
#include <vector>

#include "kbr/types.hpp"

namespace kbr {

enum class Exec { serial, parallel };

struct LagrangeOptions {
    int max_iter = 100;
    double tol_moment = 1e-12;  // normalized coordinates
};

// Trained state: training data mapped onto [0,1]^D, field scaled to [-1,1],
// a single kernel width parameter theta (squared-length units of the
// normalized domain), and per-point correction coefficients for the exact
// second-order prediction.
class KernelModel {
public:
    KernelModel(const TrainingSet& data, double theta,
                LagrangeOptions opts = {});

    int dimension() const { return dim_; }
    std::size_t size() const { return n_; }
    double theta() const { return theta_; }
    double norm_field() const { return field_scale_; }

    // Normalized training data (1D data is sorted by coordinate).
    const std::vector<double>& points() const { return pts_; }
    const std::vector<double>& values() const { return vals_; }
    // Raw field value of (sorted) training point i.
    double raw_value(std::size_t i) const { return vals_[i] * field_scale_; }

    // Affine domain map and its inverse, one axis at a time.
    double to_unit(double x, int axis) const { return (x - lo_[axis]) / scale_[axis]; }
    double from_unit(double u, int axis) const { return lo_[axis] + u * scale_[axis]; }
    double axis_scale(int axis) const { return scale_[axis]; }

    // Per-point correction state (exact second-order scheme).
    const std::vector<double>& correction_coeff() const { return ck_; }
    const std::vector<double>& residual_order1() const { return rk_; }
    const std::vector<double>& theta_train() const { return tk_; }
    const std::vector<std::uint8_t>& correction_kept() const { return keep_; }

    LagrangeOptions options() const { return opts_; }

private:
    void precompute_corrections();

    int dim_;
    std::size_t n_;
    double theta_;
    std::vector<double> pts_;   // normalized, row-major, 1D sorted
    std::vector<double> vals_;  // normalized to [-1,1]
    std::vector<double> lo_, scale_;
    double field_scale_;
    LagrangeOptions opts_;

    std::vector<double> ck_;    // correction coefficients c_k
    std::vector<double> rk_;    // first-order residuals phi_k - phi1(x_k)
    std::vector<double> tk_;    // Theta(x_k), each with its own multiplier
    std::vector<std::uint8_t> keep_;
};

// Normalized Gaussian weights P_i = exp(-||x_i - center||^2/theta) / sum_j (...)
// computed with the max-log shift. `center` is in raw coordinates.
Weights kernel_weights(const KernelModel& model, const std::vector<double>& center);

// Shift the kernel center until the weighted first moment of the training
// coordinates equals x (raw coordinates).
LagrangeResult solve_lagrange_multiplier(const KernelModel& model,
                                         const std::vector<double>& x,
                                         int max_iter = 100);

// Prediction with weights centered at x itself (no moment enforcement).
double predict_order0(const KernelModel& model, const std::vector<double>& x);

// Prediction with moment-corrected weights; exact for affine fields.
double predict_order1(const KernelModel& model, const std::vector<double>& x,
                      const LagrangeResult& lag);

// Second-moment errors at x and at every training point, all evaluated with
// the single weight set from `lag` (theta_raw uses weights centered at x).
MomentError moment_errors(const KernelModel& model, const std::vector<double>& x,
                          const LagrangeResult& lag);

// Exact second-order prediction; reproduces any quadratic field to machine
// precision at any in-hull point.
double predict_order2_exact(const KernelModel& model, const std::vector<double>& x);

// Batch evaluation across query points (row-major like TrainingSet::points).
std::vector<double> predict_order2_batch(const KernelModel& model,
                                         const std::vector<double>& queries,
                                         Exec exec = Exec::parallel);

// 1D conveniences.
double predict_order2_exact(const KernelModel& model, double x);
LagrangeResult solve_lagrange_multiplier(const KernelModel& model, double x,
                                         int max_iter = 100);

namespace detail {

// Original self-correction variant. Comparison oracle only; interpolates the
// per-point first-order residuals instead of cancelling the local
// second-moment error.
double predict_order2_self(const KernelModel& model, const std::vector<double>& x);

}  // namespace detail

}  // namespace kbr
