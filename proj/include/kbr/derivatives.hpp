#pragma once

#include <array>
#include <optional>
#include <vector>

#include "kbr/kernel_core.hpp"

namespace kbr {

// Local quadratic model phi = a + b.x + x^T C x and its derivatives.
struct QuadraticFit {
    double a = 0.0;
    std::array<double, 2> b{0.0, 0.0};
    std::array<double, 3> c{0.0, 0.0, 0.0};  // c11, c12, c22 (c12 stored once)

    std::array<double, 2> gradient(const std::array<double, 2>& x, int dim) const;
    double laplacian(int dim) const;
    std::array<double, 4> hessian() const;  // row-major 2x2
};

enum class Scheme { explicit_closed_form, implicit_system };

struct DerivativeEstimate {
    std::array<double, 2> grad{0.0, 0.0};
    double lap = 0.0;
    std::optional<std::array<double, 4>> hessian;  // implicit 2D only
    Scheme scheme = Scheme::explicit_closed_form;
    double condition = 0.0;   // implicit: cond of the local system
    double denom = 0.0;       // explicit: |x_hat - x| in normalized units
};

struct ImplicitConfig {
    // Perturbation magnitude in normalized-coordinate units; <= 0 selects the
    // default 0.025*sqrt(theta).
    double epsilon = 0.0;
    int max_retry = 3;          // epsilon doublings on ill-conditioning
    double cond_limit = 1e12;

    double resolve_epsilon(double theta) const;
};

// Closed-form extraction at x; the local field value is taken from the exact
// second-order prediction.
DerivativeEstimate explicit_derivatives_1d(const KernelModel& model, double x);

// Same algebra with a caller-supplied field value at x (grid-node use).
DerivativeEstimate explicit_derivatives_known_field(const KernelModel& model,
                                                    double x, double phi0);

// Perturbed local linear system (3x3) around the converged kernel center.
DerivativeEstimate implicit_derivatives_1d(const KernelModel& model, double x,
                                           const ImplicitConfig& cfg = {});

// 2D: corrected center, four axis perturbations, one diagonal perturbation,
// and the uncorrected center; least-squares for the six quadratic
// coefficients. Returns gradient, Hessian, Laplacian = trace.
DerivativeEstimate implicit_derivatives_2d(const KernelModel& model,
                                           const std::vector<double>& x,
                                           const ImplicitConfig& cfg = {});

std::vector<DerivativeEstimate> derivative_batch_1d(const KernelModel& model,
                                                    const std::vector<double>& xs,
                                                    Scheme scheme,
                                                    Exec exec = Exec::parallel,
                                                    const ImplicitConfig& cfg = {});

std::vector<DerivativeEstimate> implicit_batch_2d(const KernelModel& model,
                                                  const std::vector<double>& xy,
                                                  Exec exec = Exec::parallel,
                                                  const ImplicitConfig& cfg = {});

}  // namespace kbr
