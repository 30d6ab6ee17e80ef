#pragma once

#include <cstdint>
#include <vector>

#include "kbr/kernel_core.hpp"
#include "kbr/types.hpp"

namespace kbr {

struct SweepConfig {
    double k_min = 0.01;
    double k_max = 100.0;
    int n_sweep = 15;
    int knn = 5;             // neighbor count entering d_typ
    double split_ratio = 0.9;
    std::uint64_t seed = 0;
    bool refine = false;     // optional golden-section refinement around the minimum
};

struct NoiseConfig {
    double s = 0.0;          // noise scale, s = %noise/100
    std::uint64_t seed = 0;
    double sigma() const { return s / 3.0; }
};

struct SweepPoint {
    double k = 0.0;
    double theta = 0.0;
    double val_rmse = 0.0;
};

struct FitResult {
    KernelModel model;
    double k_opt = 0.0;
    double d_typ = 0.0;      // in normalized coordinates
    std::vector<SweepPoint> sweep;
};

// Mean over all points of the mean distance to their `knn` nearest neighbors.
double typical_distance(const std::vector<double>& points, int dimension, int knn = 5);

// Log-spaced sweep over k = theta/d_typ^2; selects the theta minimizing the
// normalized validation RMSE of the exact second-order prediction and returns
// the model rebuilt on the full set. Smallest k wins ties.
FitResult fit_theta(const TrainingSet& data, const SweepConfig& cfg);

// Restricted sweep reusing a previous optimum: n_local log-spaced k values
// bracketing k_prev within [k_min, k_max].
FitResult fit_theta_warm(const TrainingSet& data, const SweepConfig& cfg,
                         double k_prev, int n_local = 5);

// Multiplicative Gaussian corruption: v_i * (1 + zeta_i), zeta ~ N(0, (s/3)^2).
std::vector<double> add_noise(const std::vector<double>& values, const NoiseConfig& cfg);

// Deterministic RNG used across the library: splitmix64-seeded xoshiro-free
// simple generator with a portable Box-Muller normal. Stream `i` of a given
// seed is independent of thread count and platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
    double uniform();                 // [0, 1)
    double uniform(double a, double b);
    double normal();                  // standard normal (Box-Muller)
    std::uint64_t next_u64();

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace kbr
