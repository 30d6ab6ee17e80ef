#pragma once

// Internal windowed kernels shared by the performance-sensitive paths
// (derivative batches, PDE flux prediction). The public API in
// kbr/kernel_core.hpp returns dense per-point weight vectors; these return
// the truncated window directly.

#include <cstddef>
#include <vector>

#include "kbr/kernel_core.hpp"

namespace kbr::detail_core {

struct Window {
    std::size_t lo = 0, hi = 0;
};

// Normalized Gaussian weights with the max-log shift around `center`
// (normalized coordinates). 1D truncates to the representable window, which
// must also cover `x` when given; D>1 sums over all points.
void gaussian_weights(const std::vector<double>& pts, int dim, double theta,
                      const double* center, const double* x, Window& win,
                      std::vector<double>& w);

struct Solve1D {
    double x_tilde = 0.0;
    Window win;
    std::vector<double> w;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

Solve1D lagrange_1d(const std::vector<double>& pts, double theta, double x,
                    const LagrangeOptions& opts);

struct SolveND {
    std::vector<double> x_tilde;
    std::vector<double> w;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

SolveND lagrange_nd(const std::vector<double>& pts, int dim, double theta,
                    const double* x, const LagrangeOptions& opts);

}  // namespace kbr::detail_core
