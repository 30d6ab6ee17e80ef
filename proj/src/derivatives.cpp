#include "kbr/derivatives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kbr/errors.hpp"
#include "kernel_internal.hpp"
#include "small_linalg.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kbr {

namespace {

constexpr double kTolDenom = 1e-10;    // normalized coordinates
constexpr double kTinyTheta = 1e-250;  // absolute floor for 0/0 protection

using detail_core::Window;
using detail_core::gaussian_weights;
using detail_core::lagrange_1d;
using detail_core::lagrange_nd;

}  // namespace

std::array<double, 2> QuadraticFit::gradient(const std::array<double, 2>& x, int dim) const {
    std::array<double, 2> g{0.0, 0.0};
    g[0] = b[0] + 2.0 * c[0] * x[0] + (dim > 1 ? 2.0 * c[1] * x[1] : 0.0);
    if (dim > 1) g[1] = b[1] + 2.0 * c[1] * x[0] + 2.0 * c[2] * x[1];
    return g;
}

double QuadraticFit::laplacian(int dim) const {
    return 2.0 * c[0] + (dim > 1 ? 2.0 * c[2] : 0.0);
}

std::array<double, 4> QuadraticFit::hessian() const {
    return {2.0 * c[0], 2.0 * c[1], 2.0 * c[1], 2.0 * c[2]};
}

double ImplicitConfig::resolve_epsilon(double theta) const {
    const double e = epsilon > 0 ? epsilon : 0.025 * std::sqrt(theta);
    if (!(e > 0.0) || !(e < std::sqrt(theta)))
        throw InvalidConfig("ImplicitConfig: epsilon must satisfy 0 < eps < sqrt(theta)");
    return e;
}

namespace {

// Explicit closed form in normalized units. phi0 is the (normalized) local
// field value; the Laplacian comes from the corrected prediction and the
// gradient from the uncorrected one after removing the quadratic part.
DerivativeEstimate explicit_impl(const KernelModel& m, double u, double phi0) {
    const auto& pts = m.points();
    const auto& vals = m.values();

    auto s = lagrange_1d(pts, m.theta(), u, m.options());
    double phi1r = 0.0, var = 0.0, defect = 0.0;
    for (std::size_t i = 0; i < s.w.size(); ++i) {
        const double d = pts[s.win.lo + i] - u;
        phi1r += vals[s.win.lo + i] * s.w[i];
        var += d * d * s.w[i];
        defect += d * s.w[i];
    }
    double swdv = 0.0;
    for (std::size_t i = 0; i < s.w.size(); ++i)
        swdv += (pts[s.win.lo + i] - u) * (vals[s.win.lo + i] - phi1r) * s.w[i];
    const double phi1 = var > 0 ? phi1r - swdv / var * defect : phi1r;

    if (!(var > kTinyTheta))
        throw LaplacianDegenerate("explicit scheme: vanishing second-moment error");
    const double c = (phi1 - phi0) / var;

    Window win0;
    std::vector<double> w0;
    gaussian_weights(pts, 1, m.theta(), &u, nullptr, win0, w0);
    double theta0 = 0.0, den = 0.0, resid0 = 0.0;
    for (std::size_t i = 0; i < w0.size(); ++i) {
        const double xi = pts[win0.lo + i];
        theta0 += (xi - u) * (xi + u) * w0[i];  // Theta^(0)(x)
        den += (xi - u) * w0[i];                // x_hat - x
        resid0 += (vals[win0.lo + i] - phi0) * w0[i];
    }
    if (std::abs(den) < kTolDenom)
        throw GradientDegenerate("explicit scheme: |x_hat - x| below tolerance");
    const double b = (resid0 - c * theta0) / den;

    DerivativeEstimate est;
    est.scheme = Scheme::explicit_closed_form;
    est.denom = std::abs(den);
    const double fs = m.norm_field();
    const double xs = m.axis_scale(0);
    est.grad[0] = (b + 2.0 * c * u) * fs / xs;
    est.lap = 2.0 * c * fs / (xs * xs);
    if (!std::isfinite(est.grad[0]) || !std::isfinite(est.lap))
        throw GradientDegenerate("explicit scheme: non-finite estimate");
    return est;
}

DerivativeEstimate implicit_1d_impl(const KernelModel& m, double u,
                                    const ImplicitConfig& cfg) {
    const double theta = m.theta();
    const double s = std::sqrt(theta);
    const auto& pts = m.points();
    const auto& vals = m.values();
    auto lag = lagrange_1d(pts, theta, u, m.options());
    const double xt = lag.x_tilde;

    double eps = cfg.resolve_epsilon(theta);
    for (int attempt = 0;; ++attempt) {
        std::array<long double, 9> A{};
        std::array<long double, 3> B{};
        const double centers[3] = {xt, xt - eps, xt + eps};
        for (int r = 0; r < 3; ++r) {
            Window win;
            std::vector<double> w;
            gaussian_weights(pts, 1, theta, &centers[r], &u, win, w);
            long double m0 = 0.0L, m1 = 0.0L, m2 = 0.0L, f = 0.0L;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const long double y = (pts[win.lo + i] - u) / s;
                m0 += w[i];
                m1 += y * w[i];
                m2 += y * y * w[i];
                f += vals[win.lo + i] * w[i];
            }
            A[r * 3 + 0] = m0;
            A[r * 3 + 1] = m1;
            A[r * 3 + 2] = m2;
            B[r] = f;
        }
        const double cond = detail_linalg::cond_1norm<3>(A);
        if (cond < cfg.cond_limit || attempt >= cfg.max_retry) {
            if (!std::isfinite(cond) || cond >= cfg.cond_limit)
                throw IllConditioned("implicit scheme: condition " + std::to_string(cond));
            auto Asys = A;
            auto sol = B;
            if (!detail_linalg::solve_inplace<3>(Asys, sol))
                throw IllConditioned("implicit scheme: singular local system");
            DerivativeEstimate est;
            est.scheme = Scheme::implicit_system;
            est.condition = cond;
            const double fs = m.norm_field();
            const double xs = m.axis_scale(0);
            const double b = static_cast<double>(sol[1]) / s;
            const double c = static_cast<double>(sol[2]) / (s * s);
            est.grad[0] = b * fs / xs;
            est.lap = 2.0 * c * fs / (xs * xs);
            if (!std::isfinite(est.grad[0]) || !std::isfinite(est.lap))
                throw IllConditioned("implicit scheme: non-finite estimate");
            return est;
        }
        eps *= 2.0;
    }
}

}  // namespace

DerivativeEstimate explicit_derivatives_known_field(const KernelModel& model,
                                                    double x, double phi0) {
    if (model.dimension() != 1)
        throw InvalidInput("explicit scheme: 1D models only");
    return explicit_impl(model, model.to_unit(x, 0), phi0 / model.norm_field());
}

DerivativeEstimate explicit_derivatives_1d(const KernelModel& model, double x) {
    if (model.dimension() != 1)
        throw InvalidInput("explicit scheme: 1D models only");
    const double phi0 = predict_order2_exact(model, x);
    return explicit_impl(model, model.to_unit(x, 0), phi0 / model.norm_field());
}

DerivativeEstimate implicit_derivatives_1d(const KernelModel& model, double x,
                                           const ImplicitConfig& cfg) {
    if (model.dimension() != 1)
        throw InvalidInput("implicit_derivatives_1d: 1D models only");
    return implicit_1d_impl(model, model.to_unit(x, 0), cfg);
}

DerivativeEstimate implicit_derivatives_2d(const KernelModel& model,
                                           const std::vector<double>& x,
                                           const ImplicitConfig& cfg) {
    if (model.dimension() != 2)
        throw InvalidInput("implicit_derivatives_2d: 2D models only");
    if (x.size() != 2) throw InvalidInput("implicit_derivatives_2d: need a 2D point");
    const double theta = model.theta();
    const double s = std::sqrt(theta);
    const auto& pts = model.points();
    const auto& vals = model.values();
    const std::array<double, 2> u{model.to_unit(x[0], 0), model.to_unit(x[1], 1)};
    auto lag = lagrange_nd(pts, 2, theta, u.data(), model.options());
    const std::array<double, 2> xt{lag.x_tilde[0], lag.x_tilde[1]};

    const double inv_sqrt2 = 0.70710678118654752440;
    double eps = cfg.resolve_epsilon(theta);
    for (int attempt = 0;; ++attempt) {
        // rows: corrected, +-eps e1, +-eps e2, diagonal, uncorrected at x.
        // The diagonal row keeps the xy moment observable on symmetric grids.
        const std::array<std::array<double, 2>, 7> centers{{
            {xt[0], xt[1]},
            {xt[0] + eps, xt[1]},
            {xt[0] - eps, xt[1]},
            {xt[0], xt[1] + eps},
            {xt[0], xt[1] - eps},
            {xt[0] + eps * inv_sqrt2, xt[1] + eps * inv_sqrt2},
            {u[0], u[1]},
        }};
        long double Arows[7][6];
        long double Brows[7];
        Window win;
        std::vector<double> w;
        for (int r = 0; r < 7; ++r) {
            gaussian_weights(pts, 2, theta, centers[r].data(), nullptr, win, w);
            long double mm[6] = {0, 0, 0, 0, 0, 0};
            long double f = 0.0L;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const long double y0 = (pts[i * 2] - u[0]) / s;
                const long double y1 = (pts[i * 2 + 1] - u[1]) / s;
                mm[0] += w[i];
                mm[1] += y0 * w[i];
                mm[2] += y1 * w[i];
                mm[3] += y0 * y0 * w[i];
                mm[4] += y0 * y1 * w[i];
                mm[5] += y1 * y1 * w[i];
                f += vals[i] * w[i];
            }
            for (int j = 0; j < 6; ++j) Arows[r][j] = mm[j];
            Brows[r] = f;
        }
        std::array<long double, 36> N{};
        std::array<long double, 6> rhs{};
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                long double acc = 0.0L;
                for (int r = 0; r < 7; ++r) acc += Arows[r][i] * Arows[r][j];
                N[i * 6 + j] = acc;
            }
            long double acc = 0.0L;
            for (int r = 0; r < 7; ++r) acc += Arows[r][i] * Brows[r];
            rhs[i] = acc;
        }
        const double cond = std::sqrt(detail_linalg::cond_1norm<6>(N));
        if (cond < cfg.cond_limit || attempt >= cfg.max_retry) {
            auto Nsys = N;
            auto sol = rhs;
            if (!detail_linalg::solve_inplace<6>(Nsys, sol)) {
                // hull-vertex queries can collapse the rows; regularize once
                long double tr = 0.0L;
                for (int i = 0; i < 6; ++i) tr += N[i * 6 + i];
                Nsys = N;
                for (int i = 0; i < 6; ++i) Nsys[i * 6 + i] += 1e-12L * tr;
                sol = rhs;
                if (!detail_linalg::solve_inplace<6>(Nsys, sol))
                    throw IllConditioned("implicit 2D: singular local system");
            }
            DerivativeEstimate est;
            est.scheme = Scheme::implicit_system;
            est.condition = cond;
            const double fs = model.norm_field();
            const double s0 = model.axis_scale(0), s1 = model.axis_scale(1);
            const double b0 = static_cast<double>(sol[1]) / s;
            const double b1 = static_cast<double>(sol[2]) / s;
            const double c00 = static_cast<double>(sol[3]) / (s * s);
            const double c01 = static_cast<double>(sol[4]) / (s * s);  // xy coefficient
            const double c11 = static_cast<double>(sol[5]) / (s * s);
            est.grad = {b0 * fs / s0, b1 * fs / s1};
            est.hessian = {{2.0 * c00 * fs / (s0 * s0), c01 * fs / (s0 * s1),
                            c01 * fs / (s0 * s1), 2.0 * c11 * fs / (s1 * s1)}};
            est.lap = (*est.hessian)[0] + (*est.hessian)[3];
            for (double g : est.grad)
                if (!std::isfinite(g))
                    throw IllConditioned("implicit 2D: non-finite estimate");
            return est;
        }
        eps *= 2.0;
    }
}

std::vector<DerivativeEstimate> derivative_batch_1d(const KernelModel& model,
                                                    const std::vector<double>& xs,
                                                    Scheme scheme, Exec exec,
                                                    const ImplicitConfig& cfg) {
    std::vector<DerivativeEstimate> out(xs.size());
    auto eval = [&](std::size_t i) {
        if (scheme == Scheme::explicit_closed_form) {
            try {
                out[i] = explicit_derivatives_1d(model, xs[i]);
            } catch (const GradientDegenerate&) {
                out[i] = implicit_derivatives_1d(model, xs[i], cfg);  // documented fallback
            }
        } else {
            out[i] = implicit_derivatives_1d(model, xs[i], cfg);
        }
    };
    if (exec == Exec::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 32)
#endif
        for (long long i = 0; i < static_cast<long long>(xs.size()); ++i)
            eval(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < xs.size(); ++i) eval(i);
    }
    return out;
}

std::vector<DerivativeEstimate> implicit_batch_2d(const KernelModel& model,
                                                  const std::vector<double>& xy,
                                                  Exec exec, const ImplicitConfig& cfg) {
    const std::size_t nq = xy.size() / 2;
    std::vector<DerivativeEstimate> out(nq);
    if (exec == Exec::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
        for (long long i = 0; i < static_cast<long long>(nq); ++i)
            out[i] = implicit_derivatives_2d(model, {xy[2 * i], xy[2 * i + 1]}, cfg);
    } else {
        for (std::size_t i = 0; i < nq; ++i)
            out[i] = implicit_derivatives_2d(model, {xy[2 * i], xy[2 * i + 1]}, cfg);
    }
    return out;
}

}  // namespace kbr
