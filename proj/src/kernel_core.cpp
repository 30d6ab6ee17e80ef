#include "kbr/kernel_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kbr/errors.hpp"
#include "kernel_internal.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kbr {

namespace {

// Beyond this many kernel widths the shifted exponential underflows to zero,
// so the weight window can be truncated without changing any result bit.
constexpr double kWindowFactor = 27.0;

using detail_core::Window;

// 1D: smallest index range covering every point with a representable weight
// around `center`, extended to cover `x` so residual sums stay anchored.
Window weight_window(const std::vector<double>& pts, double theta,
                     double center, double x) {
    const double r = kWindowFactor * std::sqrt(theta);
    const double a = std::min(center, x) - r;
    const double b = std::max(center, x) + r;
    auto first = std::lower_bound(pts.begin(), pts.end(), a);
    auto last = std::upper_bound(pts.begin(), pts.end(), b);
    Window w;
    w.lo = first == pts.begin() ? 0 : static_cast<std::size_t>(first - pts.begin()) - 1;
    w.hi = std::min(pts.size(), static_cast<std::size_t>(last - pts.begin()) + 1);
    if (w.hi <= w.lo) {
        w.lo = 0;
        w.hi = pts.size();
    }
    return w;
}

double sq(double v) { return v * v; }

}  // namespace

void TrainingSet::validate() const {
    if (dimension < 1) throw InvalidInput("TrainingSet: dimension must be >= 1");
    if (values.size() < 3)
        throw InvalidInput("TrainingSet: need at least 3 points");
    if (points.size() != values.size() * static_cast<std::size_t>(dimension))
        throw InvalidInput("TrainingSet: points/values length mismatch");
    for (double v : points)
        if (!std::isfinite(v)) throw InvalidInput("TrainingSet: non-finite coordinate");
    for (double v : values)
        if (!std::isfinite(v)) throw InvalidInput("TrainingSet: non-finite value");
    // duplicate check via lexicographic sort
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(point(a), point(a) + dimension,
                                            point(b), point(b) + dimension);
    });
    for (std::size_t i = 1; i < n; ++i)
        if (std::equal(point(order[i - 1]), point(order[i - 1]) + dimension,
                       point(order[i])))
            throw InvalidInput("TrainingSet: duplicate points");
}

namespace detail_core {

void gaussian_weights(const std::vector<double>& pts, int dim, double theta,
                      const double* center, const double* x, Window& win,
                      std::vector<double>& w) {
    const std::size_t n = pts.size() / dim;
    if (dim == 1) {
        win = weight_window(pts, theta, center[0], x ? x[0] : center[0]);
    } else {
        win.lo = 0;
        win.hi = n;
    }
    const std::size_t m = win.hi - win.lo;
    w.resize(m);
    double emin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        double d2 = 0.0;
        for (int a = 0; a < dim; ++a) d2 += sq(pts[(win.lo + i) * dim + a] - center[a]);
        w[i] = d2 / theta;
        emin = std::min(emin, w[i]);
    }
    if (!std::isfinite(emin))
        throw NumericalUnderflow("kernel_weights: exponent overflow (theta too small)");
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        w[i] = std::exp(-(w[i] - emin));
        sum += w[i];
    }
    if (sum <= 0.0 || !std::isfinite(sum))
        throw NumericalUnderflow("kernel_weights: all weights underflow");
    for (std::size_t i = 0; i < m; ++i) w[i] /= sum;
}

// g(xt) = sum_i (x_i - x) P_i(xt) is strictly increasing in xt, so Newton is
// combined with an expanding bracket and bisection. Iterates to the noise
// floor, well past tol, because downstream correction coefficients divide by
// quantities of order the local variance.
Solve1D lagrange_1d(const std::vector<double>& pts, double theta, double x,
                    const LagrangeOptions& opts) {
    Solve1D s;
    const double sqt = std::sqrt(theta);
    double xt = x;
    Window win;
    std::vector<double> w;
    auto eval = [&](double c, double& g, double& var) {
        gaussian_weights(pts, 1, theta, &c, &x, win, w);
        g = 0.0;
        double mean = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            g += (pts[win.lo + i] - x) * w[i];
            mean += pts[win.lo + i] * w[i];
        }
        var = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) var += sq(pts[win.lo + i] - mean) * w[i];
    };
    double g, var;
    eval(xt, g, var);
    double best_res = std::abs(g), best_xt = xt;
    double blo = std::numeric_limits<double>::quiet_NaN();
    double bhi = std::numeric_limits<double>::quiet_NaN();
    if (g > 0) bhi = xt;
    if (g < 0) blo = xt;
    int it = 1;
    while (it < opts.max_iter && std::abs(g) > 1e-16) {
        double xt2;
        const bool bracketed = !std::isnan(blo) && !std::isnan(bhi);
        double step = var > 0 ? -g * theta / (2.0 * var)
                              : -(g > 0 ? 1.0 : -1.0) * sqt;
        step = std::clamp(step, -4.0 * sqt, 4.0 * sqt);
        if (!bracketed) {
            xt2 = xt + step;
        } else {
            xt2 = xt + step;
            if (!(blo < xt2 && xt2 < bhi) || step == 0.0) xt2 = 0.5 * (blo + bhi);
        }
        eval(xt2, g, var);
        if (g > 0) bhi = xt2;
        if (g < 0) blo = xt2;
        xt = xt2;
        if (std::abs(g) < best_res) {
            best_res = std::abs(g);
            best_xt = xt;
        }
        ++it;
        if (bracketed && (bhi - blo) < 1e-17 * std::max(1.0, std::abs(bhi))) break;
    }
    if (std::abs(g) > best_res) xt = best_xt;
    eval(xt, g, var);
    s.x_tilde = xt;
    s.win = win;
    s.w = std::move(w);
    s.iterations = it;
    s.residual = std::abs(g);
    s.converged = s.residual <= opts.tol_moment;
    return s;
}

// Damped Newton on the monotone moment map; Jacobian is (2/theta) times the
// weighted coordinate covariance, symmetric positive semi-definite.
SolveND lagrange_nd(const std::vector<double>& pts, int dim, double theta,
                    const double* x, const LagrangeOptions& opts) {
    const std::size_t n = pts.size() / dim;
    SolveND s;
    std::vector<double> xt(x, x + dim);
    Window win;
    std::vector<double> w;
    std::vector<double> g(dim), mean(dim);
    std::vector<double> cov(dim * dim);
    auto eval = [&](const std::vector<double>& c) {
        gaussian_weights(pts, dim, theta, c.data(), x, win, w);
        std::fill(g.begin(), g.end(), 0.0);
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < dim; ++a) {
                g[a] += (pts[i * dim + a] - x[a]) * w[i];
                mean[a] += pts[i * dim + a] * w[i];
            }
        std::fill(cov.begin(), cov.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < dim; ++a)
                for (int b = 0; b < dim; ++b)
                    cov[a * dim + b] += (pts[i * dim + a] - mean[a]) *
                                        (pts[i * dim + b] - mean[b]) * w[i];
        double r = 0.0;
        for (int a = 0; a < dim; ++a) r += sq(g[a]);
        return std::sqrt(r);
    };
    double res = eval(xt);
    double best_res = res;
    std::vector<double> best_xt = xt;
    const double sqt = std::sqrt(theta);
    int it = 1;
    while (it < opts.max_iter && res > 1e-16) {
        // solve cov * step = -g * theta/2 with Tikhonov fallback
        std::vector<double> A = cov, rhs(dim);
        for (int a = 0; a < dim; ++a) rhs[a] = -g[a] * theta / 2.0;
        double tr = 0.0;
        for (int a = 0; a < dim; ++a) tr += A[a * dim + a];
        for (int a = 0; a < dim; ++a) A[a * dim + a] += 1e-14 * std::max(tr, 1e-300);
        // tiny dense solve (dim <= 2 in practice)
        std::vector<double> step(dim, 0.0);
        if (dim == 1) {
            step[0] = rhs[0] / A[0];
        } else {
            // partial-pivot elimination
            std::vector<int> piv(dim);
            std::iota(piv.begin(), piv.end(), 0);
            for (int k = 0; k < dim; ++k) {
                int p = k;
                for (int i = k + 1; i < dim; ++i)
                    if (std::abs(A[i * dim + k]) > std::abs(A[p * dim + k])) p = i;
                if (p != k) {
                    for (int j = 0; j < dim; ++j) std::swap(A[k * dim + j], A[p * dim + j]);
                    std::swap(rhs[k], rhs[p]);
                }
                for (int i = k + 1; i < dim; ++i) {
                    double f = A[i * dim + k] / A[k * dim + k];
                    for (int j = k; j < dim; ++j) A[i * dim + j] -= f * A[k * dim + j];
                    rhs[i] -= f * rhs[k];
                }
            }
            for (int k = dim - 1; k >= 0; --k) {
                double acc = rhs[k];
                for (int j = k + 1; j < dim; ++j) acc -= A[k * dim + j] * step[j];
                step[k] = acc / A[k * dim + k];
            }
        }
        double ns = 0.0;
        for (int a = 0; a < dim; ++a) ns += sq(step[a]);
        ns = std::sqrt(ns);
        if (ns > 4.0 * sqt)
            for (int a = 0; a < dim; ++a) step[a] *= 4.0 * sqt / ns;
        // backtracking on the residual norm
        double lambda = 1.0;
        std::vector<double> trial(dim);
        double res2 = res;
        for (int bt = 0; bt < 6; ++bt) {
            for (int a = 0; a < dim; ++a) trial[a] = xt[a] + lambda * step[a];
            res2 = eval(trial);
            if (res2 < res || bt == 5) break;
            lambda *= 0.5;
        }
        xt = trial;
        res = res2;
        if (res < best_res) {
            best_res = res;
            best_xt = xt;
        }
        ++it;
        if (res >= best_res && it > 20 && best_res <= opts.tol_moment) break;
    }
    if (res > best_res) {
        xt = best_xt;
        res = eval(xt);
    }
    s.x_tilde = xt;
    s.w = w;
    s.iterations = it;
    s.residual = res;
    s.converged = res <= opts.tol_moment;
    return s;
}

}  // namespace detail_core

using detail_core::gaussian_weights;
using detail_core::lagrange_1d;
using detail_core::lagrange_nd;

KernelModel::KernelModel(const TrainingSet& data, double theta, LagrangeOptions opts)
    : dim_(data.dimension), n_(data.size()), theta_(theta), opts_(opts) {
    data.validate();
    if (!(theta > 0.0) || !std::isfinite(theta))
        throw InvalidConfig("KernelModel: theta must be positive");

    lo_.assign(dim_, std::numeric_limits<double>::infinity());
    scale_.assign(dim_, 0.0);
    std::vector<double> hi(dim_, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n_; ++i)
        for (int a = 0; a < dim_; ++a) {
            lo_[a] = std::min(lo_[a], data.point(i)[a]);
            hi[a] = std::max(hi[a], data.point(i)[a]);
        }
    for (int a = 0; a < dim_; ++a) {
        scale_[a] = hi[a] - lo_[a];
        if (scale_[a] <= 0.0)
            throw InvalidInput("KernelModel: degenerate domain extent on an axis");
    }

    field_scale_ = 0.0;
    for (double v : data.values) field_scale_ = std::max(field_scale_, std::abs(v));
    if (field_scale_ <= 0.0)
        throw InvalidInput("KernelModel: all-zero field cannot be normalized");

    pts_.resize(n_ * dim_);
    vals_.resize(n_);
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    if (dim_ == 1) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return data.points[a] < data.points[b];
        });
    }
    for (std::size_t i = 0; i < n_; ++i) {
        for (int a = 0; a < dim_; ++a)
            pts_[i * dim_ + a] = to_unit(data.point(order[i])[a], a);
        vals_[i] = data.values[order[i]] / field_scale_;
    }
    precompute_corrections();
}

// Every training point gets its own converged multiplier; the resulting
// c_k = (phi_k - phi1(x_k)) / Theta(x_k) equals -c for any quadratic field.
// The numerator is computed with the local least-squares slope times the
// residual first-moment defect subtracted, which keeps c_k accurate even
// when Theta(x_k) is many orders below the coordinate scale.
void KernelModel::precompute_corrections() {
    ck_.assign(n_, 0.0);
    rk_.assign(n_, 0.0);
    tk_.assign(n_, 0.0);
    keep_.assign(n_, 0);
    std::vector<std::uint8_t> conv(n_, 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (long long kk = 0; kk < static_cast<long long>(n_); ++kk) {
        const std::size_t k = static_cast<std::size_t>(kk);
        const double* xk = pts_.data() + k * dim_;
        std::size_t lo = 0, m = n_;
        std::vector<double> w;
        if (dim_ == 1) {
            auto s = lagrange_1d(pts_, theta_, xk[0], opts_);
            conv[k] = s.converged;
            lo = s.win.lo;
            m = s.win.hi - s.win.lo;
            w = std::move(s.w);
        } else {
            auto s = lagrange_nd(pts_, dim_, theta_, xk, opts_);
            conv[k] = s.converged;
            w = std::move(s.w);
        }
        // trace second-moment error, defect, and compensated residual
        double var = 0.0;
        std::vector<double> defect(dim_, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double d2 = 0.0;
            for (int a = 0; a < dim_; ++a) {
                const double d = pts_[(lo + i) * dim_ + a] - xk[a];
                d2 += sq(d);
                defect[a] += d * w[i];
            }
            var += d2 * w[i];
        }
        double num = 0.0;
        if (dim_ == 1) {
            double swdv = 0.0, sdv = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double d = pts_[lo + i] - xk[0];
                const double dv = vals_[lo + i] - vals_[k];
                sdv += dv * w[i];
                swdv += d * dv * w[i];
            }
            const double bhat = var > 0 ? swdv / var : 0.0;
            num = -(sdv - bhat * defect[0]);
        } else {
            // least-squares slope vector through (x_k, phi_k)
            std::vector<double> cov(dim_ * dim_, 0.0), rhs(dim_, 0.0);
            double sdv = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double dv = vals_[lo + i] - vals_[k];
                sdv += dv * w[i];
                for (int a = 0; a < dim_; ++a) {
                    const double da = pts_[(lo + i) * dim_ + a] - xk[a];
                    rhs[a] += da * dv * w[i];
                    for (int b = 0; b < dim_; ++b)
                        cov[a * dim_ + b] += da * (pts_[(lo + i) * dim_ + b] - xk[b]) * w[i];
                }
            }
            double tr = 0.0;
            for (int a = 0; a < dim_; ++a) tr += cov[a * dim_ + a];
            for (int a = 0; a < dim_; ++a) cov[a * dim_ + a] += 1e-14 * std::max(tr, 1e-300);
            std::vector<double> bhat(dim_, 0.0);
            if (dim_ == 2) {
                const double det = cov[0] * cov[3] - cov[1] * cov[2];
                if (det != 0.0) {
                    bhat[0] = (rhs[0] * cov[3] - rhs[1] * cov[1]) / det;
                    bhat[1] = (cov[0] * rhs[1] - cov[2] * rhs[0]) / det;
                }
            } else if (cov[0] > 0) {
                bhat[0] = rhs[0] / cov[0];
            }
            double comp = 0.0;
            for (int a = 0; a < dim_; ++a) comp += bhat[a] * defect[a];
            num = -(sdv - comp);
        }
        rk_[k] = num;
        tk_[k] = var;
        ck_[k] = var > 0 ? num / var : 0.0;
        keep_[k] = conv[k] && var > 0;
    }

    // Points whose Theta(x_k) sits far below the population scale carry
    // 0/0-style coefficients; exclude them (the survivor average is
    // renormalized at prediction time).
    double tk_scale = 0.0;
    for (double t : tk_) tk_scale = std::max(tk_scale, t);
    for (std::size_t k = 0; k < n_; ++k)
        if (tk_[k] <= 1e-4 * tk_scale) keep_[k] = 0;
}

namespace {

LagrangeResult to_result(const KernelModel& model, const std::vector<double>& x_unit,
                         detail_core::Solve1D&& s) {
    LagrangeResult r;
    r.x_tilde = {model.from_unit(s.x_tilde, 0)};
    r.weights.center = r.x_tilde;
    r.weights.w.assign(model.size(), 0.0);
    for (std::size_t i = 0; i < s.w.size(); ++i) r.weights.w[s.win.lo + i] = s.w[i];
    r.iterations = s.iterations;
    r.residual = s.residual;
    r.converged = s.converged;
    const auto& pts = model.points();
    const double sqt = std::sqrt(model.theta());
    r.extrapolated = x_unit[0] < pts.front() - sqt || x_unit[0] > pts.back() + sqt;
    return r;
}

std::vector<double> to_unit_vec(const KernelModel& model, const std::vector<double>& x) {
    if (x.size() != static_cast<std::size_t>(model.dimension()))
        throw InvalidInput("query dimension mismatch");
    std::vector<double> u(x.size());
    for (int a = 0; a < model.dimension(); ++a) {
        if (!std::isfinite(x[a])) throw InvalidInput("non-finite query coordinate");
        u[a] = model.to_unit(x[a], a);
    }
    return u;
}

}  // namespace

Weights kernel_weights(const KernelModel& model, const std::vector<double>& center) {
    const auto c = to_unit_vec(model, center);
    Window win;
    std::vector<double> w;
    gaussian_weights(model.points(), model.dimension(), model.theta(), c.data(),
                     nullptr, win, w);
    Weights out;
    out.center = center;
    out.w.assign(model.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) out.w[win.lo + i] = w[i];
    return out;
}

LagrangeResult solve_lagrange_multiplier(const KernelModel& model,
                                         const std::vector<double>& x, int max_iter) {
    auto u = to_unit_vec(model, x);
    LagrangeOptions opts = model.options();
    opts.max_iter = max_iter;
    if (model.dimension() == 1) {
        auto s = lagrange_1d(model.points(), model.theta(), u[0], opts);
        return to_result(model, u, std::move(s));
    }
    auto s = lagrange_nd(model.points(), model.dimension(), model.theta(), u.data(), opts);
    LagrangeResult r;
    r.x_tilde.resize(model.dimension());
    for (int a = 0; a < model.dimension(); ++a) r.x_tilde[a] = model.from_unit(s.x_tilde[a], a);
    r.weights.center = r.x_tilde;
    r.weights.w = std::move(s.w);
    r.iterations = s.iterations;
    r.residual = s.residual;
    r.converged = s.converged;
    r.extrapolated = false;
    const auto& pts = model.points();
    const double sqt = std::sqrt(model.theta());
    for (int a = 0; a < model.dimension(); ++a) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < model.size(); ++i) {
            lo = std::min(lo, pts[i * model.dimension() + a]);
            hi = std::max(hi, pts[i * model.dimension() + a]);
        }
        if (u[a] < lo - sqt || u[a] > hi + sqt) r.extrapolated = true;
    }
    return r;
}

LagrangeResult solve_lagrange_multiplier(const KernelModel& model, double x, int max_iter) {
    return solve_lagrange_multiplier(model, std::vector<double>{x}, max_iter);
}

double predict_order0(const KernelModel& model, const std::vector<double>& x) {
    const auto u = to_unit_vec(model, x);
    Window win;
    std::vector<double> w;
    gaussian_weights(model.points(), model.dimension(), model.theta(), u.data(),
                     nullptr, win, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += model.values()[win.lo + i] * w[i];
    return acc * model.norm_field();
}

double predict_order1(const KernelModel& model, const std::vector<double>& x,
                      const LagrangeResult& lag) {
    if (!lag.converged)
        throw NotConverged("predict_order1: Lagrange solve did not converge", lag.residual);
    double acc = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i)
        acc += model.values()[i] * lag.weights.w[i];
    return acc * model.norm_field();
}

MomentError moment_errors(const KernelModel& model, const std::vector<double>& x,
                          const LagrangeResult& lag) {
    if (!lag.converged)
        throw NotConverged("moment_errors: Lagrange solve did not converge", lag.residual);
    const auto u = to_unit_vec(model, x);
    const int dim = model.dimension();
    const auto& pts = model.points();
    MomentError me;
    me.theta_corrected.assign(dim, 0.0);
    me.theta_raw.assign(dim, 0.0);
    me.theta_train.assign(model.size(), 0.0);
    Window win;
    std::vector<double> w0;
    gaussian_weights(pts, dim, model.theta(), u.data(), nullptr, win, w0);
    std::vector<double> s2(dim, 0.0);
    for (std::size_t i = 0; i < model.size(); ++i)
        for (int a = 0; a < dim; ++a) {
            const double xi = pts[i * dim + a];
            me.theta_corrected[a] += (xi - u[a]) * (xi + u[a]) * lag.weights.w[i];
            s2[a] += xi * xi * lag.weights.w[i];
        }
    for (std::size_t i = 0; i < w0.size(); ++i)
        for (int a = 0; a < dim; ++a) {
            const double xi = pts[(win.lo + i) * dim + a];
            me.theta_raw[a] += (xi - u[a]) * (xi + u[a]) * w0[i];
        }
    for (std::size_t k = 0; k < model.size(); ++k) {
        double t = 0.0;
        for (int a = 0; a < dim; ++a) t += s2[a] - sq(pts[k * dim + a]);
        me.theta_train[k] = t;
    }
    return me;
}

namespace {

// Shared by predict_order2_exact and the batch path: one Lagrange solve plus
// the compensated first-order value and the survivor-averaged correction.
double predict2_unit(const KernelModel& model, const double* u) {
    const int dim = model.dimension();
    const auto& pts = model.points();
    const auto& vals = model.values();
    std::size_t lo = 0, m = model.size();
    std::vector<double> w;
    if (dim == 1) {
        auto s = lagrange_1d(pts, model.theta(), u[0], model.options());
        lo = s.win.lo;
        m = s.win.hi - s.win.lo;
        w = std::move(s.w);
    } else {
        auto s = lagrange_nd(pts, dim, model.theta(), u, model.options());
        w = std::move(s.w);
    }
    double var = 0.0, phi1r = 0.0;
    std::vector<double> defect(dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double d2 = 0.0;
        for (int a = 0; a < dim; ++a) {
            const double d = pts[(lo + i) * dim + a] - u[a];
            d2 += sq(d);
            defect[a] += d * w[i];
        }
        var += d2 * w[i];
        phi1r += vals[lo + i] * w[i];
    }
    // compensated first-order value
    double phi1 = phi1r;
    if (var > 0) {
        if (dim == 1) {
            double swdv = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                swdv += (pts[lo + i] - u[0]) * (vals[lo + i] - phi1r) * w[i];
            phi1 -= swdv / var * defect[0];
        } else {
            std::vector<double> cov(dim * dim, 0.0), rhs(dim, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (int a = 0; a < dim; ++a) {
                    const double da = pts[(lo + i) * dim + a] - u[a];
                    rhs[a] += da * (vals[lo + i] - phi1r) * w[i];
                    for (int b = 0; b < dim; ++b)
                        cov[a * dim + b] += da * (pts[(lo + i) * dim + b] - u[b]) * w[i];
                }
            if (dim == 2) {
                const double det = cov[0] * cov[3] - cov[1] * cov[2];
                if (det != 0.0) {
                    const double b0 = (rhs[0] * cov[3] - rhs[1] * cov[1]) / det;
                    const double b1 = (cov[0] * rhs[1] - cov[2] * rhs[0]) / det;
                    phi1 -= b0 * defect[0] + b1 * defect[1];
                }
            }
        }
    }
    const auto& ck = model.correction_coeff();
    const auto& keep = model.correction_kept();
    double sw = 0.0, sc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!keep[lo + i]) continue;
        sw += w[i];
        sc += ck[lo + i] * w[i];
    }
    if (sw <= 1e-300) return phi1;  // correction degenerate: first-order value
    return phi1 + var * sc / sw;
}

}  // namespace

double predict_order2_exact(const KernelModel& model, const std::vector<double>& x) {
    const auto u = to_unit_vec(model, x);
    return predict2_unit(model, u.data()) * model.norm_field();
}

double predict_order2_exact(const KernelModel& model, double x) {
    return predict_order2_exact(model, std::vector<double>{x});
}

std::vector<double> predict_order2_batch(const KernelModel& model,
                                         const std::vector<double>& queries,
                                         Exec exec) {
    const int dim = model.dimension();
    const std::size_t nq = queries.size() / dim;
    std::vector<double> out(nq);
    if (exec == Exec::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 32)
#endif
        for (long long i = 0; i < static_cast<long long>(nq); ++i) {
            std::vector<double> u(dim);
            for (int a = 0; a < dim; ++a) u[a] = model.to_unit(queries[i * dim + a], a);
            out[i] = predict2_unit(model, u.data()) * model.norm_field();
        }
    } else {
        std::vector<double> u(dim);
        for (std::size_t i = 0; i < nq; ++i) {
            for (int a = 0; a < dim; ++a) u[a] = model.to_unit(queries[i * dim + a], a);
            out[i] = predict2_unit(model, u.data()) * model.norm_field();
        }
    }
    return out;
}

namespace detail {

double predict_order2_self(const KernelModel& model, const std::vector<double>& x) {
    const auto u = to_unit_vec(model, x);
    const int dim = model.dimension();
    const auto& pts = model.points();
    const auto& vals = model.values();
    std::size_t lo = 0, m = model.size();
    std::vector<double> w;
    if (dim == 1) {
        auto s = lagrange_1d(pts, model.theta(), u[0], model.options());
        lo = s.win.lo;
        m = s.win.hi - s.win.lo;
        w = std::move(s.w);
    } else {
        auto s = lagrange_nd(pts, dim, model.theta(), u.data(), model.options());
        w = std::move(s.w);
    }
    const auto& rk = model.residual_order1();
    double phi1 = 0.0, corr = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        phi1 += vals[lo + i] * w[i];
        corr += rk[lo + i] * w[i];
    }
    return (phi1 + corr) * model.norm_field();
}

}  // namespace detail

}  // namespace kbr
