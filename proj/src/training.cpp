#include "kbr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "kbr/errors.hpp"

namespace kbr {

namespace {

std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xd1342543de82ef95ULL * (stream + 1));
    splitmix64(s);
    state_ = s;
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

double typical_distance(const std::vector<double>& points, int dimension, int knn) {
    if (dimension < 1) throw InvalidInput("typical_distance: bad dimension");
    const std::size_t n = points.size() / dimension;
    if (n < static_cast<std::size_t>(knn) + 1)
        throw InsufficientData("typical_distance: need at least knn+1 points");
    double total = 0.0;
    if (dimension == 1) {
        std::vector<double> s(points);
        std::sort(s.begin(), s.end());
        std::vector<double> d;
        for (std::size_t i = 0; i < n; ++i) {
            d.clear();
            const std::size_t lo = i > static_cast<std::size_t>(knn) ? i - knn : 0;
            const std::size_t hi = std::min(n, i + knn + 1);
            for (std::size_t j = lo; j < hi; ++j)
                if (j != i) d.push_back(std::abs(s[j] - s[i]));
            std::partial_sort(d.begin(), d.begin() + knn, d.end());
            double mean = 0.0;
            for (int k = 0; k < knn; ++k) mean += d[k];
            total += mean / knn;
        }
        return total / static_cast<double>(n);
    }
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int a = 0; a < dimension; ++a) {
                const double d = points[i * dimension + a] - points[j * dimension + a];
                acc += d * d;
            }
            d2[j] = acc;
        }
        d2[i] = std::numeric_limits<double>::infinity();
        std::partial_sort(d2.begin(), d2.begin() + knn, d2.end());
        double mean = 0.0;
        for (int k = 0; k < knn; ++k) mean += std::sqrt(d2[k]);
        total += mean / knn;
    }
    return total / static_cast<double>(n);
}

namespace {

struct Split {
    std::vector<std::size_t> train, val;
};

Split split_indices(std::size_t n, double ratio, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed, 0x517);  // dedicated stream for splitting
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.next_u64() % (i + 1);
        std::swap(idx[i], idx[j]);
    }
    Split s;
    std::size_t ntr = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n)));
    ntr = std::clamp<std::size_t>(ntr, 3, n - 1);
    s.train.assign(idx.begin(), idx.begin() + ntr);
    s.val.assign(idx.begin() + ntr, idx.end());
    return s;
}

TrainingSet subset(const TrainingSet& data, const std::vector<std::size_t>& idx) {
    TrainingSet out;
    out.dimension = data.dimension;
    out.points.reserve(idx.size() * data.dimension);
    out.values.reserve(idx.size());
    for (std::size_t i : idx) {
        for (int a = 0; a < data.dimension; ++a) out.points.push_back(data.point(i)[a]);
        out.values.push_back(data.values[i]);
    }
    return out;
}

FitResult sweep_fit(const TrainingSet& data, const SweepConfig& cfg,
                    const std::vector<double>& ks) {
    data.validate();
    if (!(cfg.k_min > 0) || !(cfg.k_max > cfg.k_min) ||
        !(cfg.split_ratio > 0 && cfg.split_ratio < 1))
        throw InvalidConfig("fit_theta: invalid sweep configuration");

    // d_typ on the normalized geometry: the selected k index is scale-free
    std::vector<double> lo(data.dimension, std::numeric_limits<double>::infinity());
    std::vector<double> hi(data.dimension, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < data.size(); ++i)
        for (int a = 0; a < data.dimension; ++a) {
            lo[a] = std::min(lo[a], data.point(i)[a]);
            hi[a] = std::max(hi[a], data.point(i)[a]);
        }
    std::vector<double> unit_pts(data.points.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        for (int a = 0; a < data.dimension; ++a) {
            const double s = hi[a] - lo[a];
            if (s <= 0) throw InvalidInput("fit_theta: degenerate axis");
            unit_pts[i * data.dimension + a] = (data.point(i)[a] - lo[a]) / s;
        }
    const double d_typ = typical_distance(unit_pts, data.dimension, cfg.knn);

    const auto split = split_indices(data.size(), cfg.split_ratio, cfg.seed);
    const TrainingSet train = subset(data, split.train);

    double fmax = 0.0;
    for (double v : data.values) fmax = std::max(fmax, std::abs(v));
    if (fmax <= 0) throw InvalidInput("fit_theta: all-zero field");

    std::vector<SweepPoint> sweep;
    std::optional<double> best_rmse;
    double k_opt = 0.0;
    for (double k : ks) {
        const double theta = k * d_typ * d_typ;
        SweepPoint sp{k, theta, 0.0};
        try {
            KernelModel m(train, theta);
            double acc = 0.0;
            std::vector<double> q(data.dimension);
            for (std::size_t i : split.val) {
                for (int a = 0; a < data.dimension; ++a) q[a] = data.point(i)[a];
                const double p = predict_order2_exact(m, q);
                acc += (p - data.values[i]) * (p - data.values[i]);
            }
            sp.val_rmse = std::sqrt(acc / static_cast<double>(split.val.size())) / fmax;
        } catch (const Error&) {
            sp.val_rmse = std::numeric_limits<double>::quiet_NaN();
            sweep.push_back(sp);
            continue;
        }
        sweep.push_back(sp);
        if (!best_rmse || sp.val_rmse < *best_rmse) {  // strict: smallest k wins ties
            best_rmse = sp.val_rmse;
            k_opt = k;
        }
    }
    if (!best_rmse)
        throw FitFailed("fit_theta: every sweep point failed");
    FitResult out{KernelModel(data, k_opt * d_typ * d_typ), k_opt, d_typ,
                  std::move(sweep)};
    return out;
}

std::vector<double> log_grid(double a, double b, int n) {
    std::vector<double> ks(n);
    if (n == 1) {
        ks[0] = a;
        return ks;
    }
    const double la = std::log(a), lb = std::log(b);
    for (int i = 0; i < n; ++i) ks[i] = std::exp(la + (lb - la) * i / (n - 1));
    return ks;
}

}  // namespace

FitResult fit_theta(const TrainingSet& data, const SweepConfig& cfg) {
    if (cfg.n_sweep < 2) throw InvalidConfig("fit_theta: n_sweep must be >= 2");
    auto out = sweep_fit(data, cfg, log_grid(cfg.k_min, cfg.k_max, cfg.n_sweep));
    if (cfg.refine) {
        const double k0 = std::max(out.k_opt / 2.6, cfg.k_min);
        const double k1 = std::min(out.k_opt * 2.6, cfg.k_max);
        auto refined = sweep_fit(data, cfg, log_grid(k0, k1, cfg.n_sweep));
        out = std::move(refined);
    }
    return out;
}

FitResult fit_theta_warm(const TrainingSet& data, const SweepConfig& cfg,
                         double k_prev, int n_local) {
    double k0 = std::max(cfg.k_min, k_prev / 4.0);
    double k1 = std::min(cfg.k_max, k_prev * 4.0);
    if (!(k0 < k1)) {
        k0 = cfg.k_min;
        k1 = cfg.k_max;
    }
    return sweep_fit(data, cfg, log_grid(k0, k1, std::max(2, n_local)));
}

std::vector<double> add_noise(const std::vector<double>& values, const NoiseConfig& cfg) {
    if (cfg.s < 0) throw InvalidConfig("add_noise: s must be >= 0");
    std::vector<double> out(values);
    if (cfg.s == 0.0) return out;
    Rng rng(cfg.seed, 0xA01);
    const double sigma = cfg.sigma();
    for (double& v : out) v *= 1.0 + sigma * rng.normal();
    return out;
}

}  // namespace kbr
