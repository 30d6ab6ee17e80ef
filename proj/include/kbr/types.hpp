#pragma once

#include <cstddef>
#include <vector>

namespace kbr {

// Scattered training data in raw (unnormalized) coordinates.
// points is row-major: point i occupies [i*dimension, (i+1)*dimension).
struct TrainingSet {
    std::vector<double> points;
    std::vector<double> values;
    int dimension = 1;

    std::size_t size() const { return values.size(); }
    const double* point(std::size_t i) const { return points.data() + i * dimension; }

    // Throws InvalidInput unless: >= 3 points, matching lengths, finite
    // entries, pairwise-distinct points.
    void validate() const;
};

// Normalized kernel weights, one per training point, produced at `center`.
struct Weights {
    std::vector<double> w;
    std::vector<double> center;
};

// Outcome of the first-moment (Lagrange multiplier) solve for one query.
struct LagrangeResult {
    std::vector<double> x_tilde;  // shifted kernel center
    Weights weights;              // kernel weights at x_tilde
    int iterations = 0;
    double residual = 0.0;        // || sum_i x_i w_i - x ||
    bool converged = false;
    bool extrapolated = false;    // query beyond the hull by more than sqrt(theta)
};

// Second-moment errors at a query point (per axis) and per training point.
struct MomentError {
    std::vector<double> theta_corrected;  // Theta(x), one entry per axis
    std::vector<double> theta_raw;        // Theta^(0)(x), uncorrected weights
    std::vector<double> theta_train;      // Theta(x_k) for every training point
};

}  // namespace kbr
