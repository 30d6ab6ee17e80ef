#pragma once

// Fixed-size dense solves for the implicit derivative systems. Extended
// precision: the perturbed rows differ only at the epsilon scale, so the
// normal-equation path needs the extra mantissa bits.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace kbr::detail_linalg {

// Partial-pivot elimination, in place. Returns false on an exact zero pivot.
template <std::size_t N>
bool solve_inplace(std::array<long double, N * N>& A, std::array<long double, N>& b) {
    for (std::size_t k = 0; k < N; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < N; ++i)
            if (std::fabs(A[i * N + k]) > std::fabs(A[p * N + k])) p = i;
        if (A[p * N + k] == 0.0L) return false;
        if (p != k) {
            for (std::size_t j = 0; j < N; ++j) std::swap(A[k * N + j], A[p * N + j]);
            std::swap(b[k], b[p]);
        }
        for (std::size_t i = k + 1; i < N; ++i) {
            const long double f = A[i * N + k] / A[k * N + k];
            for (std::size_t j = k; j < N; ++j) A[i * N + j] -= f * A[k * N + j];
            b[i] -= f * b[k];
        }
    }
    for (std::size_t k = N; k-- > 0;) {
        long double acc = b[k];
        for (std::size_t j = k + 1; j < N; ++j) acc -= A[k * N + j] * b[j];
        b[k] = acc / A[k * N + k];
    }
    return true;
}

// 1-norm condition estimate via explicit inverse (N is tiny).
template <std::size_t N>
double cond_1norm(const std::array<long double, N * N>& A) {
    long double na = 0.0L;
    for (std::size_t j = 0; j < N; ++j) {
        long double c = 0.0L;
        for (std::size_t i = 0; i < N; ++i) c += std::fabs(A[i * N + j]);
        na = std::max(na, c);
    }
    long double ninv = 0.0L;
    for (std::size_t j = 0; j < N; ++j) {
        std::array<long double, N * N> M = A;
        std::array<long double, N> e{};
        e[j] = 1.0L;
        if (!solve_inplace<N>(M, e)) return std::numeric_limits<double>::infinity();
        long double c = 0.0L;
        for (std::size_t i = 0; i < N; ++i) c += std::fabs(e[i]);
        ninv = std::max(ninv, c);
    }
    return static_cast<double>(na * ninv);
}

}  // namespace kbr::detail_linalg
