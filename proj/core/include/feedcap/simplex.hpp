#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "feedcap/errors.hpp"

namespace feedcap {

// Row-sum slack accepted at construction; rows inside the slack are
// renormalized to unit mass, anything worse is rejected.
inline constexpr double kRowSumTol = 1e-9;

struct Alphabet {
    std::size_t size = 0;
    std::string label;
};

// Probability vector. Entries nonnegative, total within kRowSumTol of 1 at
// construction, then divided through by the exact sum.
class SimplexVector {
  public:
    SimplexVector() = default;

    explicit SimplexVector(std::vector<double> w) : w_(std::move(w)) {
        if (w_.empty()) throw ValidationError("simplex vector must be non-empty");
        double sum = 0.0;
        for (std::size_t i = 0; i < w_.size(); ++i) {
            if (!(w_[i] >= 0.0) || std::isnan(w_[i]))
                throw ValidationError("simplex entry " + std::to_string(i) + " is negative or NaN");
            sum += w_[i];
        }
        if (std::abs(sum - 1.0) > kRowSumTol)
            throw ValidationError("simplex mass " + std::to_string(sum) +
                                  " deviates from 1 beyond tolerance");
        for (auto& v : w_) v /= sum;
    }

    static SimplexVector uniform(std::size_t n) {
        return SimplexVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static SimplexVector dirac(std::size_t n, std::size_t i) {
        std::vector<double> w(n, 0.0);
        w.at(i) = 1.0;
        SimplexVector s;
        s.w_ = std::move(w);
        return s;
    }

    // For rows produced by internal arithmetic that are normalized by
    // construction; divides by the sum without the tolerance gate.
    static SimplexVector renormalized(std::vector<double> w) {
        double sum = 0.0;
        for (double v : w) sum += v;
        if (!(sum > 0.0))
            throw ValidationError("cannot renormalize a zero-mass vector");
        for (auto& v : w) v /= sum;
        SimplexVector s;
        s.w_ = std::move(w);
        return s;
    }

    double operator[](std::size_t i) const { return w_[i]; }
    std::size_t size() const { return w_.size(); }
    const std::vector<double>& weights() const { return w_; }
    auto begin() const { return w_.begin(); }
    auto end() const { return w_.end(); }

    bool is_dirac(double tol = 1e-12) const {
        for (double v : w_)
            if (v > tol && v < 1.0 - tol) return false;
        return true;
    }

    // index of the unit entry; -1 when not Dirac
    long dirac_index(double tol = 1e-12) const {
        for (std::size_t i = 0; i < w_.size(); ++i)
            if (w_[i] >= 1.0 - tol) return static_cast<long>(i);
        return -1;
    }

  private:
    std::vector<double> w_;
};

inline double l1_distance(const SimplexVector& a, const SimplexVector& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

inline double linf_distance(const SimplexVector& a, const SimplexVector& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

// total variation = half the L1 gap
inline double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return 0.5 * d;
}

// p*log2(p/q) with the 0*log0 = 0 convention; p > 0 with q == 0 is +inf
inline double xlog2_ratio(double p, double q) {
    if (p <= 0.0) return 0.0;
    return p * (std::log2(p) - std::log2(q));
}

} // namespace feedcap
