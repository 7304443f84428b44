#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace feedcap {

// Philox4x32-10 counter block cipher. Counter-based so any (stream, draw)
// coordinate can be generated independently of evaluation order; parallel
// consumers reproduce serial results exactly.
inline std::array<std::uint32_t, 4> philox4x32(std::uint64_t key,
                                               std::array<std::uint32_t, 4> ctr) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
        const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
               static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
               static_cast<std::uint32_t>(p0)};
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
    }
    return ctr;
}

// One logical stream = (seed, stream id pair); draws are indexed by an
// internal counter. Cheap to construct, no shared state.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t id0, std::uint64_t id1 = 0)
        : seed_(seed), id0_(id0), id1_(id1) {}

    std::uint64_t next_u64() {
        const std::uint64_t n = n_++;
        // pack (id0, id1 low bits mixed with draw index) into the 128-bit counter
        const auto block = philox4x32(
            seed_ ^ (id1_ * 0x9E3779B97F4A7C15ull),
            {static_cast<std::uint32_t>(id0_), static_cast<std::uint32_t>(id0_ >> 32),
             static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32)});
        return (static_cast<std::uint64_t>(block[0]) << 32) | block[1];
    }

    // uniform in [0,1) with 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // index sampled from an explicit probability row (cdf scan)
    template <class Row>
    std::size_t sample(const Row& row) {
        const double u = uniform();
        double acc = 0.0;
        std::size_t last = 0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (row[i] <= 0.0) continue;
            acc += row[i];
            last = i;
            if (u < acc) return i;
        }
        return last; // u landed in rounding slack past the final positive cell
    }

    // Dirichlet(alpha,...,alpha) row via gamma sampling (Marsaglia-Tsang,
    // boosted for alpha < 1). Used for randomized test instances and
    // multi-start initialization.
    std::vector<double> dirichlet(std::size_t n, double alpha = 1.0) {
        std::vector<double> g(n);
        double sum = 0.0;
        for (auto& v : g) {
            v = gamma_draw(alpha);
            sum += v;
        }
        if (sum <= 0.0) {
            for (auto& v : g) v = 1.0 / static_cast<double>(n);
            return g;
        }
        for (auto& v : g) v /= sum;
        return g;
    }

  private:
    double normal() {
        // Box-Muller on fresh uniforms; fine at this consumption rate
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double gamma_draw(double alpha) {
        if (alpha < 1.0) {
            const double u = uniform();
            return gamma_draw(alpha + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            const double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::uint64_t seed_, id0_, id1_;
    std::uint64_t n_ = 0;
};

} // namespace feedcap
