#pragma once

#include <cstdint>
#include <vector>

#include "feedcap/codefunctions.hpp"

namespace feedcap {

// Dense joint law over (A^T, B^T), a_seq-major.
struct JointMeasure {
    std::size_t na = 0, nb = 0;
    int horizon = 0;
    std::size_t n_a_seq = 0, n_b_seq = 0;
    std::vector<double> p;

    double mass(std::size_t a_seq, std::size_t b_seq) const {
        return p[a_seq * n_b_seq + b_seq];
    }
};

JointMeasure joint_measure(const GeneralChannelSpec& channel, const InputDistribution& input,
                           std::size_t cell_cap = kDefaultCellCap);
JointMeasure joint_measure(const MarkovChannelSpec& channel, const InputDistribution& input,
                           std::size_t cell_cap = kDefaultCellCap);

// Horizon-T view of a state channel: tables p(b_t | a^t, b^{t-1}) produced by
// running the filter along each history.
GeneralChannelSpec general_view(const MarkovChannelSpec& spec, int horizon,
                                std::size_t cell_cap = kDefaultCellCap);

struct DirectedInfoResult {
    double total_bits = 0.0;             // causal sum value
    std::vector<double> per_step_bits;   // conditional information per step
    double divergence_form_bits = 0.0;   // expected density value
};

// Computes the causal-conditioning information through both the per-step sum
// and the expected-density form; throws InternalDisagreement when they differ
// by more than 1e-10.
DirectedInfoResult directed_information(const JointMeasure& j);

struct ReverseInfoResult {
    double total_bits = 0.0;
    std::vector<double> per_step_bits; // I(A_t ; B^{t-1} | A^{t-1})
};

ReverseInfoResult reverse_directed_information(const JointMeasure& j);

double mutual_information(const JointMeasure& j);

struct MarkovDirectedInfo {
    double total_bits = 0.0;
    std::vector<double> per_step_bits; // I(A_t, Pi_t ; B_t | B^{t-1})
};

// Belief-augmented per-step decomposition for state channels; totals agree
// with directed_information on the induced joint.
MarkovDirectedInfo markov_directed_information(const MarkovChannelSpec& spec,
                                               const InputDistribution& input,
                                               std::size_t cell_cap = kDefaultCellCap);

struct InfoDensitySample {
    double value_bits = 0.0;
    std::vector<double> increments_bits; // log p(b_t|a^t,b^{t-1}) - log p(b_t|b^{t-1})
};

// Density at one trajectory; throws ZeroMassCell off the support.
InfoDensitySample information_density(const JointMeasure& j, std::size_t a_seq,
                                      std::size_t b_seq);

struct CapacityOptions {
    int starts = 16;
    std::uint64_t seed = 1;
    int max_sweeps = 400;
    double sweep_tol = 1e-9;
    int threads = 1;
    std::size_t cell_cap = kDefaultCellCap;
};

struct CapacityResult {
    double value_bits = 0.0; // per channel use
    InputDistribution best;
    std::vector<double> start_values;
    int sweeps = 0;
    bool converged = true;
    std::uint64_t evaluations = 0;
};

// max over causal input laws of (1/T) * directed information, by blockwise
// projected-gradient coordinate ascent over history rows with multi-start.
// Per-row problems are concave (the objective is concave in the causal law
// and linear in any single row), so each block step is exact up to tolerance.
CapacityResult finite_horizon_capacity(const GeneralChannelSpec& channel, int horizon,
                                       FeedbackPattern pattern, const CapacityOptions& opts = {});
CapacityResult finite_horizon_capacity(const MarkovChannelSpec& channel, int horizon,
                                       FeedbackPattern pattern, const CapacityOptions& opts = {});

struct ErrorExponentQuery {
    double rate_bits = 0.0;
    int rho_grid = 64; // evaluates rho = k / rho_grid, k = 0..rho_grid
};

struct ErrorExponentResult {
    double exponent_nats = 0.0;
    double exponent_bits = 0.0;
    double best_rho = 0.0;
    std::vector<std::pair<double, double>> curve; // (rho, value in nats)
};

// Random-coding exponent of the supplied causal input law at the given rate;
// natural-log arithmetic, reported in both units.
ErrorExponentResult error_exponent(const GeneralChannelSpec& channel,
                                   const InputDistribution& input,
                                   const ErrorExponentQuery& query);
ErrorExponentResult error_exponent(const MarkovChannelSpec& channel,
                                   const InputDistribution& input,
                                   const ErrorExponentQuery& query);

} // namespace feedcap
