#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "feedcap/channel.hpp"

namespace feedcap {

using Belief = SimplexVector; // point of P(S)

// r(b | pi, a) = sum_s p(b | s, a) pi(s)
SimplexVector output_predictive(const MarkovChannelSpec& spec, const Belief& pi, std::size_t a);

// Bayes posterior r(s | pi, a, b); throws ZeroProbabilityObservation when the
// predictive mass of b is zero.
Belief state_posterior(const MarkovChannelSpec& spec, const Belief& pi, std::size_t a,
                       std::size_t b);

// One filter step: posterior then push through the transition kernel.
Belief filter_update(const MarkovChannelSpec& spec, const Belief& pi, std::size_t a,
                     std::size_t b);

struct FilterTrace {
    // beliefs[t] is the state law before step t+1; size = history length + 1
    std::vector<Belief> beliefs;
    // predictive over B at each consumed (a, b)
    std::vector<SimplexVector> predictives;
    std::vector<std::pair<std::size_t, std::size_t>> io;
};

FilterTrace run_filter(const MarkovChannelSpec& spec,
                       const std::vector<std::pair<std::size_t, std::size_t>>& history);

struct StructureCheckOptions {
    double tol = 1e-12;
    // grid resolution for the sampled belief_from_output check
    int belief_resolution = 16;
    double sampled_tol = 1e-9;
};

struct StructureCheckResult {
    bool ok = true;
    bool sampled = false; // true when the check covers a sample, not all of P(S)
    std::string detail;   // counterexample coordinates on failure
};

StructureCheckResult check_structure(const MarkovChannelSpec& spec, StructureFlag flag,
                                     const StructureCheckOptions& opts = {});

} // namespace feedcap
