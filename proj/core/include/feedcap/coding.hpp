#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "feedcap/mdp.hpp"

namespace feedcap {

// Codebook of M deterministic encoding trees. Small trees are materialized;
// large ones are evaluated lazily, each node drawn from its own counter
// stream so lookups are order-independent and reproducible.
struct ChannelCode {
    std::size_t M = 0, na = 0, nb = 0;
    int horizon = 0;
    std::uint64_t seed = 0;
    bool lazy = false;

    std::vector<std::vector<std::vector<std::uint32_t>>> trees; // [w][t-1][b_hist]
    std::shared_ptr<const InputDistribution> input_rule;
    std::shared_ptr<const PolicyRule> policy_rule;
    std::shared_ptr<const MarkovChannelSpec> policy_spec;
    std::shared_ptr<const BeliefGrid> belief_grid; // meta-belief policies only

    // input symbol of message w at node (t, packed b^{t-1})
    std::size_t symbol(std::size_t w, int t, std::size_t b_hist) const;
    // full input path of message w along an output path
    std::vector<std::size_t> trajectory(std::size_t w, const std::vector<std::size_t>& b_path) const;
};

// Per-node sampling from a causal input law.
ChannelCode sample_code(const InputDistribution& rule, std::size_t M, int horizon,
                        std::uint64_t seed);
// Per-node sampling from an exported grid policy; beliefs and the policy
// state are rebuilt along each node's history.
ChannelCode sample_code(const MarkovChannelSpec& spec, const PolicyRule& rule, std::size_t M,
                        int horizon, std::uint64_t seed);

struct TransmitResult {
    std::size_t w = 0;
    std::vector<std::size_t> s; // visited states s_1..s_T
    std::vector<std::size_t> a;
    std::vector<std::size_t> b;
};

TransmitResult transmit(const MarkovChannelSpec& spec, const ChannelCode& code, std::size_t w,
                        std::uint64_t seed, std::uint64_t trial);

struct DecodeResult {
    std::size_t w_hat = 0;
    std::vector<double> scores_log2; // per message; -inf off the support
};

// Maximum-likelihood message decision: per-message trajectory scores with the
// coincidence-multiplicity correction and codebook-induced causal input
// probabilities, evaluated in log domain; ties go to the lowest message.
DecodeResult ml_decode(const MarkovChannelSpec& spec, const ChannelCode& code,
                       const std::vector<std::size_t>& b_path);
DecodeResult ml_decode(const GeneralChannelSpec& spec, const ChannelCode& code,
                       const std::vector<std::size_t>& b_path);

struct WilsonInterval {
    double lo = 0.0, hi = 1.0;
};

// 95% score interval for k errors out of n
WilsonInterval wilson95(std::size_t k, std::size_t n);

struct DensityReport {
    int chains = 0;
    int horizon = 0;
    std::vector<double> chain_rates_bits; // (1/T) sum of density increments
    double mean_bits = 0.0;
    double variance = 0.0; // across chains
    double std_error = 0.0;
};

// Long-horizon policy chains (no codebook): samples the closed-loop process
// and accumulates the per-step information density of the policy's output
// predictive against its mixture predictive.
DensityReport density_chains(const MarkovChannelSpec& spec, const PolicyRule& rule, int chains,
                             int horizon, std::uint64_t seed, int threads = 1);

struct DensityOptions {
    const PolicyRule* policy = nullptr;
    int chains = 200;
    int horizon = 2000;
};

struct SimulationReport {
    std::size_t trials = 0;
    std::size_t errors = 0;
    double error_rate = 0.0;
    WilsonInterval wilson;
    std::optional<DensityReport> density;
};

// Uniform message draws, transmit, decode, count errors; per-trial counter
// substreams make the outcome independent of thread count.
SimulationReport simulate(const MarkovChannelSpec& spec, const ChannelCode& code,
                          std::size_t trials, std::uint64_t seed, int threads = 1,
                          const DensityOptions* density = nullptr);

} // namespace feedcap
