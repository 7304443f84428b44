#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feedcap/channel.hpp"

namespace feedcap {

// Deterministic encoding maps f_t : B^{t-1} -> A for t = 1..T. Node order is
// t-major, then the output-history index (lexicographic, first symbol most
// significant); that order also defines the enumeration index, first node
// most significant base |A|.
struct CodeFunction {
    int horizon = 0;
    std::size_t na = 0, nb = 0;
    std::vector<std::vector<std::uint32_t>> tables; // tables[t-1][b_hist]

    std::size_t eval(int t, std::size_t b_hist) const { return tables[t - 1][b_hist]; }
    // input prefix a^t produced along b^{t-1}, packed base |A|
    std::size_t eval_prefix(int t, std::size_t b_hist) const;
};

struct CodeFunctionSpace {
    int horizon = 0;
    std::size_t na = 0, nb = 0;
    std::vector<std::size_t> nodes_per_step; // |B|^{t-1}
    std::size_t total_nodes = 0;
    std::uint64_t size = 0; // prod_t |A|^{|B|^{t-1}}

    CodeFunction decode(std::uint64_t index) const;
    std::uint64_t encode(const CodeFunction& f) const;
};

// Throws CapExceeded when the space is larger than `cap`.
CodeFunctionSpace enumerate_codefunctions(std::size_t na, std::size_t nb, int horizon,
                                          std::uint64_t cap = kDefaultCodeFunctionCap);

struct CodeFunctionDistribution {
    CodeFunctionSpace space;
    std::vector<double> mass; // indexed by enumeration index, sums to 1
};

// Validates length and total mass (kRowSumTol), then renormalizes exactly.
CodeFunctionDistribution make_codefunction_distribution(CodeFunctionSpace space,
                                                        std::vector<double> mass);
CodeFunctionDistribution uniform_codefunction_distribution(CodeFunctionSpace space);

struct FeedbackPattern {
    enum class Kind { Full, None, Delay } kind = Kind::Full;
    int delta = 1; // Delay only: outputs arrive delta steps late (delta >= 1)

    static FeedbackPattern full() { return {Kind::Full, 1}; }
    static FeedbackPattern none() { return {Kind::None, 0}; }
    static FeedbackPattern delay(int d) { return {Kind::Delay, d}; }
    // number of trailing outputs invisible at step t
    int hidden_suffix(int t) const;
};

// Causal input law: rows p(a_t | a^{t-1}, b^{t-1}) for each step, stored for
// every history; the pattern constrains rows to be constant in outputs the
// encoder has not seen.
struct InputDistribution {
    std::size_t na = 0, nb = 0;
    int horizon = 0;
    FeedbackPattern pattern = FeedbackPattern::full();
    // steps[t-1][a_hist * nb^{t-1} + b_hist]
    std::vector<std::vector<SimplexVector>> steps;
    // histories whose conditioning set had zero mass and were filled uniform
    std::vector<std::pair<int, std::size_t>> uniform_filled;

    const SimplexVector& row(int t, std::size_t a_hist, std::size_t b_hist) const;
    double p(int t, std::size_t a_hist, std::size_t b_hist, std::size_t a) const {
        return row(t, a_hist, b_hist)[a];
    }
    // directed product prod_{j<=t} p(a_j | a^{j-1}, b^{j-1}) along packed sequences
    double directed_mass(int t, std::size_t a_seq, std::size_t b_seq) const;
};

// Validates shapes and the pattern constraint (rows exactly constant over
// hidden outputs).
InputDistribution make_input_distribution(std::size_t na, std::size_t nb, int horizon,
                                          FeedbackPattern pattern,
                                          std::vector<std::vector<SimplexVector>> steps);

// json io for input files
InputDistribution load_input(const std::string& path);
InputDistribution load_input_from_json(const std::string& json_text);
std::string save_input(const InputDistribution& input);

// Joint law of (code function, state path, input path, output path) induced
// by a code-function distribution through a channel. The state dimension is 1
// for general channels.
struct ConsistentMeasure {
    CodeFunctionSpace space;
    int horizon = 0;
    std::size_t ns = 1, na = 0, nb = 0;
    std::size_t n_s_seq = 1, n_a_seq = 0, n_b_seq = 0;
    // mass[((f * n_s_seq + s_seq) * n_a_seq + a_seq) * n_b_seq + b_seq]
    std::vector<double> mass;

    double q(std::uint64_t f, std::size_t s_seq, std::size_t a_seq, std::size_t b_seq) const {
        return mass[((f * n_s_seq + s_seq) * n_a_seq + a_seq) * n_b_seq + b_seq];
    }
    // marginal over states: Q(f, a^T, b^T)
    double q_fab(std::uint64_t f, std::size_t a_seq, std::size_t b_seq) const;
    std::vector<double> marginal_f() const;
    // joint over (a^T, b^T), a_seq-major
    std::vector<double> marginal_ab() const;
    // joint over (f, b^T)
    std::vector<double> marginal_fb() const;
};

ConsistentMeasure build_consistent_measure(const CodeFunctionDistribution& dist,
                                           const GeneralChannelSpec& channel,
                                           std::size_t cell_cap = kDefaultCellCap);
ConsistentMeasure build_consistent_measure(const CodeFunctionDistribution& dist,
                                           const MarkovChannelSpec& channel,
                                           std::size_t cell_cap = kDefaultCellCap);

// Input law recovered from the code-function mass through history-set ratios;
// zero-mass histories become uniform rows and are flagged.
InputDistribution induced_input_distribution(const ConsistentMeasure& m);
// Same construction straight from a code-function distribution.
InputDistribution induced_input_distribution(const CodeFunctionDistribution& dist);

// Node-product code-function law matching a causal input law.
CodeFunctionDistribution good_distribution(const InputDistribution& input,
                                           std::uint64_t cap = kDefaultCodeFunctionCap);

// Alternative mass for feedback-free inputs: all mass on constant trees,
// weighted by the open-loop input products. Throws CaseMismatch when rows
// depend on outputs.
CodeFunctionDistribution codeword_only_distribution(const InputDistribution& input,
                                                    std::uint64_t cap = kDefaultCodeFunctionCap);

struct GoodCheckResult {
    bool ok = true;
    // worst deviation of history-set mass vs the directed input product
    double max_set_deviation = 0.0;
    // worst deviation of the induced rule from the original rows on
    // positive-mass histories
    double max_rule_deviation = 0.0;
    int worst_t = 0;
    std::size_t worst_a_seq = 0, worst_b_seq = 0;
    double tol = 1e-12;
};

GoodCheckResult verify_good(const CodeFunctionDistribution& dist, const InputDistribution& input,
                            double tol = 1e-12);

} // namespace feedcap
