#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feedcap/codefunctions.hpp"
#include "feedcap/filtering.hpp"

namespace feedcap {

// Which reduction the average-cost problem uses for its state variable.
enum class CaseTag {
    StateFromIo,      // next state a function of (s, a, b); MDP state = point of P(S)
    StateFromInput,   // next state a function of (s, a)
    StateFromOutput,  // next state a function of (s, b); MDP state = s itself
    ReceiverCsi,      // output carries the next state; MDP state = s itself
    BeliefFromOutput, // filter driven by outputs alone; MDP state = belief
    General,          // MDP state = distribution over belief-grid points (experimental)
};

const char* case_name(CaseTag t);
std::optional<CaseTag> case_from_name(const std::string& name);

// Regular simplex lattice: all nonnegative integer coordinate vectors of the
// given dimension summing to `resolution`, scaled to probability vectors.
// C(resolution + dim - 1, dim - 1) points, lexicographic coordinate order.
struct BeliefGrid {
    std::size_t dim = 0;
    int resolution = 0;
    std::vector<SimplexVector> points;
    std::vector<std::vector<int>> coords;

    static BeliefGrid make(std::size_t dim, int resolution);
    // nearest point in L1; ties break to the lowest index. Optional out-param
    // receives the displacement.
    std::size_t snap(const SimplexVector& v, double* displacement = nullptr) const;
};

// Control: joint law over (conditioning point, input symbol), stored as
// weights gamma(point) and conditional rows u(a | point). State cases use one
// Dirac conditioning point per MDP state.
struct ControlAction {
    std::vector<std::size_t> support_ids;
    std::vector<double> weights;
    std::vector<SimplexVector> beliefs; // conditioning belief of each support point
    std::vector<SimplexVector> rows;    // u(a | point)

    double mass(std::size_t i, std::size_t a) const { return weights[i] * rows[i][a]; }
};

// One-step information cost of a control in bits:
// sum over (point, a, b) of weight * row(a) * r(b|pi,a) * log2(r(b|pi,a) / D(b))
// with D the output mixture of the whole control.
double action_cost(const MarkovChannelSpec& spec, const ControlAction& u);

struct SnapDiagnostics {
    double max_l1 = 0.0;
    double total_l1 = 0.0;
    std::size_t count = 0;
    double mean_l1() const { return count ? total_l1 / static_cast<double>(count) : 0.0; }
};

struct BuildOptions {
    std::optional<CaseTag> tag;  // default: pick from flags
    int belief_resolution = 32;  // lattice over P(S) where the case needs one
    int action_resolution = 32;  // lattice over P(A) for candidate rows
    int meta_resolution = 4;     // lattice over P(grid) for the general case
    bool experimental = false;   // required for CaseTag::General
    std::size_t cell_cap = kDefaultCellCap;
    std::size_t action_cap = 200000; // candidate actions per state
    int threads = 1;
};

// State space + transition/cost semantics of one reduction case.
struct CaseModel {
    CaseTag tag = CaseTag::StateFromOutput;
    MarkovChannelSpec spec;
    BeliefGrid belief_grid; // over P(S); meaningful for io/belief/general cases
    int meta_resolution = 0;
    std::size_t n_states = 0;
    // io/state/belief cases: distribution over S (Dirac for state cases);
    // general case: distribution over belief_grid points.
    std::vector<std::vector<double>> state_gamma;
    std::vector<std::string> state_desc;

    // Conditioning points (id, weight, belief) of an MDP state.
    std::vector<std::size_t> support_of(std::size_t state) const;
    // Distribution over successor MDP states under control u.
    std::vector<double> dynamics(std::size_t state, const ControlAction& u,
                                 SnapDiagnostics* diag = nullptr) const;
    // Control from per-support-point rows at a state.
    ControlAction assemble(std::size_t state, std::vector<SimplexVector> rows) const;
};

CaseModel make_case_model(const MarkovChannelSpec& spec, const BuildOptions& opts);

struct MDPInstance {
    CaseModel model;
    BeliefGrid action_grid; // over P(A)
    std::vector<std::vector<ControlAction>> actions;
    std::vector<std::vector<double>> cost_bits;
    std::vector<std::vector<std::vector<double>>> trans;
    SnapDiagnostics snap;

    std::size_t n_states() const { return model.n_states; }
};

// Enumerates candidate controls per state (one action-grid row per support
// point) and precomputes cost and snapped dynamics.
MDPInstance build_instance(const MarkovChannelSpec& spec, const BuildOptions& opts = {});

struct ACOESolution {
    double v_star_bits = 0.0;
    std::vector<double> w; // relative values, reference state 0 pinned to 0
    std::vector<std::size_t> policy;
    bool converged = true;
    int iterations = 0;
    double final_span = 0.0;
    double acoe_residual = 0.0; // max |v* + w - T w| over states at exit
    bool refined = false;
    double v_star_coarse_bits = 0.0; // before local action refinement
};

// Relative value iteration until the update span falls below span_tol, then
// one local refinement round around each state's argmax action and a rerun.
// Non-convergence is reported in the solution, not thrown.
ACOESolution solve_acoe(MDPInstance& instance, double span_tol = 1e-9, int max_iters = 100000,
                        int threads = 1, bool refine = true);

struct MixingResult {
    double alpha = 1.0; // max TV between successor rows over all (state, action) pairs
    bool contraction = false; // alpha < 1
    std::size_t rows_compared = 0;
};

MixingResult check_mixing(const MDPInstance& instance);

struct ClosedFormResult {
    double v_star_bits = 0.0;
    std::vector<double> nu; // stationary law of the autonomous state chain
    std::vector<double> per_state_bits;
    std::vector<SimplexVector> per_state_row;
};

// No-ISI receiver-CSI value: stationary average of per-state best one-step
// costs. Requires the no_isi and receiver_csi flags; throws NotErgodic when
// the state chain has more than one recurrent class.
ClosedFormResult closed_form_noisi_csi(const MarkovChannelSpec& spec, int action_resolution = 32);

// Grid policy exported as conditional input rows per MDP state.
struct PolicyRule {
    CaseTag tag = CaseTag::StateFromOutput;
    std::size_t ns = 0, na = 0, nb = 0;
    int belief_resolution = 0;
    int meta_resolution = 0;
    double v_star_bits = 0.0;
    std::vector<std::vector<double>> state_gamma;
    std::vector<ControlAction> action_per_state;
};

PolicyRule policy_to_input(const MDPInstance& instance, const ACOESolution& solution);
std::string save_policy(const PolicyRule& rule);
PolicyRule load_policy_from_json(const std::string& json_text);
PolicyRule load_policy(const std::string& path);

struct StationaryResult {
    std::vector<double> lambda;
    int iterations = 0;
    bool converged = true;
    double long_run_cost_bits = 0.0; // sum_state lambda * cost(policy action)
};

// Power iteration of the policy-fixed chain to successive TV <= tol.
StationaryResult stationary_distribution(const MDPInstance& instance,
                                         const std::vector<std::size_t>& policy,
                                         double tol = 1e-9, int max_iters = 1000000);

// Belief-indexed input rule r(a | pi, b-history) condensed from a causal
// input law; deviation of the reproduced (Pi_t, A_t, B^t) joints is checked
// by exhaustive enumeration.
struct BeliefInputRule {
    struct Entry {
        SimplexVector pi;
        std::size_t b_hist = 0;
        SimplexVector row;
        double history_mass = 0.0;
    };
    int horizon = 0;
    std::vector<std::vector<Entry>> steps;
};

struct ReductionResult {
    BeliefInputRule rule;
    double max_deviation = 0.0;
};

ReductionResult reduce_input_to_belief(const MarkovChannelSpec& spec,
                                       const InputDistribution& input,
                                       std::size_t cell_cap = kDefaultCellCap);

} // namespace feedcap
