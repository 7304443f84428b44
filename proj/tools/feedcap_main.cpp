#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "feedcap/coding.hpp"
#include "feedcap/directed_info.hpp"

using namespace feedcap;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// every float in a report carries exactly 12 significant digits
double sig12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::strtod(buf, nullptr);
}

ordered_json num_array(const std::vector<double>& v) {
    ordered_json arr = ordered_json::array();
    for (double x : v) arr.push_back(sig12(x));
    return arr;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << text;
}

std::string stem_of(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    const std::size_t dot = base.find_last_of('.');
    if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
    return base.empty() ? std::string("out") : base;
}

std::size_t env_cell_cap() {
    if (const char* v = std::getenv("FEEDCAP_CAP_CELLS")) {
        char* end = nullptr;
        const unsigned long long n = std::strtoull(v, &end, 10);
        if (end && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
        throw ValidationError("FEEDCAP_CAP_CELLS must be a positive integer");
    }
    return kDefaultCellCap;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start)
            .count();
    }
};

ordered_json manifest(const std::string& subcommand, ordered_json params,
                      const std::string& spec_text, std::uint64_t seed, const Timer& timer) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(spec_text)));
    ordered_json m;
    m["subcommand"] = subcommand;
    m["parameters"] = std::move(params);
    m["spec_hash"] = hash;
    m["seed"] = seed;
    m["version"] = kVersion;
    m["wall_time_ms"] = sig12(timer.ms());
    return m;
}

// plot-friendly fallback: one "path,value" line per scalar leaf
void flatten_csv(const ordered_json& j, const std::string& prefix, std::ostream& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items())
            flatten_csv(v, prefix.empty() ? k : prefix + "." + k, out);
    } else if (j.is_array()) {
        std::size_t i = 0;
        for (const auto& v : j) flatten_csv(v, prefix + "." + std::to_string(i++), out);
    } else if (j.is_number_float()) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", j.get<double>());
        out << prefix << "," << buf << "\n";
    } else if (j.is_boolean()) {
        out << prefix << "," << (j.get<bool>() ? "true" : "false") << "\n";
    } else if (!j.is_null()) {
        out << prefix << "," << j.dump() << "\n";
    }
}

void emit(const ordered_json& report, const std::string& format) {
    if (format == "csv") {
        std::ostringstream out;
        out << "key,value\n";
        for (const auto& [k, v] : report.items())
            if (k != "manifest") flatten_csv(v, k, out);
        std::cout << out.str();
    } else {
        std::cout << report.dump(2) << "\n";
    }
}

const MarkovChannelSpec& need_markov(const ChannelSpec& spec, const char* what) {
    if (const auto* m = std::get_if<MarkovChannelSpec>(&spec)) return *m;
    throw CaseMismatch(std::string(what) + " needs a state channel");
}

FeedbackPattern parse_pattern(const std::string& text) {
    if (text == "full") return FeedbackPattern::full();
    if (text == "none") return FeedbackPattern::none();
    if (text.rfind("delay:", 0) == 0) {
        const int d = std::atoi(text.c_str() + 6);
        if (d < 1) throw ValidationError("feedback delay must be >= 1");
        return FeedbackPattern::delay(d);
    }
    throw ValidationError("feedback must be full, none or delay:<k>");
}

int classify(const Error& e, std::string& name) {
    if (dynamic_cast<const CapExceeded*>(&e)) {
        name = "cap_exceeded";
        return 3;
    }
    if (dynamic_cast<const NotConverged*>(&e)) {
        name = "not_converged";
        return 2;
    }
    if (dynamic_cast<const NotErgodic*>(&e)) {
        name = "not_ergodic";
        return 2;
    }
    if (dynamic_cast<const InternalDisagreement*>(&e)) {
        name = "internal_disagreement";
        return 2;
    }
    if (dynamic_cast<const ParseError*>(&e)) name = "parse_error";
    else if (dynamic_cast<const FlagCheckError*>(&e)) name = "flag_check";
    else if (dynamic_cast<const FlagUnsupported*>(&e)) name = "flag_unsupported";
    else if (dynamic_cast<const CaseMismatch*>(&e)) name = "case_mismatch";
    else if (dynamic_cast<const ZeroProbabilityObservation*>(&e)) name = "zero_probability";
    else if (dynamic_cast<const ZeroMassCell*>(&e)) name = "zero_mass_cell";
    else name = "validation_error";
    return 1;
}

int fail(int code, const std::string& type, const std::string& message) {
    ordered_json err;
    err["error"] = ordered_json{{"type", type}, {"message", message}};
    std::cerr << err.dump() << "\n";
    return code;
}

// ---- subcommand bodies ----------------------------------------------------

struct CommonArgs {
    std::string format = "json";
    int threads = 1;
};

int run_validate(const std::string& spec_path, const CommonArgs& common) {
    Timer timer;
    const std::string text = read_file(spec_path);
    const ChannelSpec spec = load_spec_from_json(text);
    ordered_json rep;
    rep["valid"] = true;
    if (const auto* m = std::get_if<MarkovChannelSpec>(&spec)) {
        rep["kind"] = "markov";
        rep["alphabets"] = ordered_json{{"S", m->ns()}, {"A", m->na()}, {"B", m->nb()}};
        ordered_json flags = ordered_json::array();
        for (StructureFlag f : m->flags) flags.push_back(flag_name(f));
        rep["flags"] = std::move(flags);
    } else {
        const auto& g = std::get<GeneralChannelSpec>(spec);
        rep["kind"] = "general";
        rep["alphabets"] = ordered_json{{"A", g.na()}, {"B", g.nb()}};
        rep["horizon"] = g.horizon;
    }
    rep["manifest"] =
        manifest("validate", ordered_json{{"spec", spec_path}}, text, 0, timer);
    emit(rep, common.format);
    return 0;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_history(const std::string& csv) {
    std::vector<std::size_t> vals;
    std::string tok;
    std::istringstream in(csv);
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (!end || *end != '\0' || v < 0)
            throw ValidationError("history entries must be nonnegative integers");
        vals.push_back(static_cast<std::size_t>(v));
    }
    if (vals.size() % 2 != 0)
        throw ValidationError("history must hold a,b pairs (even count)");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i + 1 < vals.size(); i += 2) pairs.push_back({vals[i], vals[i + 1]});
    return pairs;
}

int run_filter(const std::string& spec_path, const std::string& history_csv,
               const CommonArgs& common, bool format_given) {
    Timer timer;
    const std::string text = read_file(spec_path);
    const ChannelSpec spec = load_spec_from_json(text);
    const MarkovChannelSpec& m = need_markov(spec, "filtering");
    const auto history = parse_history(history_csv);
    for (const auto& [a, b] : history)
        if (a >= m.na() || b >= m.nb())
            throw ValidationError("history symbol outside the declared alphabets");
    const FilterTrace trace = run_filter(m, history);
    const std::string format = format_given ? common.format : "csv"; // trace is tabular
    if (format == "csv") {
        std::ostringstream out;
        out << "t,a,b";
        for (std::size_t b = 0; b < m.nb(); ++b) out << ",pred_" << b;
        for (std::size_t s = 0; s < m.ns(); ++s) out << ",belief_" << s;
        out << "\n";
        for (std::size_t t = 0; t < history.size(); ++t) {
            out << (t + 1) << "," << history[t].first << "," << history[t].second;
            char buf[40];
            for (std::size_t b = 0; b < m.nb(); ++b) {
                std::snprintf(buf, sizeof buf, "%.12g", trace.predictives[t][b]);
                out << "," << buf;
            }
            for (std::size_t s = 0; s < m.ns(); ++s) {
                std::snprintf(buf, sizeof buf, "%.12g", trace.beliefs[t + 1][s]);
                out << "," << buf;
            }
            out << "\n";
        }
        std::cout << out.str();
        return 0;
    }
    ordered_json rep;
    rep["initial_belief"] = num_array(trace.beliefs.front().weights());
    ordered_json steps = ordered_json::array();
    for (std::size_t t = 0; t < history.size(); ++t) {
        ordered_json step;
        step["t"] = t + 1;
        step["a"] = history[t].first;
        step["b"] = history[t].second;
        step["predictive"] = num_array(trace.predictives[t].weights());
        step["belief"] = num_array(trace.beliefs[t + 1].weights());
        steps.push_back(std::move(step));
    }
    rep["steps"] = std::move(steps);
    rep["manifest"] = manifest(
        "filter", ordered_json{{"spec", spec_path}, {"history", history_csv}}, text, 0, timer);
    emit(rep, "json");
    return 0;
}

int run_dinfo(const std::string& spec_path, const std::string& input_path, int horizon,
              const CommonArgs& common) {
    Timer timer;
    const std::string text = read_file(spec_path);
    const ChannelSpec spec = load_spec_from_json(text);
    const InputDistribution input = load_input_from_json(read_file(input_path));
    if (horizon > 0 && horizon != input.horizon)
        throw ValidationError("requested horizon differs from the input law");
    const std::size_t cap = env_cell_cap();
    const JointMeasure joint =
        std::holds_alternative<MarkovChannelSpec>(spec)
            ? joint_measure(std::get<MarkovChannelSpec>(spec), input, cap)
            : joint_measure(std::get<GeneralChannelSpec>(spec), input, cap);
    const DirectedInfoResult di = directed_information(joint);
    const ReverseInfoResult rev = reverse_directed_information(joint);
    const double mi = mutual_information(joint);
    if (common.format == "csv") {
        std::ostringstream out;
        out << "t,directed_bits,reverse_bits\n";
        char buf[40];
        for (std::size_t t = 0; t < di.per_step_bits.size(); ++t) {
            out << (t + 1);
            std::snprintf(buf, sizeof buf, "%.12g", di.per_step_bits[t]);
            out << "," << buf;
            std::snprintf(buf, sizeof buf, "%.12g", rev.per_step_bits[t]);
            out << "," << buf << "\n";
        }
        std::cout << out.str();
        return 0;
    }
    ordered_json rep;
    rep["directed_bits"] = sig12(di.total_bits);
    rep["per_step_bits"] = num_array(di.per_step_bits);
    rep["divergence_form_bits"] = sig12(di.divergence_form_bits);
    rep["reverse_bits"] = sig12(rev.total_bits);
    rep["reverse_per_step_bits"] = num_array(rev.per_step_bits);
    rep["mutual_bits"] = sig12(mi);
    rep["massey_residual_bits"] = sig12(std::abs(mi - di.total_bits - rev.total_bits));
    if (const auto* m = std::get_if<MarkovChannelSpec>(&spec)) {
        const MarkovDirectedInfo mdi = markov_directed_information(*m, input, cap);
        rep["belief_decomposition_bits"] = sig12(mdi.total_bits);
        rep["belief_per_step_bits"] = num_array(mdi.per_step_bits);
    }
    rep["manifest"] = manifest(
        "dinfo",
        ordered_json{{"spec", spec_path}, {"input", input_path}, {"T", input.horizon}}, text, 0,
        timer);
    emit(rep, common.format);
    return 0;
}

int run_capacity_finite(const std::string& spec_path, const std::string& spec_text,
                        const ChannelSpec& spec, int horizon, const std::string& feedback,
                        std::uint64_t seed, int starts, std::string cert_path,
                        const CommonArgs& common, Timer timer) {
    if (horizon < 1) throw ValidationError("finite mode needs -T >= 1");
    const FeedbackPattern pattern = parse_pattern(feedback);
    CapacityOptions opts;
    opts.seed = seed;
    opts.starts = starts;
    opts.threads = common.threads;
    opts.cell_cap = env_cell_cap();
    const CapacityResult res =
        std::holds_alternative<MarkovChannelSpec>(spec)
            ? finite_horizon_capacity(std::get<MarkovChannelSpec>(spec), horizon, pattern, opts)
            : finite_horizon_capacity(std::get<GeneralChannelSpec>(spec), horizon, pattern,
                                      opts);
    const JointMeasure joint =
        std::holds_alternative<MarkovChannelSpec>(spec)
            ? joint_measure(std::get<MarkovChannelSpec>(spec), res.best, opts.cell_cap)
            : joint_measure(std::get<GeneralChannelSpec>(spec), res.best, opts.cell_cap);
    const DirectedInfoResult di = directed_information(joint);
    if (cert_path.empty()) cert_path = stem_of(spec_path) + ".cert.json";
    write_file(cert_path, save_input(res.best));
    ordered_json rep;
    rep["mode"] = "finite";
    rep["value_bits"] = sig12(res.value_bits);
    rep["per_step"] = num_array(di.per_step_bits);
    rep["certificate_path"] = cert_path;
    rep["starts"] = num_array(res.start_values);
    rep["sweeps"] = res.sweeps;
    rep["converged"] = res.converged;
    rep["evaluations"] = res.evaluations;
    rep["manifest"] = manifest("capacity",
                               ordered_json{{"spec", spec_path},
                                            {"mode", "finite"},
                                            {"T", horizon},
                                            {"feedback", feedback},
                                            {"starts", starts}},
                               spec_text, seed, timer);
    emit(rep, common.format);
    if (!res.converged)
        return fail(2, "not_converged", "coordinate ascent hit the sweep limit");
    return 0;
}

int run_capacity_acoe(const std::string& spec_path, const std::string& spec_text,
                      const ChannelSpec& spec, const std::string& case_arg, int grid,
                      int action_grid, int meta_grid, double eps, int max_iters,
                      bool experimental, bool no_refine, std::string policy_path,
                      const CommonArgs& common, Timer timer) {
    const MarkovChannelSpec& m = need_markov(spec, "the average-cost solver");
    BuildOptions opts;
    if (case_arg != "auto") {
        const auto tag = case_from_name(case_arg);
        if (!tag) throw ValidationError("unknown case: " + case_arg);
        opts.tag = *tag;
    }
    opts.belief_resolution = grid;
    opts.action_resolution = action_grid;
    opts.meta_resolution = meta_grid;
    opts.experimental = experimental;
    opts.cell_cap = env_cell_cap();
    opts.threads = common.threads;
    MDPInstance inst = build_instance(m, opts);
    const ACOESolution sol = solve_acoe(inst, eps, max_iters, common.threads, !no_refine);
    const MixingResult mix = check_mixing(inst);
    const StationaryResult st = stationary_distribution(inst, sol.policy);
    const PolicyRule rule = policy_to_input(inst, sol);
    if (policy_path.empty()) policy_path = stem_of(spec_path) + ".policy.json";
    write_file(policy_path, save_policy(rule));
    ordered_json rep;
    rep["mode"] = "acoe";
    rep["V_star_bits"] = sig12(sol.v_star_bits);
    rep["case"] = case_name(inst.model.tag);
    rep["grid"] = ordered_json{{"m", grid}, {"k", action_grid}};
    rep["iterations"] = sol.iterations;
    rep["span"] = sig12(sol.final_span);
    rep["acoe_residual"] = sig12(sol.acoe_residual);
    rep["alpha_mixing"] = sig12(mix.alpha);
    rep["contraction"] = mix.contraction;
    rep["converged"] = sol.converged;
    rep["refined"] = sol.refined;
    rep["V_star_coarse_bits"] = sig12(sol.v_star_coarse_bits);
    rep["snap"] = ordered_json{{"max_l1", sig12(inst.snap.max_l1)},
                               {"mean_l1", sig12(inst.snap.mean_l1())},
                               {"count", inst.snap.count}};
    rep["stationary"] = ordered_json{{"lambda", num_array(st.lambda)},
                                     {"long_run_cost_bits", sig12(st.long_run_cost_bits)},
                                     {"iterations", st.iterations},
                                     {"converged", st.converged}};
    rep["policy_path"] = policy_path;
    rep["manifest"] = manifest("capacity",
                               ordered_json{{"spec", spec_path},
                                            {"mode", "acoe"},
                                            {"case", case_arg},
                                            {"grid", grid},
                                            {"action_grid", action_grid},
                                            {"meta_grid", meta_grid},
                                            {"eps", sig12(eps)},
                                            {"max_iters", max_iters}},
                               spec_text, 0, timer);
    emit(rep, common.format);
    if (!sol.converged)
        return fail(2, "not_converged", "relative value iteration hit the iteration limit");
    if (!st.converged)
        return fail(2, "not_converged", "stationary law power iteration hit the limit");
    return 0;
}

int run_mixing(const std::string& spec_path, const std::string& case_arg, int grid,
               int action_grid, const CommonArgs& common) {
    Timer timer;
    const std::string text = read_file(spec_path);
    const ChannelSpec spec = load_spec_from_json(text);
    const MarkovChannelSpec& m = need_markov(spec, "the mixing check");
    BuildOptions opts;
    if (case_arg != "auto") {
        const auto tag = case_from_name(case_arg);
        if (!tag) throw ValidationError("unknown case: " + case_arg);
        opts.tag = *tag;
    }
    opts.belief_resolution = grid;
    opts.action_resolution = action_grid;
    opts.threads = common.threads;
    const MDPInstance inst = build_instance(m, opts);
    const MixingResult mix = check_mixing(inst);
    ordered_json rep;
    rep["case"] = case_name(inst.model.tag);
    rep["alpha"] = sig12(mix.alpha);
    rep["contraction"] = mix.contraction;
    rep["rows_compared"] = mix.rows_compared;
    rep["manifest"] = manifest("mixing",
                               ordered_json{{"spec", spec_path},
                                            {"case", case_arg},
                                            {"grid", grid},
                                            {"action_grid", action_grid}},
                               text, 0, timer);
    emit(rep, common.format);
    return 0;
}

int run_simulate(const std::string& spec_path, const std::string& policy_path,
                 const std::string& input_path, std::size_t M, int horizon, std::size_t trials,
                 std::uint64_t seed, bool density, int chains, int chain_horizon,
                 const std::string& chains_csv, const CommonArgs& common) {
    Timer timer;
    const std::string text = read_file(spec_path);
    const ChannelSpec spec = load_spec_from_json(text);
    const MarkovChannelSpec& m = need_markov(spec, "simulation");
    if (policy_path.empty() == input_path.empty())
        throw ValidationError("pass exactly one of --policy or --input");
    std::optional<PolicyRule> rule;
    ChannelCode code;
    if (!policy_path.empty()) {
        rule = load_policy(policy_path);
        code = sample_code(m, *rule, M, horizon, seed);
    } else {
        code = sample_code(load_input_from_json(read_file(input_path)), M, horizon, seed);
    }
    DensityOptions dopts;
    const DensityOptions* dptr = nullptr;
    if (density) {
        if (!rule) throw ValidationError("density chains need an exported policy");
        dopts.policy = &*rule;
        dopts.chains = chains;
        dopts.horizon = chain_horizon;
        dptr = &dopts;
    }
    const SimulationReport rep = simulate(m, code, trials, seed, common.threads, dptr);
    ordered_json j;
    j["trials"] = rep.trials;
    j["errors"] = rep.errors;
    j["error_rate"] = sig12(rep.error_rate);
    j["wilson95"] = ordered_json{{"lo", sig12(rep.wilson.lo)}, {"hi", sig12(rep.wilson.hi)}};
    j["M"] = M;
    j["T"] = horizon;
    j["sampling"] = code.lazy ? "lazy" : "materialized";
    if (rep.density) {
        j["density"] = ordered_json{{"chains", rep.density->chains},
                                    {"horizon", rep.density->horizon},
                                    {"mean_bits", sig12(rep.density->mean_bits)},
                                    {"variance", sig12(rep.density->variance)},
                                    {"std_error", sig12(rep.density->std_error)}};
        if (!chains_csv.empty()) {
            std::ostringstream out;
            out << "chain,rate_bits\n";
            char buf[40];
            for (std::size_t c = 0; c < rep.density->chain_rates_bits.size(); ++c) {
                std::snprintf(buf, sizeof buf, "%.12g", rep.density->chain_rates_bits[c]);
                out << c << "," << buf << "\n";
            }
            write_file(chains_csv, out.str());
            j["chains_csv"] = chains_csv;
        }
    }
    j["manifest"] = manifest("simulate",
                             ordered_json{{"spec", spec_path},
                                          {"policy", policy_path},
                                          {"input", input_path},
                                          {"M", M},
                                          {"T", horizon},
                                          {"trials", trials},
                                          {"density", density}},
                             text, seed, timer);
    emit(j, common.format);
    return 0;
}

// cross-module identity suite on one (channel, input) pair
int run_verify(const std::string& spec_path, const std::string& input_path, int horizon,
               const CommonArgs& common) {
    Timer timer;
    const std::string text = read_file(spec_path);
    const ChannelSpec spec = load_spec_from_json(text);
    const InputDistribution input = load_input_from_json(read_file(input_path));
    if (horizon > 0 && horizon != input.horizon)
        throw ValidationError("requested horizon differs from the input law");
    const std::size_t cap = env_cell_cap();
    const auto* markov = std::get_if<MarkovChannelSpec>(&spec);

    const JointMeasure joint = markov
                                   ? joint_measure(*markov, input, cap)
                                   : joint_measure(std::get<GeneralChannelSpec>(spec), input, cap);
    const DirectedInfoResult di = directed_information(joint);
    const ReverseInfoResult rev = reverse_directed_information(joint);
    const double mi = mutual_information(joint);

    const CodeFunctionDistribution good = good_distribution(input);
    const ConsistentMeasure measure =
        markov ? build_consistent_measure(good, *markov, cap)
               : build_consistent_measure(good, std::get<GeneralChannelSpec>(spec), cap);
    // I(F^T; B^T) from the enumerated function/output joint
    const std::vector<double> fb = measure.marginal_fb();
    const std::vector<double> fm = measure.marginal_f();
    std::vector<double> bm(measure.n_b_seq, 0.0);
    for (std::uint64_t f = 0; f < measure.space.size; ++f)
        for (std::size_t b = 0; b < measure.n_b_seq; ++b)
            bm[b] += fb[f * measure.n_b_seq + b];
    double ifb = 0.0;
    for (std::uint64_t f = 0; f < measure.space.size; ++f)
        for (std::size_t b = 0; b < measure.n_b_seq; ++b) {
            const double p = fb[f * measure.n_b_seq + b];
            if (p > 0.0) ifb += p * std::log2(p / (fm[f] * bm[b]));
        }

    const GoodCheckResult gc = verify_good(good, input);
    ordered_json checks = ordered_json::array();
    bool all_ok = true;
    auto add = [&](const char* name, double deviation, double tol) {
        const bool ok = deviation <= tol;
        all_ok = all_ok && ok;
        checks.push_back(ordered_json{{"name", name},
                                      {"deviation", sig12(deviation)},
                                      {"tolerance", sig12(tol)},
                                      {"ok", ok}});
    };
    add("function_output_information_matches_directed", std::abs(ifb - di.total_bits), 1e-10);
    add("good_distribution_history_sets", gc.max_set_deviation, 1e-12);
    add("good_distribution_induced_rule", gc.max_rule_deviation, 1e-12);
    add("massey_decomposition", std::abs(mi - di.total_bits - rev.total_bits), 1e-10);
    if (markov) {
        const MarkovDirectedInfo mdi = markov_directed_information(*markov, input, cap);
        add("belief_decomposition_matches_directed", std::abs(mdi.total_bits - di.total_bits),
            1e-10);
        const ReductionResult red = reduce_input_to_belief(*markov, input, cap);
        add("belief_input_rule_reduction", red.max_deviation, 1e-12);
    }
    ordered_json rep;
    rep["ok"] = all_ok;
    rep["checks"] = std::move(checks);
    rep["manifest"] = manifest(
        "verify",
        ordered_json{{"spec", spec_path}, {"input", input_path}, {"T", input.horizon}}, text, 0,
        timer);
    emit(rep, common.format);
    if (!all_ok) return fail(1, "identity_deviation", "an identity check exceeded tolerance");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-alphabet feedback channel toolkit"};
    app.require_subcommand(1);
    CommonArgs common;
    app.add_option("--format", common.format, "report format")
        ->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--threads", common.threads, "worker thread cap (0 = hardware)");

    std::string spec_path, history_csv, input_path, policy_path, cert_path, chains_csv;
    std::string mode = "acoe", feedback = "full", case_arg = "auto";
    int horizon = 0, grid = 16, action_grid = 64, meta_grid = 4, max_iters = 100000;
    int starts = 16, chains = 200, chain_horizon = 2000;
    double eps = 1e-9;
    std::size_t messages = 2, trials = 1000;
    std::uint64_t seed = 1;
    bool density = false, experimental = false, no_refine = false;

    auto* validate = app.add_subcommand("validate", "load and validate a channel spec");
    validate->add_option("spec", spec_path)->required();

    auto* filter = app.add_subcommand("filter", "run the belief filter along a history");
    filter->add_option("spec", spec_path)->required();
    filter->add_option("--history", history_csv, "comma separated a,b pairs")->required();

    auto* dinfo = app.add_subcommand("dinfo", "exact information measures for an input law");
    dinfo->add_option("spec", spec_path)->required();
    dinfo->add_option("--input", input_path)->required();
    dinfo->add_option("-T,--horizon", horizon);

    auto* capacity = app.add_subcommand("capacity", "capacity by optimization");
    capacity->add_option("spec", spec_path)->required();
    capacity->add_option("--mode", mode)->check(CLI::IsMember({"acoe", "finite"}));
    capacity->add_option("-T,--horizon", horizon);
    capacity->add_option("--feedback", feedback);
    capacity->add_option("--seed", seed);
    capacity->add_option("--starts", starts);
    capacity->add_option("--cert", cert_path);
    capacity->add_option("--case", case_arg)
        ->check(CLI::IsMember({"auto", "state_io", "state_in", "state_out", "csi", "belief_out",
                               "general"}));
    capacity->add_option("--grid", grid);
    capacity->add_option("--action-grid", action_grid);
    capacity->add_option("--meta-grid", meta_grid);
    capacity->add_option("--eps", eps);
    capacity->add_option("--max-iters", max_iters);
    capacity->add_flag("--experimental", experimental);
    capacity->add_flag("--no-refine", no_refine);
    capacity->add_option("--policy-out", policy_path);

    auto* mixing = app.add_subcommand("mixing", "successor-kernel contraction diagnostic");
    mixing->add_option("spec", spec_path)->required();
    mixing->add_option("--case", case_arg);
    mixing->add_option("--grid", grid);
    mixing->add_option("--action-grid", action_grid);

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo coding run");
    simulate->add_option("spec", spec_path)->required();
    simulate->add_option("--policy", policy_path);
    simulate->add_option("--input", input_path);
    simulate->add_option("-M,--messages", messages);
    simulate->add_option("-T,--horizon", horizon);
    simulate->add_option("--trials", trials);
    simulate->add_option("--seed", seed);
    simulate->add_flag("--density", density);
    simulate->add_option("--chains", chains);
    simulate->add_option("--chain-horizon", chain_horizon);
    simulate->add_option("--chains-csv", chains_csv);

    auto* verify = app.add_subcommand("verify", "cross-module identity suite");
    verify->add_option("spec", spec_path)->required();
    verify->add_option("--input", input_path)->required();
    verify->add_option("-T,--horizon", horizon);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return run_validate(spec_path, common);
        if (filter->parsed())
            return run_filter(spec_path, history_csv, common,
                              app.count("--format") > 0);
        if (dinfo->parsed()) return run_dinfo(spec_path, input_path, horizon, common);
        if (capacity->parsed()) {
            Timer timer;
            const std::string text = read_file(spec_path);
            const ChannelSpec spec = load_spec_from_json(text);
            if (mode == "finite")
                return run_capacity_finite(spec_path, text, spec, horizon, feedback, seed,
                                           starts, cert_path, common, timer);
            return run_capacity_acoe(spec_path, text, spec, case_arg, grid, action_grid,
                                     meta_grid, eps, max_iters, experimental, no_refine,
                                     policy_path, common, timer);
        }
        if (mixing->parsed())
            return run_mixing(spec_path, case_arg, grid, action_grid, common);
        if (simulate->parsed())
            return run_simulate(spec_path, policy_path, input_path, messages, horizon, trials,
                                seed, density, chains, chain_horizon, chains_csv, common);
        if (verify->parsed()) return run_verify(spec_path, input_path, horizon, common);
    } catch (const Error& e) {
        std::string type;
        const int code = classify(e, type);
        return fail(code, type, e.what());
    } catch (const std::exception& e) {
        return fail(1, "error", e.what());
    }
    return 0;
}
