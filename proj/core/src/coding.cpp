#include "feedcap/coding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "feedcap/parallel.hpp"
#include "feedcap/rng.hpp"

namespace feedcap {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// node streams live in their own id half-space so a shared seed cannot
// correlate codebook draws with transmission noise
constexpr std::uint64_t kNodeSpace = 1ull << 63;
constexpr std::uint64_t kMessageStream = 0, kChannelStream = 1, kChainStream = 2;

std::size_t ipow(std::size_t base, int exp) {
    std::size_t v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

template <class Row>
std::size_t draw_symbol(std::uint64_t seed, std::size_t w, int t, std::size_t b_hist,
                        const Row& row) {
    RngStream stream(seed, w,
                     kNodeSpace | (static_cast<std::uint64_t>(b_hist) * 4096 +
                                   static_cast<std::uint64_t>(t)));
    return stream.sample(row);
}

// Closed-loop policy state: the exact encoder belief plus the receiver-side
// grid state the exported rule is indexed by. Both are deterministic
// functions of the history, so tree nodes and simulation epochs share this.
struct PolicyDriver {
    const MarkovChannelSpec* spec = nullptr;
    const PolicyRule* rule = nullptr;
    const BeliefGrid* grid = nullptr; // belief lattice, general case only
    Belief pi;
    std::size_t meta = 0;

    static std::size_t nearest_gamma(const PolicyRule& rule, const std::vector<double>& v) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < rule.state_gamma.size(); ++i) {
            const auto& g = rule.state_gamma[i];
            double d = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) d += std::abs(v[k] - g[k]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    // returns false when the starting state must be told explicitly
    bool reset() {
        pi = spec->initial;
        switch (rule->tag) {
            case CaseTag::StateFromOutput:
            case CaseTag::ReceiverCsi: {
                const long s = spec->initial.dirac_index();
                if (s < 0) return false;
                meta = static_cast<std::size_t>(s);
                return true;
            }
            case CaseTag::StateFromIo:
            case CaseTag::StateFromInput:
            case CaseTag::BeliefFromOutput:
                meta = nearest_gamma(*rule, spec->initial.weights());
                return true;
            case CaseTag::General: {
                std::vector<double> metaw(grid->points.size(), 0.0);
                metaw[grid->snap(spec->initial, nullptr)] = 1.0;
                meta = nearest_gamma(*rule, metaw);
                return true;
            }
        }
        return false;
    }

    void reset_with_state(std::size_t s1) {
        pi = SimplexVector::dirac(spec->ns(), s1);
        meta = s1;
    }

    const ControlAction& action() const { return rule->action_per_state[meta]; }

    // conditional input row for the encoder's current belief
    const SimplexVector& row() const {
        const ControlAction& u = action();
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < u.beliefs.size(); ++i) {
            const double d = l1_distance(pi, u.beliefs[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return u.rows[best];
    }

    // Advance past (a, b). Impossible observations can only occur on
    // zero-probability subtrees, where any total assignment is valid; the
    // state freezes there so every node still gets a defined row.
    void advance(std::size_t a, std::size_t b) {
        const ControlAction& u = action();
        switch (rule->tag) {
            case CaseTag::StateFromOutput:
            case CaseTag::ReceiverCsi: {
                const long s2 = spec->transition_row(meta, 0, b).dirac_index();
                if (s2 < 0)
                    throw CaseMismatch("transition row is not concentrated on one state");
                meta = static_cast<std::size_t>(s2);
                break;
            }
            case CaseTag::StateFromIo:
            case CaseTag::StateFromInput: {
                const auto& gamma = rule->state_gamma[meta];
                std::vector<double> num(spec->ns(), 0.0);
                double total = 0.0;
                for (std::size_t i = 0; i < u.support_ids.size(); ++i) {
                    const std::size_t s = u.support_ids[i];
                    for (std::size_t aa = 0; aa < spec->na(); ++aa) {
                        const double m = gamma[s] * u.rows[i][aa] * spec->p_emit(s, aa, b);
                        if (m <= 0.0) continue;
                        const long s2 = spec->transition_row(s, aa, b).dirac_index();
                        if (s2 < 0)
                            throw CaseMismatch(
                                "transition row is not concentrated on one state");
                        num[static_cast<std::size_t>(s2)] += m;
                        total += m;
                    }
                }
                if (total > 0.0) {
                    for (auto& v : num) v /= total;
                    meta = nearest_gamma(*rule, num);
                }
                break;
            }
            case CaseTag::BeliefFromOutput: {
                const Belief& cur = u.beliefs[0];
                long pick = -1;
                if (output_predictive(*spec, cur, a)[b] > 0.0) {
                    pick = static_cast<long>(a);
                } else {
                    for (std::size_t aa = 0; aa < spec->na(); ++aa)
                        if (u.rows[0][aa] > 0.0 && output_predictive(*spec, cur, aa)[b] > 0.0) {
                            pick = static_cast<long>(aa);
                            break;
                        }
                }
                if (pick >= 0) {
                    const Belief next =
                        filter_update(*spec, cur, static_cast<std::size_t>(pick), b);
                    meta = nearest_gamma(*rule, next.weights());
                }
                break;
            }
            case CaseTag::General: {
                const auto& gamma = rule->state_gamma[meta];
                std::vector<double> metaw(grid->points.size(), 0.0);
                double total = 0.0;
                for (std::size_t i = 0; i < u.support_ids.size(); ++i) {
                    const Belief& cur = u.beliefs[i];
                    const double gi = gamma[u.support_ids[i]];
                    for (std::size_t aa = 0; aa < spec->na(); ++aa) {
                        const double ua = u.rows[i][aa];
                        if (ua <= 0.0) continue;
                        const double m = gi * ua * output_predictive(*spec, cur, aa)[b];
                        if (m <= 0.0) continue;
                        metaw[grid->snap(filter_update(*spec, cur, aa, b), nullptr)] += m;
                        total += m;
                    }
                }
                if (total > 0.0) {
                    for (auto& v : metaw) v /= total;
                    meta = nearest_gamma(*rule, metaw);
                }
                break;
            }
        }
        if (output_predictive(*spec, pi, a)[b] > 0.0) pi = filter_update(*spec, pi, a, b);
    }
};

PolicyDriver make_driver(const MarkovChannelSpec& spec, const PolicyRule& rule,
                         const BeliefGrid* grid) {
    if (spec.ns() != rule.ns || spec.na() != rule.na || spec.nb() != rule.nb)
        throw CaseMismatch("policy and channel alphabets differ");
    PolicyDriver d;
    d.spec = &spec;
    d.rule = &rule;
    d.grid = grid;
    return d;
}

const BeliefGrid* grid_of(const ChannelCode& code) { return code.belief_grid.get(); }

void check_tree_addressing(std::size_t nb, int horizon) {
    if (horizon < 1) throw ValidationError("horizon must be at least 1");
    if (horizon >= 4096 ||
        (horizon - 1) * std::log2(static_cast<double>(std::max<std::size_t>(nb, 2))) > 50.0)
        throw CapExceeded("feedback tree addresses exceed 64-bit node packing");
}

std::size_t nodes_per_message(std::size_t nb, int horizon) {
    std::size_t n = 0, layer = 1;
    for (int t = 1; t <= horizon; ++t) {
        n += layer;
        layer *= nb;
    }
    return n;
}

} // namespace

std::size_t ChannelCode::symbol(std::size_t w, int t, std::size_t b_hist) const {
    if (w >= M || t < 1 || t > horizon || b_hist >= ipow(nb, t - 1))
        throw ValidationError("code node out of range");
    if (!lazy) return trees[w][static_cast<std::size_t>(t) - 1][b_hist];
    if (input_rule) {
        std::size_t a_hist = 0, a = 0;
        for (int j = 1; j <= t; ++j) {
            const std::size_t bh = b_hist / ipow(nb, t - j);
            a = draw_symbol(seed, w, j, bh, input_rule->row(j, a_hist, bh));
            a_hist = a_hist * na + a;
        }
        return a;
    }
    PolicyDriver d = make_driver(*policy_spec, *policy_rule, grid_of(*this));
    if (!d.reset()) throw CaseMismatch("encoding needs a known starting state");
    std::size_t a = 0;
    for (int j = 1; j <= t; ++j) {
        const std::size_t bh = b_hist / ipow(nb, t - j);
        a = draw_symbol(seed, w, j, bh, d.row());
        if (j < t) d.advance(a, (b_hist / ipow(nb, t - 1 - j)) % nb);
    }
    return a;
}

std::vector<std::size_t> ChannelCode::trajectory(std::size_t w,
                                                 const std::vector<std::size_t>& b_path) const {
    if (b_path.size() + 1 < static_cast<std::size_t>(horizon))
        throw ValidationError("output path shorter than the code horizon");
    std::vector<std::size_t> a(static_cast<std::size_t>(horizon));
    std::size_t b_hist = 0;
    for (int t = 1; t <= horizon; ++t) {
        a[static_cast<std::size_t>(t) - 1] = symbol(w, t, b_hist);
        if (t < horizon) b_hist = b_hist * nb + b_path[static_cast<std::size_t>(t) - 1];
    }
    return a;
}

namespace {

ChannelCode code_shell(std::size_t M, std::size_t na, std::size_t nb, int horizon,
                       std::uint64_t seed) {
    if (M < 1) throw ValidationError("a code needs at least one message");
    check_tree_addressing(nb, horizon);
    ChannelCode code;
    code.M = M;
    code.na = na;
    code.nb = nb;
    code.horizon = horizon;
    code.seed = seed;
    const std::size_t nodes = nodes_per_message(nb, horizon);
    code.lazy = nodes > (1u << 16) || M > (1u << 22) / nodes;
    return code;
}

} // namespace

ChannelCode sample_code(const InputDistribution& rule, std::size_t M, int horizon,
                        std::uint64_t seed) {
    if (horizon > rule.horizon)
        throw CaseMismatch("code horizon exceeds the input law horizon");
    ChannelCode code = code_shell(M, rule.na, rule.nb, horizon, seed);
    code.input_rule = std::make_shared<InputDistribution>(rule);
    if (code.lazy) return code;
    code.trees.resize(M);
    for (std::size_t w = 0; w < M; ++w) {
        code.trees[w].resize(static_cast<std::size_t>(horizon));
        std::size_t layer = 1;
        for (int t = 1; t <= horizon; ++t) {
            auto& nodes = code.trees[w][static_cast<std::size_t>(t) - 1];
            nodes.resize(layer);
            for (std::size_t bh = 0; bh < layer; ++bh) {
                std::size_t a_hist = 0;
                for (int j = 1; j < t; ++j)
                    a_hist = a_hist * rule.na +
                             code.trees[w][static_cast<std::size_t>(j) - 1][bh / ipow(rule.nb, t - j)];
                nodes[bh] = static_cast<std::uint32_t>(
                    draw_symbol(seed, w, t, bh, rule.row(t, a_hist, bh)));
            }
            layer *= rule.nb;
        }
    }
    return code;
}

ChannelCode sample_code(const MarkovChannelSpec& spec, const PolicyRule& rule, std::size_t M,
                        int horizon, std::uint64_t seed) {
    ChannelCode code = code_shell(M, spec.na(), spec.nb(), horizon, seed);
    code.policy_rule = std::make_shared<PolicyRule>(rule);
    code.policy_spec = std::make_shared<MarkovChannelSpec>(spec);
    if (rule.tag == CaseTag::General)
        code.belief_grid = std::make_shared<BeliefGrid>(
            BeliefGrid::make(spec.ns(), std::max(rule.belief_resolution, 1)));
    {
        PolicyDriver probe = make_driver(*code.policy_spec, *code.policy_rule, grid_of(code));
        if (!probe.reset()) throw CaseMismatch("encoding needs a known starting state");
    }
    if (code.lazy) return code;
    code.trees.resize(M);
    for (std::size_t w = 0; w < M; ++w) {
        code.trees[w].resize(static_cast<std::size_t>(horizon));
        std::vector<PolicyDriver> layer_state(1);
        layer_state[0] = make_driver(*code.policy_spec, *code.policy_rule, grid_of(code));
        layer_state[0].reset();
        std::size_t layer = 1;
        for (int t = 1; t <= horizon; ++t) {
            auto& nodes = code.trees[w][static_cast<std::size_t>(t) - 1];
            nodes.resize(layer);
            for (std::size_t bh = 0; bh < layer; ++bh)
                nodes[bh] = static_cast<std::uint32_t>(
                    draw_symbol(seed, w, t, bh, layer_state[bh].row()));
            if (t == horizon) break;
            std::vector<PolicyDriver> next(layer * code.nb);
            for (std::size_t bh = 0; bh < layer; ++bh)
                for (std::size_t b = 0; b < code.nb; ++b) {
                    next[bh * code.nb + b] = layer_state[bh];
                    next[bh * code.nb + b].advance(nodes[bh], b);
                }
            layer_state = std::move(next);
            layer *= code.nb;
        }
    }
    return code;
}

TransmitResult transmit(const MarkovChannelSpec& spec, const ChannelCode& code, std::size_t w,
                        std::uint64_t seed, std::uint64_t trial) {
    if (w >= code.M) throw ValidationError("message index out of range");
    RngStream stream(seed, trial, kChannelStream);
    TransmitResult out;
    out.w = w;
    std::size_t s = stream.sample(spec.initial);
    std::size_t b_hist = 0;
    for (int t = 1; t <= code.horizon; ++t) {
        const std::size_t a = code.symbol(w, t, b_hist);
        const std::size_t b = stream.sample(spec.emission_row(s, a));
        out.s.push_back(s);
        out.a.push_back(a);
        out.b.push_back(b);
        s = stream.sample(spec.transition_row(s, a, b));
        b_hist = b_hist * code.nb + b;
    }
    return out;
}

namespace {

// score per message: coincidence-corrected likelihood with the
// codebook-induced causal input law, all in log domain
std::vector<double> decode_scores(const ChannelCode& code,
                                  const std::vector<std::size_t>& b_path,
                                  const std::vector<std::vector<double>>& chan_log2) {
    const std::size_t M = code.M;
    const int T = code.horizon;
    std::vector<std::vector<std::size_t>> traj(M);
    for (std::size_t w = 0; w < M; ++w) traj[w] = code.trajectory(w, b_path);
    // prefix coincidence counts among the M evaluated trajectories
    std::vector<std::vector<std::size_t>> cnt(M, std::vector<std::size_t>(T + 1));
    std::map<std::vector<std::size_t>, std::size_t> classes;
    for (std::size_t w = 0; w < M; ++w) cnt[w][0] = M;
    for (int t = 1; t <= T; ++t) {
        classes.clear();
        for (std::size_t w = 0; w < M; ++w) {
            std::vector<std::size_t> prefix(traj[w].begin(), traj[w].begin() + t);
            ++classes[std::move(prefix)];
        }
        for (std::size_t w = 0; w < M; ++w)
            cnt[w][t] = classes[std::vector<std::size_t>(traj[w].begin(), traj[w].begin() + t)];
    }
    std::vector<double> scores(M, 0.0);
    for (std::size_t w = 0; w < M; ++w) {
        double s = -std::log2(static_cast<double>(cnt[w][T])); // multiplicity correction
        for (int t = 1; t <= T; ++t) {
            const double lp = chan_log2[w][static_cast<std::size_t>(t) - 1];
            if (lp == kNegInf) {
                s = kNegInf;
                break;
            }
            s += lp + std::log2(static_cast<double>(cnt[w][t])) -
                 std::log2(static_cast<double>(cnt[w][t - 1]));
        }
        scores[w] = s;
    }
    return scores;
}

DecodeResult pick(std::vector<double> scores) {
    DecodeResult res;
    res.w_hat = 0;
    for (std::size_t w = 1; w < scores.size(); ++w)
        if (scores[w] > scores[res.w_hat]) res.w_hat = w;
    res.scores_log2 = std::move(scores);
    return res;
}

} // namespace

DecodeResult ml_decode(const MarkovChannelSpec& spec, const ChannelCode& code,
                       const std::vector<std::size_t>& b_path) {
    if (b_path.size() != static_cast<std::size_t>(code.horizon))
        throw ValidationError("observation length differs from the code horizon");
    std::vector<std::vector<double>> chan_log2(code.M);
    for (std::size_t w = 0; w < code.M; ++w) {
        const auto a = code.trajectory(w, b_path);
        Belief pi = spec.initial;
        chan_log2[w].assign(static_cast<std::size_t>(code.horizon), kNegInf);
        for (int t = 1; t <= code.horizon; ++t) {
            const std::size_t at = a[static_cast<std::size_t>(t) - 1];
            const std::size_t bt = b_path[static_cast<std::size_t>(t) - 1];
            const double p = output_predictive(spec, pi, at)[bt];
            if (p <= 0.0) break;
            chan_log2[w][static_cast<std::size_t>(t) - 1] = std::log2(p);
            pi = filter_update(spec, pi, at, bt);
        }
    }
    return pick(decode_scores(code, b_path, chan_log2));
}

DecodeResult ml_decode(const GeneralChannelSpec& spec, const ChannelCode& code,
                       const std::vector<std::size_t>& b_path) {
    if (b_path.size() != static_cast<std::size_t>(code.horizon))
        throw ValidationError("observation length differs from the code horizon");
    if (spec.horizon < code.horizon || spec.na() != code.na || spec.nb() != code.nb)
        throw CaseMismatch("channel tables do not cover the code");
    std::vector<std::vector<double>> chan_log2(code.M);
    for (std::size_t w = 0; w < code.M; ++w) {
        const auto a = code.trajectory(w, b_path);
        chan_log2[w].assign(static_cast<std::size_t>(code.horizon), kNegInf);
        std::size_t a_seq = 0, b_hist = 0;
        for (int t = 1; t <= code.horizon; ++t) {
            const std::size_t at = a[static_cast<std::size_t>(t) - 1];
            const std::size_t bt = b_path[static_cast<std::size_t>(t) - 1];
            a_seq = a_seq * code.na + at;
            const double p = spec.p(t, a_seq, b_hist, bt);
            if (p <= 0.0) break;
            chan_log2[w][static_cast<std::size_t>(t) - 1] = std::log2(p);
            b_hist = b_hist * code.nb + bt;
        }
    }
    return pick(decode_scores(code, b_path, chan_log2));
}

WilsonInterval wilson95(std::size_t k, std::size_t n) {
    WilsonInterval iv;
    if (n == 0) return iv;
    const double z = 1.959963984540054; // 97.5% normal quantile
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double denom = 1.0 + z * z / nn;
    const double center = (p + z * z / (2.0 * nn)) / denom;
    const double half =
        z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    // center - half cancels exactly at the boundaries in exact arithmetic;
    // pin them so fp noise cannot produce a tiny positive lower bound
    iv.lo = k == 0 ? 0.0 : std::max(0.0, center - half);
    iv.hi = k == n ? 1.0 : std::min(1.0, center + half);
    return iv;
}

DensityReport density_chains(const MarkovChannelSpec& spec, const PolicyRule& rule, int chains,
                             int horizon, std::uint64_t seed, int threads) {
    if (chains < 1 || horizon < 1) throw ValidationError("chains and horizon must be positive");
    std::shared_ptr<BeliefGrid> grid;
    if (rule.tag == CaseTag::General)
        grid = std::make_shared<BeliefGrid>(
            BeliefGrid::make(spec.ns(), std::max(rule.belief_resolution, 1)));
    DensityReport rep;
    rep.chains = chains;
    rep.horizon = horizon;
    rep.chain_rates_bits.assign(static_cast<std::size_t>(chains), 0.0);
    make_driver(spec, rule, grid.get()); // alphabet check before workers start
    std::vector<std::string> failures(static_cast<std::size_t>(chains));
    parallel_for(static_cast<std::size_t>(chains), threads, [&](std::size_t c) {
        try {
            RngStream stream(seed, c, kChainStream);
            std::size_t s = stream.sample(spec.initial);
            PolicyDriver d = make_driver(spec, rule, grid.get());
            // a starting state the receiver cannot infer is told to both ends
            if (!d.reset()) d.reset_with_state(s);
            double sum = 0.0;
            for (int t = 1; t <= horizon; ++t) {
                const std::size_t a = stream.sample(d.row());
                const std::size_t b = stream.sample(spec.emission_row(s, a));
                const double num = output_predictive(spec, d.pi, a)[b];
                const ControlAction& u = d.action();
                double mix = 0.0;
                for (std::size_t i = 0; i < u.beliefs.size(); ++i)
                    for (std::size_t aa = 0; aa < spec.na(); ++aa)
                        mix += u.mass(i, aa) * output_predictive(spec, u.beliefs[i], aa)[b];
                sum += std::log2(std::max(num, 1e-300)) - std::log2(std::max(mix, 1e-300));
                s = stream.sample(spec.transition_row(s, a, b));
                d.advance(a, b);
            }
            rep.chain_rates_bits[c] = sum / static_cast<double>(horizon);
        } catch (const Error& e) {
            failures[c] = e.what();
        }
    });
    for (const auto& f : failures)
        if (!f.empty()) throw CaseMismatch(f);
    for (double v : rep.chain_rates_bits) rep.mean_bits += v;
    rep.mean_bits /= static_cast<double>(chains);
    if (chains > 1) {
        for (double v : rep.chain_rates_bits) {
            const double d = v - rep.mean_bits;
            rep.variance += d * d;
        }
        rep.variance /= static_cast<double>(chains - 1);
    }
    rep.std_error = std::sqrt(rep.variance / static_cast<double>(chains));
    return rep;
}

SimulationReport simulate(const MarkovChannelSpec& spec, const ChannelCode& code,
                          std::size_t trials, std::uint64_t seed, int threads,
                          const DensityOptions* density) {
    SimulationReport rep;
    rep.trials = trials;
    std::vector<char> wrong(trials, 0);
    std::vector<std::string> failures(trials);
    parallel_for(trials, threads, [&](std::size_t i) {
        try {
            RngStream pick_stream(seed, i, kMessageStream);
            const std::size_t w = std::min(
                code.M - 1, static_cast<std::size_t>(pick_stream.uniform() *
                                                     static_cast<double>(code.M)));
            const TransmitResult tx = transmit(spec, code, w, seed, i);
            const DecodeResult rx = ml_decode(spec, code, tx.b);
            wrong[i] = rx.w_hat != w;
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    for (const auto& f : failures)
        if (!f.empty()) throw CaseMismatch(f);
    for (char c : wrong) rep.errors += static_cast<std::size_t>(c);
    rep.error_rate = trials ? static_cast<double>(rep.errors) / static_cast<double>(trials) : 0.0;
    rep.wilson = wilson95(rep.errors, trials);
    if (density && density->policy)
        rep.density = density_chains(spec, *density->policy, density->chains, density->horizon,
                                     seed, threads);
    return rep;
}

} // namespace feedcap
