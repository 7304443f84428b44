#include "feedcap/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "feedcap/parallel.hpp"

namespace feedcap {

using ordered_json = nlohmann::ordered_json;

namespace {

std::size_t ipow(std::size_t base, int exp) {
    std::size_t v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

// C(res + dim - 1, dim - 1), saturating
std::uint64_t lattice_size(std::size_t dim, int res) {
    std::uint64_t v = 1;
    for (std::size_t i = 1; i < dim; ++i) {
        const std::uint64_t num = static_cast<std::uint64_t>(res) + i;
        if (v > std::numeric_limits<std::uint64_t>::max() / num)
            return std::numeric_limits<std::uint64_t>::max();
        v = v * num / i;
    }
    return v;
}

std::string gamma_desc(const std::vector<double>& g) {
    std::string out = "(";
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) out += ",";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", g[i]);
        out += buf;
    }
    return out + ")";
}

} // namespace

const char* case_name(CaseTag t) {
    switch (t) {
        case CaseTag::StateFromIo: return "state_io";
        case CaseTag::StateFromInput: return "state_in";
        case CaseTag::StateFromOutput: return "state_out";
        case CaseTag::ReceiverCsi: return "csi";
        case CaseTag::BeliefFromOutput: return "belief_out";
        case CaseTag::General: return "general";
    }
    return "?";
}

std::optional<CaseTag> case_from_name(const std::string& name) {
    for (CaseTag t : {CaseTag::StateFromIo, CaseTag::StateFromInput, CaseTag::StateFromOutput,
                      CaseTag::ReceiverCsi, CaseTag::BeliefFromOutput, CaseTag::General})
        if (name == case_name(t)) return t;
    return std::nullopt;
}

BeliefGrid BeliefGrid::make(std::size_t dim, int resolution) {
    if (dim < 1 || resolution < 1)
        throw ValidationError("lattice needs dim >= 1 and resolution >= 1");
    BeliefGrid g;
    g.dim = dim;
    g.resolution = resolution;
    std::vector<int> c(dim, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
        if (i + 1 == dim) {
            c[i] = left;
            g.coords.push_back(c);
            std::vector<double> w(dim);
            for (std::size_t k = 0; k < dim; ++k)
                w[k] = static_cast<double>(c[k]) / static_cast<double>(resolution);
            g.points.push_back(SimplexVector::renormalized(std::move(w)));
            return;
        }
        for (int v = 0; v <= left; ++v) {
            c[i] = v;
            rec(i + 1, left - v);
        }
    };
    rec(0, resolution);
    return g;
}

std::size_t BeliefGrid::snap(const SimplexVector& v, double* displacement) const {
    if (v.size() != dim) throw ValidationError("snap dimension mismatch");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = l1_distance(v, points[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (displacement) *displacement = best_d;
    return best;
}

double action_cost(const MarkovChannelSpec& spec, const ControlAction& u) {
    const std::size_t na = spec.na(), nb = spec.nb();
    std::vector<SimplexVector> pred;
    pred.reserve(u.beliefs.size() * na);
    std::vector<double> mix(nb, 0.0);
    for (std::size_t i = 0; i < u.beliefs.size(); ++i)
        for (std::size_t a = 0; a < na; ++a) {
            pred.push_back(output_predictive(spec, u.beliefs[i], a));
            const double m = u.mass(i, a);
            for (std::size_t b = 0; b < nb; ++b) mix[b] += m * pred.back()[b];
        }
    double cost = 0.0;
    for (std::size_t i = 0; i < u.beliefs.size(); ++i)
        for (std::size_t a = 0; a < na; ++a) {
            const double m = u.mass(i, a);
            if (m <= 0.0) continue;
            const auto& r = pred[i * na + a];
            for (std::size_t b = 0; b < nb; ++b) cost += m * xlog2_ratio(r[b], mix[b]);
        }
    return std::max(cost, 0.0);
}

std::vector<std::size_t> CaseModel::support_of(std::size_t state) const {
    switch (tag) {
        case CaseTag::StateFromOutput:
        case CaseTag::ReceiverCsi:
        case CaseTag::BeliefFromOutput:
            return {state};
        case CaseTag::StateFromIo:
        case CaseTag::StateFromInput:
        case CaseTag::General: {
            std::vector<std::size_t> ids;
            for (std::size_t i = 0; i < state_gamma[state].size(); ++i)
                if (state_gamma[state][i] > 0.0) ids.push_back(i);
            return ids;
        }
    }
    return {};
}

ControlAction CaseModel::assemble(std::size_t state, std::vector<SimplexVector> rows) const {
    const auto ids = support_of(state);
    if (rows.size() != ids.size())
        throw ValidationError("expected one conditional row per conditioning point");
    for (const auto& r : rows)
        if (r.size() != spec.na()) throw ValidationError("conditional row width mismatch");
    ControlAction u;
    u.support_ids = ids;
    u.rows = std::move(rows);
    switch (tag) {
        case CaseTag::StateFromOutput:
        case CaseTag::ReceiverCsi:
            u.weights = {1.0};
            u.beliefs = {SimplexVector::dirac(spec.ns(), state)};
            break;
        case CaseTag::BeliefFromOutput:
            u.weights = {1.0};
            u.beliefs = {belief_grid.points[state]};
            break;
        case CaseTag::StateFromIo:
        case CaseTag::StateFromInput:
            for (std::size_t s : ids) {
                u.weights.push_back(state_gamma[state][s]);
                u.beliefs.push_back(SimplexVector::dirac(spec.ns(), s));
            }
            break;
        case CaseTag::General:
            for (std::size_t i : ids) {
                u.weights.push_back(state_gamma[state][i]);
                u.beliefs.push_back(belief_grid.points[i]);
            }
            break;
    }
    return u;
}

std::vector<double> CaseModel::dynamics(std::size_t state, const ControlAction& u,
                                        SnapDiagnostics* diag) const {
    const std::size_t na = spec.na(), nb = spec.nb(), ns = spec.ns();
    std::vector<double> row(n_states, 0.0);
    auto note = [&](double disp) {
        if (!diag) return;
        diag->max_l1 = std::max(diag->max_l1, disp);
        diag->total_l1 += disp;
        ++diag->count;
    };
    switch (tag) {
        case CaseTag::StateFromOutput:
        case CaseTag::ReceiverCsi: {
            const std::size_t s = state;
            for (std::size_t b = 0; b < nb; ++b) {
                double mass = 0.0;
                for (std::size_t a = 0; a < na; ++a) mass += u.rows[0][a] * spec.p_emit(s, a, b);
                if (mass <= 0.0) continue;
                const long succ = spec.transition_row(s, 0, b).dirac_index();
                if (succ < 0)
                    throw CaseMismatch("transition row is not concentrated on one state");
                row[static_cast<std::size_t>(succ)] += mass;
            }
            break;
        }
        case CaseTag::StateFromIo:
        case CaseTag::StateFromInput: {
            const auto& gamma = state_gamma[state];
            for (std::size_t b = 0; b < nb; ++b) {
                std::vector<double> succ(ns, 0.0);
                double mass = 0.0;
                for (std::size_t i = 0; i < u.support_ids.size(); ++i) {
                    const std::size_t s = u.support_ids[i];
                    for (std::size_t a = 0; a < na; ++a) {
                        const double m = gamma[s] * u.rows[i][a] * spec.p_emit(s, a, b);
                        if (m <= 0.0) continue;
                        const long s2 = spec.transition_row(s, a, b).dirac_index();
                        if (s2 < 0)
                            throw CaseMismatch(
                                "transition row is not concentrated on one state");
                        succ[static_cast<std::size_t>(s2)] += m;
                        mass += m;
                    }
                }
                if (mass <= 0.0) continue;
                double disp = 0.0;
                const std::size_t g =
                    belief_grid.snap(SimplexVector::renormalized(std::move(succ)), &disp);
                note(disp);
                row[g] += mass;
            }
            break;
        }
        case CaseTag::BeliefFromOutput: {
            const Belief& pi = belief_grid.points[state];
            std::vector<SimplexVector> pred;
            pred.reserve(na);
            for (std::size_t a = 0; a < na; ++a) pred.push_back(output_predictive(spec, pi, a));
            for (std::size_t b = 0; b < nb; ++b) {
                double mass = 0.0;
                long pick = -1;
                for (std::size_t a = 0; a < na; ++a) {
                    const double m = u.rows[0][a] * pred[a][b];
                    mass += m;
                    if (pick < 0 && m > 0.0) pick = static_cast<long>(a);
                }
                if (mass <= 0.0 || pick < 0) continue;
                // the update is output-driven: any positive-mass input gives it
                const Belief next =
                    filter_update(spec, pi, static_cast<std::size_t>(pick), b);
                double disp = 0.0;
                const std::size_t g = belief_grid.snap(next, &disp);
                note(disp);
                row[g] += mass;
            }
            break;
        }
        case CaseTag::General: {
            const auto& gamma = state_gamma[state];
            for (std::size_t b = 0; b < nb; ++b) {
                std::vector<double> meta(belief_grid.points.size(), 0.0);
                double mass = 0.0;
                for (std::size_t i = 0; i < u.support_ids.size(); ++i) {
                    const Belief& pi = u.beliefs[i];
                    const double gi = gamma[u.support_ids[i]];
                    for (std::size_t a = 0; a < na; ++a) {
                        const double ua = u.rows[i][a];
                        if (ua <= 0.0) continue;
                        const SimplexVector pred = output_predictive(spec, pi, a);
                        const double m = gi * ua * pred[b];
                        if (m <= 0.0) continue;
                        double disp = 0.0;
                        const std::size_t g =
                            belief_grid.snap(filter_update(spec, pi, a, b), &disp);
                        note(disp);
                        meta[g] += m;
                        mass += m;
                    }
                }
                if (mass <= 0.0) continue;
                for (auto& v : meta) v /= mass;
                // nearest enumerated meta-state in L1, lowest index on ties
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t g = 0; g < n_states; ++g) {
                    double d = 0.0;
                    for (std::size_t k = 0; k < meta.size(); ++k)
                        d += std::abs(meta[k] - state_gamma[g][k]);
                    if (d < best_d) {
                        best_d = d;
                        best = g;
                    }
                }
                note(best_d);
                row[best] += mass;
            }
            break;
        }
    }
    double total = 0.0;
    for (double v : row) total += v;
    if (std::abs(total - 1.0) > 1e-10)
        throw InternalDisagreement("successor row mass " + std::to_string(total) +
                                   " deviates from 1");
    return row;
}

namespace {

StructureFlag flag_for(CaseTag tag) {
    switch (tag) {
        case CaseTag::StateFromIo: return StructureFlag::StateFromIo;
        case CaseTag::StateFromInput: return StructureFlag::StateFromInput;
        case CaseTag::StateFromOutput: return StructureFlag::StateFromOutput;
        case CaseTag::ReceiverCsi: return StructureFlag::ReceiverCsi;
        case CaseTag::BeliefFromOutput: return StructureFlag::BeliefFromOutput;
        case CaseTag::General: break;
    }
    return StructureFlag::NoIsi; // unused
}

} // namespace

CaseModel make_case_model(const MarkovChannelSpec& spec, const BuildOptions& opts) {
    CaseTag tag;
    if (opts.tag) {
        tag = *opts.tag;
        if (tag != CaseTag::General) {
            const StructureFlag f = flag_for(tag);
            if (!spec.flags.count(f)) {
                StructureCheckOptions sopts;
                sopts.belief_resolution = std::max(opts.belief_resolution, 2);
                const auto chk = check_structure(spec, f, sopts);
                if (!chk.ok)
                    throw FlagUnsupported(std::string("spec does not support the ") +
                                          case_name(tag) + " case: " + chk.detail);
            }
        }
    } else if (spec.flags.count(StructureFlag::ReceiverCsi)) {
        tag = CaseTag::ReceiverCsi;
    } else if (spec.flags.count(StructureFlag::StateFromOutput) || spec.ns() == 1) {
        tag = CaseTag::StateFromOutput;
    } else if (spec.flags.count(StructureFlag::StateFromInput)) {
        tag = CaseTag::StateFromInput;
    } else if (spec.flags.count(StructureFlag::StateFromIo)) {
        tag = CaseTag::StateFromIo;
    } else if (spec.flags.count(StructureFlag::BeliefFromOutput)) {
        tag = CaseTag::BeliefFromOutput;
    } else if (opts.experimental) {
        tag = CaseTag::General;
    } else {
        throw FlagUnsupported(
            "no supported reduction declared; pick a case or enable the experimental general "
            "solver");
    }
    if (tag == CaseTag::General) {
        if (!opts.experimental)
            throw FlagUnsupported("the general meta-belief solver is experimental and must be "
                                  "enabled explicitly");
        if (spec.ns() != 2)
            throw FlagUnsupported("the general meta-belief solver supports two-state specs only");
        if (opts.meta_resolution < 1 || opts.meta_resolution > 8)
            throw ValidationError("meta resolution must be in 1..8");
    }
    CaseModel m;
    m.tag = tag;
    m.spec = spec;
    constexpr std::uint64_t kStateCap = 250000;
    switch (tag) {
        case CaseTag::StateFromOutput:
        case CaseTag::ReceiverCsi:
            m.n_states = spec.ns();
            for (std::size_t s = 0; s < spec.ns(); ++s) {
                std::vector<double> g(spec.ns(), 0.0);
                g[s] = 1.0;
                m.state_gamma.push_back(std::move(g));
                m.state_desc.push_back("s=" + std::to_string(s));
            }
            break;
        case CaseTag::StateFromIo:
        case CaseTag::StateFromInput:
        case CaseTag::BeliefFromOutput: {
            if (lattice_size(spec.ns(), opts.belief_resolution) > kStateCap)
                throw CapExceeded("belief lattice exceeds " + std::to_string(kStateCap) +
                                  " points");
            m.belief_grid = BeliefGrid::make(spec.ns(), opts.belief_resolution);
            m.n_states = m.belief_grid.points.size();
            for (std::size_t i = 0; i < m.n_states; ++i) {
                m.state_gamma.push_back(m.belief_grid.points[i].weights());
                m.state_desc.push_back(
                    (tag == CaseTag::BeliefFromOutput ? "pi=" : "gamma=") +
                    gamma_desc(m.state_gamma.back()));
            }
            break;
        }
        case CaseTag::General: {
            if (lattice_size(spec.ns(), opts.belief_resolution) > kStateCap)
                throw CapExceeded("belief lattice exceeds " + std::to_string(kStateCap) +
                                  " points");
            m.belief_grid = BeliefGrid::make(spec.ns(), opts.belief_resolution);
            m.meta_resolution = opts.meta_resolution;
            if (lattice_size(m.belief_grid.points.size(), opts.meta_resolution) > kStateCap)
                throw CapExceeded("meta-belief lattice exceeds " + std::to_string(kStateCap) +
                                  " points");
            const BeliefGrid meta =
                BeliefGrid::make(m.belief_grid.points.size(), opts.meta_resolution);
            m.n_states = meta.points.size();
            for (std::size_t i = 0; i < m.n_states; ++i) {
                m.state_gamma.push_back(meta.points[i].weights());
                m.state_desc.push_back("meta=" + gamma_desc(m.state_gamma.back()));
            }
            break;
        }
    }
    return m;
}

MDPInstance build_instance(const MarkovChannelSpec& spec, const BuildOptions& opts) {
    MDPInstance inst;
    inst.model = make_case_model(spec, opts);
    inst.action_grid = BeliefGrid::make(spec.na(), opts.action_resolution);
    const std::size_t k = inst.action_grid.points.size();
    const std::size_t n = inst.model.n_states;
    inst.actions.resize(n);
    inst.cost_bits.resize(n);
    inst.trans.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto ids = inst.model.support_of(s);
        std::uint64_t count = 1;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (count > opts.action_cap / k)
                throw CapExceeded("state " + std::to_string(s) + " needs more than " +
                                  std::to_string(opts.action_cap) + " candidate actions");
            count *= k;
        }
        inst.actions[s].reserve(static_cast<std::size_t>(count));
        for (std::uint64_t idx = 0; idx < count; ++idx) {
            std::vector<SimplexVector> rows;
            rows.reserve(ids.size());
            std::uint64_t rem = idx;
            for (std::size_t i = ids.size(); i-- > 0;) {
                rows.push_back(inst.action_grid.points[rem % k]);
                rem /= k;
            }
            std::reverse(rows.begin(), rows.end()); // first support point most significant
            inst.actions[s].push_back(inst.model.assemble(s, std::move(rows)));
        }
    }
    const double cost_cap = std::log2(static_cast<double>(spec.nb())) + 1e-9;
    std::vector<SnapDiagnostics> diags(n);
    std::vector<std::string> failures(n);
    parallel_for(n, opts.threads, [&](std::size_t s) {
        try {
            inst.cost_bits[s].reserve(inst.actions[s].size());
            inst.trans[s].reserve(inst.actions[s].size());
            for (const auto& u : inst.actions[s]) {
                const double c = action_cost(spec, u);
                if (c > cost_cap)
                    throw InternalDisagreement("action cost " + std::to_string(c) +
                                               " above the log|B| bound");
                inst.cost_bits[s].push_back(c);
                inst.trans[s].push_back(inst.model.dynamics(s, u, &diags[s]));
            }
        } catch (const Error& e) {
            failures[s] = e.what();
        }
    });
    for (const auto& f : failures)
        if (!f.empty()) throw InternalDisagreement(f);
    for (const auto& d : diags) {
        inst.snap.max_l1 = std::max(inst.snap.max_l1, d.max_l1);
        inst.snap.total_l1 += d.total_l1;
        inst.snap.count += d.count;
    }
    return inst;
}

namespace {

struct RviOutcome {
    double v_star = 0.0;
    std::vector<double> w;
    std::vector<std::size_t> policy;
    bool converged = false;
    int iterations = 0;
    double final_span = 0.0;
};

RviOutcome run_rvi(const MDPInstance& inst, std::vector<double> w, double span_tol,
                   int max_iters, int threads) {
    const std::size_t n = inst.n_states();
    RviOutcome out;
    out.policy.assign(n, 0);
    std::vector<double> tw(n, 0.0);
    for (int it = 1; it <= max_iters; ++it) {
        parallel_for(n, threads, [&](std::size_t s) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t a = 0; a < inst.actions[s].size(); ++a) {
                double v = inst.cost_bits[s][a];
                const auto& row = inst.trans[s][a];
                for (std::size_t s2 = 0; s2 < n; ++s2) v += row[s2] * w[s2];
                if (v > best) {
                    best = v;
                    arg = a;
                }
            }
            tw[s] = best;
            out.policy[s] = arg;
        });
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t s = 0; s < n; ++s) {
            const double d = tw[s] - w[s];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        out.v_star = tw[0];
        out.final_span = hi - lo;
        out.iterations = it;
        for (std::size_t s = 0; s < n; ++s) w[s] = tw[s] - tw[0];
        if (out.final_span < span_tol) {
            out.converged = true;
            break;
        }
    }
    out.w = std::move(w);
    return out;
}

// Bellman right-hand side for candidate per-support rows at one state.
double bellman_value(const MDPInstance& inst, const std::vector<double>& w, std::size_t s,
                     std::vector<SimplexVector> rows) {
    const ControlAction u = inst.model.assemble(s, std::move(rows));
    double v = action_cost(inst.model.spec, u);
    const auto row = inst.model.dynamics(s, u, nullptr);
    for (std::size_t s2 = 0; s2 < row.size(); ++s2) v += row[s2] * w[s2];
    return v;
}

// Shrinking coordinate-pair ascent on the action rows at one state.
bool refine_rows(const MDPInstance& inst, const std::vector<double>& w, std::size_t s,
                 std::vector<SimplexVector>& rows) {
    double base = bellman_value(inst, w, s, rows);
    bool changed = false;
    const std::size_t na = inst.model.spec.na();
    double step = 0.5 / static_cast<double>(std::max(inst.action_grid.resolution, 1));
    for (; step > 1e-9; step *= 0.5) {
        bool moved = true;
        while (moved) {
            moved = false;
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t i = 0; i < na; ++i) {
                    if (rows[r][i] < step) continue;
                    for (std::size_t j = 0; j < na; ++j) {
                        if (j == i) continue;
                        std::vector<double> cand = rows[r].weights();
                        cand[i] -= step;
                        cand[j] += step;
                        auto trial = rows;
                        trial[r] = SimplexVector::renormalized(std::move(cand));
                        const double v = bellman_value(inst, w, s, trial);
                        if (v > base + 1e-14) {
                            base = v;
                            rows = std::move(trial);
                            moved = true;
                            changed = true;
                        }
                    }
                }
        }
    }
    return changed;
}

} // namespace

ACOESolution solve_acoe(MDPInstance& instance, double span_tol, int max_iters, int threads,
                        bool refine) {
    const std::size_t n = instance.n_states();
    if (n == 0) throw ValidationError("instance has no states");
    RviOutcome out = run_rvi(instance, std::vector<double>(n, 0.0), span_tol, max_iters, threads);
    ACOESolution sol;
    sol.v_star_coarse_bits = out.v_star;
    if (refine) {
        bool any = false;
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<SimplexVector> rows = instance.actions[s][out.policy[s]].rows;
            if (!refine_rows(instance, out.w, s, rows)) continue;
            ControlAction u = instance.model.assemble(s, std::move(rows));
            instance.cost_bits[s].push_back(action_cost(instance.model.spec, u));
            instance.trans[s].push_back(instance.model.dynamics(s, u, &instance.snap));
            instance.actions[s].push_back(std::move(u));
            any = true;
        }
        if (any) {
            const int used = out.iterations;
            out = run_rvi(instance, std::move(out.w), span_tol, max_iters, threads);
            out.iterations += used;
            sol.refined = true;
        }
    }
    sol.v_star_bits = out.v_star;
    sol.w = out.w;
    sol.policy = out.policy;
    sol.converged = out.converged;
    sol.iterations = out.iterations;
    sol.final_span = out.final_span;
    if (!sol.refined) sol.v_star_coarse_bits = sol.v_star_bits;
    // residual of the optimality equation under the returned (V*, w)
    double residual = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < instance.actions[s].size(); ++a) {
            double v = instance.cost_bits[s][a];
            for (std::size_t s2 = 0; s2 < n; ++s2) v += instance.trans[s][a][s2] * sol.w[s2];
            best = std::max(best, v);
        }
        residual = std::max(residual, std::abs(sol.v_star_bits + sol.w[s] - best));
    }
    sol.acoe_residual = residual;
    return sol;
}

MixingResult check_mixing(const MDPInstance& instance) {
    MixingResult res;
    std::vector<std::vector<double>> rows;
    for (const auto& per_state : instance.trans)
        for (const auto& row : per_state) {
            rows.push_back(row);
            ++res.rows_compared;
        }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    res.alpha = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            res.alpha = std::max(res.alpha, tv_distance(rows[i], rows[j]));
    res.contraction = res.alpha < 1.0;
    return res;
}

ClosedFormResult closed_form_noisi_csi(const MarkovChannelSpec& spec, int action_resolution) {
    if (!spec.flags.count(StructureFlag::NoIsi) ||
        !spec.flags.count(StructureFlag::ReceiverCsi))
        throw FlagUnsupported("closed form needs the no_isi and receiver_csi flags");
    const std::size_t ns = spec.ns(), na = spec.na(), nb = spec.nb();
    // autonomous state chain: marginal of the revealed next state, input-free
    std::vector<std::vector<double>> q(ns, std::vector<double>(ns, 0.0));
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t b = 0; b < nb; ++b) q[s][b % ns] += spec.p_emit(s, 0, b);
    // recurrent classes by mutual reachability
    std::vector<std::vector<bool>> reach(ns, std::vector<bool>(ns, false));
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < ns; ++j) reach[i][j] = q[i][j] > 0.0;
    for (std::size_t k = 0; k < ns; ++k)
        for (std::size_t i = 0; i < ns; ++i)
            for (std::size_t j = 0; j < ns; ++j)
                if (reach[i][k] && reach[k][j]) reach[i][j] = true;
    std::vector<long> cls(ns, -1);
    long n_classes = 0;
    for (std::size_t s = 0; s < ns; ++s) {
        bool recurrent = true;
        for (std::size_t t = 0; t < ns; ++t)
            if (reach[s][t] && !reach[t][s]) recurrent = false;
        if (!recurrent) continue;
        for (std::size_t t = 0; t < s; ++t)
            if (cls[t] >= 0 && reach[s][t] && reach[t][s]) {
                cls[s] = cls[t];
                break;
            }
        if (cls[s] < 0) cls[s] = n_classes++;
    }
    if (n_classes != 1)
        throw NotErgodic("state chain has " + std::to_string(n_classes) + " recurrent classes");
    // stationary law via the lazy chain (kills periodicity)
    ClosedFormResult res;
    res.nu.assign(ns, 1.0 / static_cast<double>(ns));
    bool settled = false;
    for (int it = 0; it < 5000000 && !settled; ++it) {
        std::vector<double> next(ns, 0.0);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t s2 = 0; s2 < ns; ++s2)
                next[s2] += res.nu[s] * 0.5 * ((s == s2 ? 1.0 : 0.0) + q[s][s2]);
        settled = tv_distance(next, res.nu) <= 1e-12;
        res.nu = std::move(next);
    }
    if (!settled) throw NotConverged("stationary law did not settle to 1e-12");
    // per-state best one-step cost over the input lattice, then locally refined
    const BeliefGrid grid = BeliefGrid::make(na, action_resolution);
    auto state_cost = [&](std::size_t s, const SimplexVector& row) {
        ControlAction u;
        u.support_ids = {s};
        u.weights = {1.0};
        u.beliefs = {SimplexVector::dirac(ns, s)};
        u.rows = {row};
        return action_cost(spec, u);
    };
    for (std::size_t s = 0; s < ns; ++s) {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t g = 0; g < grid.points.size(); ++g) {
            const double c = state_cost(s, grid.points[g]);
            if (c > best) {
                best = c;
                arg = g;
            }
        }
        SimplexVector row = grid.points[arg];
        for (double step = 0.5 / static_cast<double>(action_resolution); step > 1e-10;
             step *= 0.5) {
            bool moved = true;
            while (moved) {
                moved = false;
                for (std::size_t i = 0; i < na; ++i) {
                    if (row[i] < step) continue;
                    for (std::size_t j = 0; j < na; ++j) {
                        if (j == i) continue;
                        std::vector<double> cand = row.weights();
                        cand[i] -= step;
                        cand[j] += step;
                        SimplexVector trial = SimplexVector::renormalized(std::move(cand));
                        const double c = state_cost(s, trial);
                        if (c > best + 1e-15) {
                            best = c;
                            row = std::move(trial);
                            moved = true;
                        }
                    }
                }
            }
        }
        res.per_state_bits.push_back(best);
        res.per_state_row.push_back(std::move(row));
        res.v_star_bits += res.nu[s] * best;
    }
    return res;
}

PolicyRule policy_to_input(const MDPInstance& instance, const ACOESolution& solution) {
    if (solution.policy.size() != instance.n_states())
        throw ValidationError("policy length does not match the state count");
    PolicyRule rule;
    rule.tag = instance.model.tag;
    rule.ns = instance.model.spec.ns();
    rule.na = instance.model.spec.na();
    rule.nb = instance.model.spec.nb();
    rule.belief_resolution = instance.model.belief_grid.resolution;
    rule.meta_resolution = instance.model.meta_resolution;
    rule.v_star_bits = solution.v_star_bits;
    rule.state_gamma = instance.model.state_gamma;
    for (std::size_t s = 0; s < instance.n_states(); ++s) {
        const std::size_t a = solution.policy[s];
        if (a >= instance.actions[s].size())
            throw ValidationError("policy action index out of range");
        rule.action_per_state.push_back(instance.actions[s][a]);
    }
    return rule;
}

std::string save_policy(const PolicyRule& rule) {
    ordered_json j;
    j["version"] = 1;
    j["case"] = case_name(rule.tag);
    j["alphabets"] = ordered_json{{"S", rule.ns}, {"A", rule.na}, {"B", rule.nb}};
    j["belief_resolution"] = rule.belief_resolution;
    j["meta_resolution"] = rule.meta_resolution;
    j["v_star_bits"] = rule.v_star_bits;
    ordered_json states = ordered_json::array();
    for (std::size_t s = 0; s < rule.action_per_state.size(); ++s) {
        const auto& u = rule.action_per_state[s];
        ordered_json su;
        su["gamma"] = rule.state_gamma[s];
        ordered_json act;
        act["support"] = u.support_ids;
        act["weights"] = u.weights;
        ordered_json beliefs = ordered_json::array();
        for (const auto& b : u.beliefs) beliefs.push_back(b.weights());
        act["beliefs"] = std::move(beliefs);
        ordered_json rows = ordered_json::array();
        for (const auto& r : u.rows) rows.push_back(r.weights());
        act["rows"] = std::move(rows);
        su["action"] = std::move(act);
        states.push_back(std::move(su));
    }
    j["states"] = std::move(states);
    return j.dump(2) + "\n";
}

PolicyRule load_policy_from_json(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid json: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("policy must be a json object");
    if (j.value("version", 1) != 1) throw ParseError("unsupported policy version");
    for (const char* key : {"case", "alphabets", "states"})
        if (!j.contains(key)) throw ParseError(std::string("policy needs '") + key + "'");
    PolicyRule rule;
    const auto tag = case_from_name(j["case"].get<std::string>());
    if (!tag) throw ParseError("unknown case '" + j["case"].get<std::string>() + "'");
    rule.tag = *tag;
    rule.ns = j["alphabets"].value("S", 0);
    rule.na = j["alphabets"].value("A", 0);
    rule.nb = j["alphabets"].value("B", 0);
    if (rule.ns == 0 || rule.na == 0 || rule.nb == 0)
        throw ParseError("policy alphabets need sizes S, A and B");
    rule.belief_resolution = j.value("belief_resolution", 0);
    rule.meta_resolution = j.value("meta_resolution", 0);
    rule.v_star_bits = j.value("v_star_bits", 0.0);
    for (const auto& su : j["states"]) {
        if (!su.contains("gamma") || !su.contains("action"))
            throw ParseError("each policy state needs 'gamma' and 'action'");
        rule.state_gamma.push_back(su["gamma"].get<std::vector<double>>());
        const auto& act = su["action"];
        ControlAction u;
        u.support_ids = act["support"].get<std::vector<std::size_t>>();
        u.weights = act["weights"].get<std::vector<double>>();
        double wsum = 0.0;
        for (double w : u.weights) {
            if (w < 0.0) throw ValidationError("negative policy action weight");
            wsum += w;
        }
        if (std::abs(wsum - 1.0) > kRowSumTol)
            throw ValidationError("policy action weights deviate from unit mass");
        for (const auto& b : act["beliefs"]) {
            std::vector<double> v = b.get<std::vector<double>>();
            if (v.size() != rule.ns) throw ValidationError("policy belief width mismatch");
            u.beliefs.emplace_back(std::move(v));
        }
        for (const auto& r : act["rows"]) {
            std::vector<double> v = r.get<std::vector<double>>();
            if (v.size() != rule.na) throw ValidationError("policy row width mismatch");
            u.rows.emplace_back(std::move(v));
        }
        if (u.support_ids.size() != u.weights.size() ||
            u.support_ids.size() != u.beliefs.size() || u.support_ids.size() != u.rows.size())
            throw ValidationError("policy action field lengths disagree");
        rule.action_per_state.push_back(std::move(u));
    }
    if (rule.state_gamma.size() != rule.action_per_state.size() || rule.state_gamma.empty())
        throw ValidationError("policy needs at least one state");
    return rule;
}

PolicyRule load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open policy file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_policy_from_json(ss.str());
}

StationaryResult stationary_distribution(const MDPInstance& instance,
                                         const std::vector<std::size_t>& policy, double tol,
                                         int max_iters) {
    const std::size_t n = instance.n_states();
    if (policy.size() != n) throw ValidationError("policy length does not match the state count");
    for (std::size_t s = 0; s < n; ++s)
        if (policy[s] >= instance.actions[s].size())
            throw ValidationError("policy action index out of range");
    StationaryResult res;
    res.lambda.assign(n, 1.0 / static_cast<double>(n));
    res.converged = false;
    for (int it = 1; it <= max_iters; ++it) {
        std::vector<double> next(n, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            const auto& row = instance.trans[s][policy[s]];
            for (std::size_t s2 = 0; s2 < n; ++s2) next[s2] += res.lambda[s] * row[s2];
        }
        const double gap = tv_distance(next, res.lambda);
        res.lambda = std::move(next);
        res.iterations = it;
        if (gap <= tol) {
            res.converged = true;
            break;
        }
    }
    for (std::size_t s = 0; s < n; ++s)
        res.long_run_cost_bits += res.lambda[s] * instance.cost_bits[s][policy[s]];
    return res;
}

namespace {

std::vector<std::uint64_t> belief_bits(const SimplexVector& v) {
    std::vector<std::uint64_t> bits(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double d = v[i];
        std::memcpy(&bits[i], &d, sizeof d);
    }
    return bits;
}

} // namespace

ReductionResult reduce_input_to_belief(const MarkovChannelSpec& spec,
                                       const InputDistribution& input, std::size_t cell_cap) {
    if (spec.na() != input.na || spec.nb() != input.nb)
        throw CaseMismatch("channel and input alphabets differ");
    const int T = input.horizon;
    const std::size_t na = input.na, nb = input.nb;
    if (ipow(na, T) > cell_cap / ipow(nb, T))
        throw CapExceeded("history tree exceeds the cell cap " + std::to_string(cell_cap));
    using Key = std::pair<std::size_t, std::vector<std::uint64_t>>; // (b-history, belief bits)
    struct Atom {
        std::size_t a_hist, b_hist;
        double mass;
        Belief pi;
    };
    std::vector<Atom> atoms{{0, 0, 1.0, spec.initial}};
    std::map<Key, double> r_mass{{{0, belief_bits(spec.initial)}, 1.0}};
    ReductionResult res;
    res.rule.horizon = T;
    res.rule.steps.resize(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        struct Group {
            Belief pi;
            std::vector<double> row;
            double mass = 0.0;
        };
        std::map<Key, Group> groups;
        for (const auto& atom : atoms) {
            Key key{atom.b_hist, belief_bits(atom.pi)};
            auto& g = groups[key];
            if (g.row.empty()) {
                g.pi = atom.pi;
                g.row.assign(na, 0.0);
            }
            g.mass += atom.mass;
            for (std::size_t a = 0; a < na; ++a)
                g.row[a] += atom.mass * input.p(t, atom.a_hist, atom.b_hist, a);
        }
        for (const auto& [key, g] : groups)
            res.rule.steps[static_cast<std::size_t>(t) - 1].push_back(
                {g.pi, key.first, SimplexVector::renormalized(g.row), g.mass});
        // compare the reproduced (belief, input, output-history) joints cell by cell
        std::map<Key, double> r_next;
        for (const auto& [key, g] : groups) {
            const auto it = r_mass.find(key);
            const double rm = it == r_mass.end() ? 0.0 : it->second;
            const SimplexVector rule_row = SimplexVector::renormalized(g.row);
            for (std::size_t a = 0; a < na; ++a) {
                const SimplexVector pred = output_predictive(spec, g.pi, a);
                for (std::size_t b = 0; b < nb; ++b) {
                    const double qv = g.row[a] * pred[b];
                    const double rv = rm * rule_row[a] * pred[b];
                    res.max_deviation = std::max(res.max_deviation, std::abs(qv - rv));
                    if (rv > 0.0)
                        r_next[{key.first * nb + b,
                                belief_bits(filter_update(spec, g.pi, a, b))}] += rv;
                }
            }
        }
        // any rule-side mass at a key the original never reaches is a deviation
        for (const auto& [key, rm] : r_mass)
            if (!groups.count(key)) res.max_deviation = std::max(res.max_deviation, rm);
        r_mass = std::move(r_next);
        if (t == T) break;
        std::vector<Atom> next;
        for (const auto& atom : atoms)
            for (std::size_t a = 0; a < na; ++a) {
                const double w = atom.mass * input.p(t, atom.a_hist, atom.b_hist, a);
                if (w <= 0.0) continue;
                const SimplexVector pred = output_predictive(spec, atom.pi, a);
                for (std::size_t b = 0; b < nb; ++b) {
                    if (pred[b] <= 0.0) continue;
                    next.push_back({atom.a_hist * na + a, atom.b_hist * nb + b, w * pred[b],
                                    filter_update(spec, atom.pi, a, b)});
                }
            }
        atoms = std::move(next);
    }
    return res;
}

} // namespace feedcap
