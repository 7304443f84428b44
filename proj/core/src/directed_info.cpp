#include "feedcap/directed_info.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "feedcap/filtering.hpp"
#include "feedcap/parallel.hpp"
#include "feedcap/rng.hpp"

namespace feedcap {

namespace {

std::size_t ipow(std::size_t base, int exp) {
    std::size_t v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

void check_alphabets(std::size_t cna, std::size_t cnb, const InputDistribution& input) {
    if (cna != input.na || cnb != input.nb)
        throw CaseMismatch("channel and input alphabets differ");
}

JointMeasure joint_shell(std::size_t na, std::size_t nb, int horizon, std::size_t cell_cap) {
    JointMeasure m;
    m.na = na;
    m.nb = nb;
    m.horizon = horizon;
    m.n_a_seq = ipow(na, horizon);
    m.n_b_seq = ipow(nb, horizon);
    if (m.n_a_seq > cell_cap / m.n_b_seq)
        throw CapExceeded("joint table needs " + std::to_string(m.n_a_seq) + " x " +
                          std::to_string(m.n_b_seq) + " cells, cap is " +
                          std::to_string(cell_cap));
    m.p.assign(m.n_a_seq * m.n_b_seq, 0.0);
    return m;
}

} // namespace

JointMeasure joint_measure(const GeneralChannelSpec& channel, const InputDistribution& input,
                           std::size_t cell_cap) {
    check_alphabets(channel.na(), channel.nb(), input);
    if (channel.horizon < input.horizon)
        throw CaseMismatch("channel horizon is shorter than the input horizon");
    const int T = input.horizon;
    JointMeasure m = joint_shell(input.na, input.nb, T, cell_cap);
    std::function<void(int, std::size_t, std::size_t, double)> walk =
        [&](int t, std::size_t a_hist, std::size_t b_hist, double prob) {
            if (t > T) {
                m.p[a_hist * m.n_b_seq + b_hist] = prob;
                return;
            }
            for (std::size_t a = 0; a < m.na; ++a) {
                const double q = input.p(t, a_hist, b_hist, a);
                if (q <= 0.0) continue;
                const std::size_t a2 = a_hist * m.na + a;
                for (std::size_t b = 0; b < m.nb; ++b) {
                    const double w = channel.p(t, a2, b_hist, b);
                    if (w <= 0.0) continue;
                    walk(t + 1, a2, b_hist * m.nb + b, prob * q * w);
                }
            }
        };
    walk(1, 0, 0, 1.0);
    return m;
}

JointMeasure joint_measure(const MarkovChannelSpec& channel, const InputDistribution& input,
                           std::size_t cell_cap) {
    check_alphabets(channel.na(), channel.nb(), input);
    const int T = input.horizon;
    JointMeasure m = joint_shell(input.na, input.nb, T, cell_cap);
    std::function<void(int, std::size_t, std::size_t, const Belief&, double)> walk =
        [&](int t, std::size_t a_hist, std::size_t b_hist, const Belief& pi, double prob) {
            if (t > T) {
                m.p[a_hist * m.n_b_seq + b_hist] = prob;
                return;
            }
            for (std::size_t a = 0; a < m.na; ++a) {
                const double q = input.p(t, a_hist, b_hist, a);
                if (q <= 0.0) continue;
                const SimplexVector pred = output_predictive(channel, pi, a);
                for (std::size_t b = 0; b < m.nb; ++b) {
                    if (pred[b] <= 0.0) continue;
                    walk(t + 1, a_hist * m.na + a, b_hist * m.nb + b,
                         filter_update(channel, pi, a, b), prob * q * pred[b]);
                }
            }
        };
    walk(1, 0, 0, channel.initial, 1.0);
    return m;
}

GeneralChannelSpec general_view(const MarkovChannelSpec& spec, int horizon,
                                std::size_t cell_cap) {
    if (horizon < 1) throw ValidationError("horizon must be >= 1");
    const std::size_t na = spec.na(), nb = spec.nb();
    std::size_t cells = 0;
    for (int t = 1; t <= horizon; ++t) {
        const std::size_t step_cells = ipow(na, t) * ipow(nb, t);
        if (step_cells > cell_cap - cells)
            throw CapExceeded("horizon view exceeds the cell cap " + std::to_string(cell_cap));
        cells += step_cells;
    }
    std::vector<std::vector<SimplexVector>> step_rows(static_cast<std::size_t>(horizon));
    for (int t = 1; t <= horizon; ++t)
        step_rows[static_cast<std::size_t>(t) - 1].assign(ipow(na, t) * ipow(nb, t - 1),
                                                          SimplexVector::uniform(nb));
    // walk reachable histories with the filter; unreachable rows stay uniform
    std::function<void(int, std::size_t, std::size_t, const Belief&)> walk =
        [&](int t, std::size_t a_hist, std::size_t b_hist, const Belief& pi) {
            if (t > horizon) return;
            const std::size_t nbh = ipow(nb, t - 1);
            for (std::size_t a = 0; a < na; ++a) {
                const SimplexVector pred = output_predictive(spec, pi, a);
                step_rows[static_cast<std::size_t>(t) - 1][(a_hist * na + a) * nbh + b_hist] =
                    pred;
                for (std::size_t b = 0; b < nb; ++b)
                    if (pred[b] > 0.0)
                        walk(t + 1, a_hist * na + a, b_hist * nb + b,
                             filter_update(spec, pi, a, b));
            }
        };
    walk(1, 0, 0, spec.initial);
    return make_general_spec(spec.input, spec.output, horizon, std::move(step_rows), cell_cap);
}

namespace {

// All prefix marginals of a dense joint: joint[t] = P(a^t, b^t),
// ab[t] = P(a^t, b^{t-1}), outp[t] = P(b^t), inp[t] = P(a^t).
struct PrefixMarginals {
    int T = 0;
    std::size_t na = 0, nb = 0;
    std::vector<std::vector<double>> joint, ab, outp, inp;
};

PrefixMarginals prefix_marginals(const JointMeasure& j) {
    PrefixMarginals m;
    m.T = j.horizon;
    m.na = j.na;
    m.nb = j.nb;
    m.joint.resize(static_cast<std::size_t>(m.T) + 1);
    m.ab.resize(static_cast<std::size_t>(m.T) + 1);
    m.outp.resize(static_cast<std::size_t>(m.T) + 1);
    m.inp.resize(static_cast<std::size_t>(m.T) + 1);
    m.joint[static_cast<std::size_t>(m.T)] = j.p;
    for (int t = m.T; t >= 1; --t) {
        const std::size_t nah = ipow(m.na, t - 1), nbh = ipow(m.nb, t - 1);
        const std::size_t nbt = nbh * m.nb;
        const auto& cur = m.joint[static_cast<std::size_t>(t)];
        auto& prev = m.joint[static_cast<std::size_t>(t) - 1];
        prev.assign(nah * nbh, 0.0);
        auto& ab = m.ab[static_cast<std::size_t>(t)];
        ab.assign(nah * m.na * nbh, 0.0);
        for (std::size_t ah = 0; ah < nah; ++ah)
            for (std::size_t a = 0; a < m.na; ++a)
                for (std::size_t bh = 0; bh < nbh; ++bh) {
                    double sum = 0.0;
                    for (std::size_t b = 0; b < m.nb; ++b)
                        sum += cur[(ah * m.na + a) * nbt + bh * m.nb + b];
                    ab[(ah * m.na + a) * nbh + bh] = sum;
                    prev[ah * nbh + bh] += sum;
                }
    }
    for (int t = 0; t <= m.T; ++t) {
        const std::size_t nat = ipow(m.na, t), nbt = ipow(m.nb, t);
        const auto& cur = m.joint[static_cast<std::size_t>(t)];
        auto& ob = m.outp[static_cast<std::size_t>(t)];
        auto& ia = m.inp[static_cast<std::size_t>(t)];
        ob.assign(nbt, 0.0);
        ia.assign(nat, 0.0);
        for (std::size_t a = 0; a < nat; ++a)
            for (std::size_t b = 0; b < nbt; ++b) {
                ob[b] += cur[a * nbt + b];
                ia[a] += cur[a * nbt + b];
            }
    }
    return m;
}

} // namespace

DirectedInfoResult directed_information(const JointMeasure& j) {
    const PrefixMarginals m = prefix_marginals(j);
    const int T = j.horizon;
    DirectedInfoResult res;
    res.per_step_bits.assign(static_cast<std::size_t>(T), 0.0);
    for (int t = 1; t <= T; ++t) {
        const std::size_t nat = ipow(j.na, t), nbh = ipow(j.nb, t - 1);
        const auto& cur = m.joint[static_cast<std::size_t>(t)];
        const auto& ab = m.ab[static_cast<std::size_t>(t)];
        double info = 0.0;
        for (std::size_t a = 0; a < nat; ++a)
            for (std::size_t bh = 0; bh < nbh; ++bh)
                for (std::size_t b = 0; b < j.nb; ++b) {
                    const double p = cur[a * nbh * j.nb + bh * j.nb + b];
                    if (p <= 0.0) continue;
                    info += p * std::log2((p * m.outp[static_cast<std::size_t>(t) - 1][bh]) /
                                          (ab[a * nbh + bh] *
                                           m.outp[static_cast<std::size_t>(t)][bh * j.nb + b]));
                }
        res.per_step_bits[static_cast<std::size_t>(t) - 1] = info;
        res.total_bits += info;
    }
    // expected-density form over the full support
    double div = 0.0;
    for (std::size_t a_seq = 0; a_seq < j.n_a_seq; ++a_seq)
        for (std::size_t b_seq = 0; b_seq < j.n_b_seq; ++b_seq) {
            const double p = j.p[a_seq * j.n_b_seq + b_seq];
            if (p <= 0.0) continue;
            double log_q = 0.0; // log2 of the causal input product
            for (int t = 1; t <= T; ++t) {
                const std::size_t at = a_seq / ipow(j.na, T - t);
                const std::size_t bh = b_seq / ipow(j.nb, T - t + 1);
                const std::size_t nbh = ipow(j.nb, t - 1);
                const double num = m.ab[static_cast<std::size_t>(t)][at * nbh + bh];
                const double den =
                    t == 1 ? 1.0
                           : m.joint[static_cast<std::size_t>(t) - 1]
                                    [(a_seq / ipow(j.na, T - t + 1)) * nbh + bh];
                log_q += std::log2(num / den);
            }
            div += p * (std::log2(p / m.outp[static_cast<std::size_t>(T)][b_seq]) - log_q);
        }
    res.divergence_form_bits = div;
    if (std::abs(div - res.total_bits) > 1e-10)
        throw InternalDisagreement("causal sum " + std::to_string(res.total_bits) +
                                   " and expected density " + std::to_string(div) + " differ");
    return res;
}

ReverseInfoResult reverse_directed_information(const JointMeasure& j) {
    const PrefixMarginals m = prefix_marginals(j);
    const int T = j.horizon;
    ReverseInfoResult res;
    res.per_step_bits.assign(static_cast<std::size_t>(T), 0.0);
    // t = 1 conditions on an empty output history; that term is zero by
    // definition, so the loop starts at t = 2.
    for (int t = 2; t <= T; ++t) {
        const std::size_t nah = ipow(j.na, t - 1), nbh = ipow(j.nb, t - 1);
        const auto& ab = m.ab[static_cast<std::size_t>(t)];
        double info = 0.0;
        for (std::size_t ah = 0; ah < nah; ++ah)
            for (std::size_t a = 0; a < j.na; ++a)
                for (std::size_t bh = 0; bh < nbh; ++bh) {
                    const double p = ab[(ah * j.na + a) * nbh + bh];
                    if (p <= 0.0) continue;
                    const double hist = m.joint[static_cast<std::size_t>(t) - 1][ah * nbh + bh];
                    const double cond_in = m.inp[static_cast<std::size_t>(t)][ah * j.na + a] /
                                           m.inp[static_cast<std::size_t>(t) - 1][ah];
                    info += p * std::log2((p / hist) / cond_in);
                }
        res.per_step_bits[static_cast<std::size_t>(t) - 1] = info;
        res.total_bits += info;
    }
    return res;
}

double mutual_information(const JointMeasure& j) {
    std::vector<double> pa(j.n_a_seq, 0.0), pb(j.n_b_seq, 0.0);
    for (std::size_t a = 0; a < j.n_a_seq; ++a)
        for (std::size_t b = 0; b < j.n_b_seq; ++b) {
            pa[a] += j.mass(a, b);
            pb[b] += j.mass(a, b);
        }
    double info = 0.0;
    for (std::size_t a = 0; a < j.n_a_seq; ++a)
        for (std::size_t b = 0; b < j.n_b_seq; ++b) {
            const double p = j.mass(a, b);
            if (p > 0.0) info += p * std::log2(p / (pa[a] * pb[b]));
        }
    return info;
}

MarkovDirectedInfo markov_directed_information(const MarkovChannelSpec& spec,
                                               const InputDistribution& input,
                                               std::size_t cell_cap) {
    check_alphabets(spec.na(), spec.nb(), input);
    const int T = input.horizon;
    const std::size_t na = input.na, nb = input.nb;
    if (ipow(na, T) > cell_cap / ipow(nb, T))
        throw CapExceeded("history tree exceeds the cell cap " + std::to_string(cell_cap));
    struct Atom {
        std::size_t a_hist, b_hist;
        double mass;
        Belief pi;
    };
    std::vector<Atom> atoms{{0, 0, 1.0, spec.initial}};
    MarkovDirectedInfo res;
    res.per_step_bits.assign(static_cast<std::size_t>(T), 0.0);
    for (int t = 1; t <= T; ++t) {
        const std::size_t nbh = ipow(nb, t - 1);
        std::vector<double> hist_mass(nbh, 0.0), hist_out(nbh * nb, 0.0);
        for (const auto& atom : atoms) {
            hist_mass[atom.b_hist] += atom.mass;
            for (std::size_t a = 0; a < na; ++a) {
                const double w = atom.mass * input.p(t, atom.a_hist, atom.b_hist, a);
                if (w <= 0.0) continue;
                const SimplexVector pred = output_predictive(spec, atom.pi, a);
                for (std::size_t b = 0; b < nb; ++b)
                    hist_out[atom.b_hist * nb + b] += w * pred[b];
            }
        }
        double info = 0.0;
        std::vector<Atom> next;
        for (const auto& atom : atoms)
            for (std::size_t a = 0; a < na; ++a) {
                const double w = atom.mass * input.p(t, atom.a_hist, atom.b_hist, a);
                if (w <= 0.0) continue;
                const SimplexVector pred = output_predictive(spec, atom.pi, a);
                for (std::size_t b = 0; b < nb; ++b) {
                    const double cell = w * pred[b];
                    if (cell <= 0.0) continue;
                    // p(b | pi, a) against p(b | b^{t-1})
                    info += cell * std::log2(pred[b] * hist_mass[atom.b_hist] /
                                             hist_out[atom.b_hist * nb + b]);
                    next.push_back({atom.a_hist * na + a, atom.b_hist * nb + b, cell,
                                    filter_update(spec, atom.pi, a, b)});
                }
            }
        res.per_step_bits[static_cast<std::size_t>(t) - 1] = info;
        res.total_bits += info;
        atoms = std::move(next);
    }
    return res;
}

InfoDensitySample information_density(const JointMeasure& j, std::size_t a_seq,
                                      std::size_t b_seq) {
    if (a_seq >= j.n_a_seq || b_seq >= j.n_b_seq)
        throw ValidationError("trajectory index out of range");
    const PrefixMarginals m = prefix_marginals(j);
    const int T = j.horizon;
    InfoDensitySample s;
    s.increments_bits.assign(static_cast<std::size_t>(T), 0.0);
    for (int t = 1; t <= T; ++t) {
        const std::size_t at = a_seq / ipow(j.na, T - t);
        const std::size_t bt = b_seq / ipow(j.nb, T - t);
        const std::size_t bh = b_seq / ipow(j.nb, T - t + 1);
        const std::size_t nbt = ipow(j.nb, t), nbh = ipow(j.nb, t - 1);
        const double num1 = m.joint[static_cast<std::size_t>(t)][at * nbt + bt];
        const double den1 = m.ab[static_cast<std::size_t>(t)][at * nbh + bh];
        const double num2 = m.outp[static_cast<std::size_t>(t)][bt];
        const double den2 = m.outp[static_cast<std::size_t>(t) - 1][bh];
        if (num1 <= 0.0 || den1 <= 0.0 || num2 <= 0.0 || den2 <= 0.0)
            throw ZeroMassCell("trajectory leaves the support at step " + std::to_string(t));
        const double inc = std::log2(num1 / den1) - std::log2(num2 / den2);
        s.increments_bits[static_cast<std::size_t>(t) - 1] = inc;
        s.value_bits += inc;
    }
    return s;
}

namespace {

// Optimizer workspace: frozen causal channel densities per trajectory plus the
// row layout implied by the feedback pattern (step t rows keyed by the input
// history and the visible output prefix).
struct CapacityWorkspace {
    int T = 0;
    std::size_t na = 0, nb = 0, n_a_seq = 0, n_b_seq = 0;
    FeedbackPattern pattern;
    std::vector<double> chan; // prod_t p(b_t | a^t, b^{t-1}) per (a_seq, b_seq)
    std::vector<int> hidden;  // hidden suffix length per step
    std::vector<std::size_t> nvis, offset;
    std::size_t n_rows = 0;

    std::size_t row_of(int t, std::size_t a_hist, std::size_t vis) const {
        return offset[static_cast<std::size_t>(t) - 1] +
               a_hist * nvis[static_cast<std::size_t>(t) - 1] + vis;
    }
    std::size_t vis_of(int t, std::size_t b_seq) const {
        return b_seq / ipow(nb, T - t + 1 + hidden[static_cast<std::size_t>(t) - 1]);
    }
};

CapacityWorkspace make_workspace(const GeneralChannelSpec& channel, int horizon,
                                 FeedbackPattern pattern, std::size_t cell_cap) {
    if (horizon < 1) throw ValidationError("horizon must be >= 1");
    if (channel.horizon < horizon)
        throw CaseMismatch("channel horizon is shorter than the requested horizon");
    if (pattern.kind == FeedbackPattern::Kind::Delay && pattern.delta < 1)
        throw ValidationError("feedback delay must be >= 1");
    CapacityWorkspace ws;
    ws.T = horizon;
    ws.na = channel.na();
    ws.nb = channel.nb();
    ws.n_a_seq = ipow(ws.na, horizon);
    ws.n_b_seq = ipow(ws.nb, horizon);
    ws.pattern = pattern;
    if (ws.n_a_seq > cell_cap / ws.n_b_seq)
        throw CapExceeded("trajectory table exceeds the cell cap " + std::to_string(cell_cap));
    ws.chan.assign(ws.n_a_seq * ws.n_b_seq, 0.0);
    for (std::size_t a_seq = 0; a_seq < ws.n_a_seq; ++a_seq)
        for (std::size_t b_seq = 0; b_seq < ws.n_b_seq; ++b_seq) {
            double prod = 1.0;
            for (int t = 1; t <= horizon && prod > 0.0; ++t) {
                const std::size_t at = a_seq / ipow(ws.na, horizon - t);
                const std::size_t bh = b_seq / ipow(ws.nb, horizon - t + 1);
                const std::size_t bt = (b_seq / ipow(ws.nb, horizon - t)) % ws.nb;
                prod *= channel.p(t, at, bh, bt);
            }
            ws.chan[a_seq * ws.n_b_seq + b_seq] = prod;
        }
    ws.offset.resize(static_cast<std::size_t>(horizon) + 1, 0);
    for (int t = 1; t <= horizon; ++t) {
        ws.hidden.push_back(pattern.hidden_suffix(t));
        ws.nvis.push_back(ipow(ws.nb, (t - 1) - ws.hidden.back()));
        ws.offset[static_cast<std::size_t>(t)] =
            ws.offset[static_cast<std::size_t>(t) - 1] + ipow(ws.na, t - 1) * ws.nvis.back();
    }
    ws.n_rows = ws.offset[static_cast<std::size_t>(horizon)];
    return ws;
}

// Directed information (bits over the whole block) of the parameter rows x;
// fills the trajectory law and the output marginal as side products.
double evaluate_rows(const CapacityWorkspace& ws, const std::vector<double>& x,
                     std::vector<double>& traj, std::vector<double>& pb) {
    traj.assign(ws.n_a_seq * ws.n_b_seq, 0.0);
    pb.assign(ws.n_b_seq, 0.0);
    for (std::size_t a_seq = 0; a_seq < ws.n_a_seq; ++a_seq)
        for (std::size_t b_seq = 0; b_seq < ws.n_b_seq; ++b_seq) {
            const double c = ws.chan[a_seq * ws.n_b_seq + b_seq];
            if (c <= 0.0) continue;
            double q = 1.0;
            for (int t = 1; t <= ws.T && q > 0.0; ++t) {
                const std::size_t ah = a_seq / ipow(ws.na, ws.T - t + 1);
                const std::size_t a = (a_seq / ipow(ws.na, ws.T - t)) % ws.na;
                q *= x[ws.row_of(t, ah, ws.vis_of(t, b_seq)) * ws.na + a];
            }
            if (q <= 0.0) continue;
            const double mass = q * c;
            traj[a_seq * ws.n_b_seq + b_seq] = mass;
            pb[b_seq] += mass;
        }
    double f = 0.0;
    for (std::size_t a_seq = 0; a_seq < ws.n_a_seq; ++a_seq)
        for (std::size_t b_seq = 0; b_seq < ws.n_b_seq; ++b_seq) {
            const double mass = traj[a_seq * ws.n_b_seq + b_seq];
            if (mass > 0.0) f += mass * std::log2(ws.chan[a_seq * ws.n_b_seq + b_seq]);
        }
    for (const double p : pb)
        if (p > 0.0) f -= p * std::log2(p);
    return f;
}

// Euclidean projection onto the probability simplex.
void project_simplex(std::vector<double>& v) {
    std::vector<double> u(v);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cums = 0.0, lambda = 1.0 - u[0];
    for (std::size_t j = 0; j < u.size(); ++j) {
        cums += u[j];
        const double shift = (1.0 - cums) / static_cast<double>(j + 1);
        if (u[j] + shift > 0.0) lambda = shift;
    }
    double sum = 0.0;
    for (auto& e : v) {
        e = std::max(e + lambda, 0.0);
        sum += e;
    }
    for (auto& e : v) e /= sum;
}

// d f / d x_{row, i}: sum over matching trajectories of the product of all
// other factors times (log2 chan - log2 pb - 1/ln2). The last term is constant
// across i on the simplex but keeping it makes the gradient exact.
void row_gradient(const CapacityWorkspace& ws, const std::vector<double>& x, int t,
                  std::size_t a_hist, std::size_t vis, const std::vector<double>& pb,
                  std::vector<double>& grad) {
    grad.assign(ws.na, 0.0);
    constexpr double kInvLn2 = 1.4426950408889634;
    const std::size_t a_lo = a_hist * ipow(ws.na, ws.T - t + 1);
    const std::size_t a_hi = a_lo + ipow(ws.na, ws.T - t + 1);
    const std::size_t b_span = ipow(ws.nb, ws.T - (t - 1 - ws.hidden[static_cast<std::size_t>(t) - 1]));
    const std::size_t b_lo = vis * b_span, b_hi = b_lo + b_span;
    for (std::size_t a_seq = a_lo; a_seq < a_hi; ++a_seq) {
        const std::size_t a_t = (a_seq / ipow(ws.na, ws.T - t)) % ws.na;
        for (std::size_t b_seq = b_lo; b_seq < b_hi; ++b_seq) {
            double rest = ws.chan[a_seq * ws.n_b_seq + b_seq];
            if (rest <= 0.0) continue;
            for (int j = 1; j <= ws.T && rest > 0.0; ++j) {
                if (j == t) continue;
                const std::size_t ah = a_seq / ipow(ws.na, ws.T - j + 1);
                const std::size_t a = (a_seq / ipow(ws.na, ws.T - j)) % ws.na;
                rest *= x[ws.row_of(j, ah, ws.vis_of(j, b_seq)) * ws.na + a];
            }
            if (rest <= 0.0) continue;
            const double p = std::max(pb[b_seq], 1e-300);
            grad[a_t] += rest * (std::log2(ws.chan[a_seq * ws.n_b_seq + b_seq]) -
                                 std::log2(p) - kInvLn2);
        }
    }
}

struct StartOutcome {
    double value = 0.0; // block directed information in bits
    std::vector<double> rows;
    int sweeps = 0;
    bool converged = false;
    std::uint64_t evaluations = 0;
};

StartOutcome run_start(const CapacityWorkspace& ws, std::vector<double> x,
                       const CapacityOptions& opts) {
    StartOutcome out;
    std::vector<double> traj, pb, grad, trial_row(ws.na), saved_row(ws.na);
    double f = evaluate_rows(ws, x, traj, pb);
    ++out.evaluations;
    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        const double f_before = f;
        for (int t = 1; t <= ws.T; ++t) {
            const std::size_t nah = ipow(ws.na, t - 1);
            const std::size_t nvis = ws.nvis[static_cast<std::size_t>(t) - 1];
            for (std::size_t ah = 0; ah < nah; ++ah)
                for (std::size_t vis = 0; vis < nvis; ++vis) {
                    const std::size_t base = ws.row_of(t, ah, vis) * ws.na;
                    // a few projected-gradient steps with backtracking
                    for (int inner = 0; inner < 12; ++inner) {
                        row_gradient(ws, x, t, ah, vis, pb, grad);
                        for (std::size_t i = 0; i < ws.na; ++i)
                            saved_row[i] = x[base + i];
                        bool accepted = false;
                        double eta = 1.0;
                        for (int half = 0; half < 24; ++half, eta *= 0.5) {
                            for (std::size_t i = 0; i < ws.na; ++i)
                                trial_row[i] = saved_row[i] + eta * grad[i];
                            project_simplex(trial_row);
                            double move = 0.0;
                            for (std::size_t i = 0; i < ws.na; ++i)
                                move = std::max(move, std::abs(trial_row[i] - saved_row[i]));
                            if (move < 1e-14) break;
                            for (std::size_t i = 0; i < ws.na; ++i)
                                x[base + i] = trial_row[i];
                            const double f_trial = evaluate_rows(ws, x, traj, pb);
                            ++out.evaluations;
                            if (f_trial > f + 1e-15) {
                                f = f_trial;
                                accepted = true;
                                break;
                            }
                            for (std::size_t i = 0; i < ws.na; ++i)
                                x[base + i] = saved_row[i];
                        }
                        if (!accepted) {
                            // pb may be stale from a rejected trial
                            f = evaluate_rows(ws, x, traj, pb);
                            ++out.evaluations;
                            break;
                        }
                    }
                }
        }
        out.sweeps = sweep;
        if (f - f_before <= opts.sweep_tol) {
            out.converged = true;
            break;
        }
    }
    out.value = f;
    out.rows = std::move(x);
    return out;
}

InputDistribution rows_to_input(const CapacityWorkspace& ws, const std::vector<double>& x) {
    std::vector<std::vector<SimplexVector>> steps(static_cast<std::size_t>(ws.T));
    for (int t = 1; t <= ws.T; ++t) {
        const std::size_t nah = ipow(ws.na, t - 1), nbh = ipow(ws.nb, t - 1);
        const std::size_t nvis = ws.nvis[static_cast<std::size_t>(t) - 1];
        const std::size_t hidden_block = nbh / nvis;
        std::vector<SimplexVector> rows;
        rows.reserve(nah * nvis);
        for (std::size_t r = 0; r < nah * nvis; ++r) {
            const std::size_t base = (ws.offset[static_cast<std::size_t>(t) - 1] + r) * ws.na;
            rows.push_back(SimplexVector::renormalized(
                std::vector<double>(x.begin() + static_cast<long>(base),
                                    x.begin() + static_cast<long>(base + ws.na))));
        }
        auto& table = steps[static_cast<std::size_t>(t) - 1];
        table.reserve(nah * nbh);
        for (std::size_t ah = 0; ah < nah; ++ah)
            for (std::size_t bh = 0; bh < nbh; ++bh)
                table.push_back(rows[ah * nvis + bh / hidden_block]);
    }
    return make_input_distribution(ws.na, ws.nb, ws.T, ws.pattern, std::move(steps));
}

} // namespace

CapacityResult finite_horizon_capacity(const GeneralChannelSpec& channel, int horizon,
                                       FeedbackPattern pattern, const CapacityOptions& opts) {
    if (opts.starts < 1) throw ValidationError("optimizer needs at least one start");
    const CapacityWorkspace ws = make_workspace(channel, horizon, pattern, opts.cell_cap);
    std::vector<StartOutcome> outcomes(static_cast<std::size_t>(opts.starts));
    parallel_for(static_cast<std::size_t>(opts.starts), opts.threads, [&](std::size_t s) {
        std::vector<double> x(ws.n_rows * ws.na);
        if (s == 0) {
            std::fill(x.begin(), x.end(), 1.0 / static_cast<double>(ws.na));
        } else {
            RngStream rs(opts.seed, s);
            for (std::size_t r = 0; r < ws.n_rows; ++r) {
                const auto row = rs.dirichlet(ws.na);
                std::copy(row.begin(), row.end(), x.begin() + static_cast<long>(r * ws.na));
            }
        }
        outcomes[s] = run_start(ws, std::move(x), opts);
    });
    std::size_t best = 0;
    for (std::size_t s = 1; s < outcomes.size(); ++s)
        if (outcomes[s].value > outcomes[best].value) best = s;
    CapacityResult res;
    res.value_bits = outcomes[best].value / horizon;
    res.best = rows_to_input(ws, outcomes[best].rows);
    for (const auto& o : outcomes) {
        res.start_values.push_back(o.value / horizon);
        res.evaluations += o.evaluations;
    }
    res.sweeps = outcomes[best].sweeps;
    res.converged = outcomes[best].converged;
    return res;
}

CapacityResult finite_horizon_capacity(const MarkovChannelSpec& channel, int horizon,
                                       FeedbackPattern pattern, const CapacityOptions& opts) {
    return finite_horizon_capacity(general_view(channel, horizon, opts.cell_cap), horizon,
                                   pattern, opts);
}

ErrorExponentResult error_exponent(const GeneralChannelSpec& channel,
                                   const InputDistribution& input,
                                   const ErrorExponentQuery& query) {
    check_alphabets(channel.na(), channel.nb(), input);
    if (channel.horizon < input.horizon)
        throw CaseMismatch("channel horizon is shorter than the input horizon");
    if (query.rho_grid < 1) throw ValidationError("rho grid needs at least one segment");
    const int T = input.horizon;
    const std::size_t n_a_seq = ipow(input.na, T), n_b_seq = ipow(input.nb, T);
    // causal input products and channel densities per trajectory
    std::vector<double> qv(n_a_seq * n_b_seq, 0.0), pv(n_a_seq * n_b_seq, 0.0);
    for (std::size_t a_seq = 0; a_seq < n_a_seq; ++a_seq)
        for (std::size_t b_seq = 0; b_seq < n_b_seq; ++b_seq) {
            qv[a_seq * n_b_seq + b_seq] = input.directed_mass(T, a_seq, b_seq / input.nb);
            double prod = 1.0;
            for (int t = 1; t <= T && prod > 0.0; ++t) {
                const std::size_t at = a_seq / ipow(input.na, T - t);
                const std::size_t bh = b_seq / ipow(input.nb, T - t + 1);
                const std::size_t bt = (b_seq / ipow(input.nb, T - t)) % input.nb;
                prod *= channel.p(t, at, bh, bt);
            }
            pv[a_seq * n_b_seq + b_seq] = prod;
        }
    constexpr double kLn2 = 0.6931471805599453;
    const double rate_nats = query.rate_bits * kLn2;
    ErrorExponentResult res;
    res.exponent_nats = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= query.rho_grid; ++k) {
        const double rho = static_cast<double>(k) / static_cast<double>(query.rho_grid);
        double total = 0.0;
        for (std::size_t b_seq = 0; b_seq < n_b_seq; ++b_seq) {
            double inner = 0.0;
            for (std::size_t a_seq = 0; a_seq < n_a_seq; ++a_seq) {
                const double q = qv[a_seq * n_b_seq + b_seq];
                const double p = pv[a_seq * n_b_seq + b_seq];
                if (q > 0.0 && p > 0.0) inner += q * std::pow(p, 1.0 / (1.0 + rho));
            }
            if (inner > 0.0) total += std::pow(inner, 1.0 + rho);
        }
        const double value = -rho * rate_nats - std::log(total) / static_cast<double>(T);
        res.curve.emplace_back(rho, value);
        if (value > res.exponent_nats) {
            res.exponent_nats = value;
            res.best_rho = rho;
        }
    }
    res.exponent_bits = res.exponent_nats / kLn2;
    return res;
}

ErrorExponentResult error_exponent(const MarkovChannelSpec& channel,
                                   const InputDistribution& input,
                                   const ErrorExponentQuery& query) {
    return error_exponent(general_view(channel, input.horizon), input, query);
}

} // namespace feedcap
