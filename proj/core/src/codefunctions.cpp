#include "feedcap/codefunctions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace feedcap {

using ordered_json = nlohmann::ordered_json;

namespace {

std::size_t ipow(std::size_t base, int exp) {
    std::size_t v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

// packed a^{t-1} produced by f along the prefixes of a packed b^{t-1}
std::size_t history_prefix(const CodeFunction& f, int t, std::size_t b_hist, std::size_t nb) {
    std::size_t acc = 0;
    for (int j = 1; j < t; ++j) {
        const std::size_t bj = b_hist / ipow(nb, t - j); // first j-1 output symbols
        acc = acc * f.na + f.tables[static_cast<std::size_t>(j) - 1][bj];
    }
    return acc;
}

} // namespace

std::size_t CodeFunction::eval_prefix(int t, std::size_t b_hist) const {
    // packed a^t along packed b^{t-1}
    std::size_t acc = history_prefix(*this, t, b_hist, nb);
    return acc * na + tables[static_cast<std::size_t>(t) - 1][b_hist];
}

CodeFunction CodeFunctionSpace::decode(std::uint64_t index) const {
    CodeFunction f;
    f.horizon = horizon;
    f.na = na;
    f.nb = nb;
    f.tables.resize(static_cast<std::size_t>(horizon));
    for (int t = horizon; t >= 1; --t)
        f.tables[static_cast<std::size_t>(t) - 1].resize(nodes_per_step[static_cast<std::size_t>(t) - 1]);
    for (int t = horizon; t >= 1; --t) {
        auto& table = f.tables[static_cast<std::size_t>(t) - 1];
        for (std::size_t node = table.size(); node-- > 0;) {
            table[node] = static_cast<std::uint32_t>(index % na);
            index /= na;
        }
    }
    return f;
}

std::uint64_t CodeFunctionSpace::encode(const CodeFunction& f) const {
    std::uint64_t index = 0;
    for (int t = 1; t <= horizon; ++t)
        for (std::size_t node = 0; node < nodes_per_step[static_cast<std::size_t>(t) - 1]; ++node)
            index = index * na + f.tables[static_cast<std::size_t>(t) - 1][node];
    return index;
}

CodeFunctionSpace enumerate_codefunctions(std::size_t na, std::size_t nb, int horizon,
                                          std::uint64_t cap) {
    if (na < 1 || nb < 1 || horizon < 1)
        throw ValidationError("code function space needs na, nb >= 1 and horizon >= 1");
    CodeFunctionSpace space;
    space.horizon = horizon;
    space.na = na;
    space.nb = nb;
    space.size = 1;
    std::size_t nodes = 1;
    for (int t = 1; t <= horizon; ++t) {
        space.nodes_per_step.push_back(nodes);
        space.total_nodes += nodes;
        for (std::size_t i = 0; i < nodes; ++i) {
            if (space.size > cap / na)
                throw CapExceeded("code function space exceeds cap " + std::to_string(cap) +
                                  " at horizon " + std::to_string(t));
            space.size *= na;
        }
        nodes *= nb;
    }
    return space;
}

CodeFunctionDistribution make_codefunction_distribution(CodeFunctionSpace space,
                                                        std::vector<double> mass) {
    if (mass.size() != space.size)
        throw ValidationError("distribution length does not match the space size");
    double sum = 0.0;
    for (double v : mass) {
        if (v < 0.0 || std::isnan(v)) throw ValidationError("negative code-function mass");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
        throw ValidationError("code-function mass " + std::to_string(sum) +
                              " deviates from 1 beyond tolerance");
    for (auto& v : mass) v /= sum;
    return {std::move(space), std::move(mass)};
}

CodeFunctionDistribution uniform_codefunction_distribution(CodeFunctionSpace space) {
    std::vector<double> mass(space.size, 1.0 / static_cast<double>(space.size));
    return {std::move(space), std::move(mass)};
}

int FeedbackPattern::hidden_suffix(int t) const {
    switch (kind) {
        case Kind::Full: return 0;
        case Kind::None: return t - 1;
        case Kind::Delay: return std::min(t - 1, delta - 1);
    }
    return 0;
}

const SimplexVector& InputDistribution::row(int t, std::size_t a_hist, std::size_t b_hist) const {
    const std::size_t nbh = ipow(nb, t - 1);
    return steps[static_cast<std::size_t>(t) - 1][a_hist * nbh + b_hist];
}

double InputDistribution::directed_mass(int t, std::size_t a_seq, std::size_t b_seq) const {
    // a_seq packs a^t, b_seq packs b^{t-1}
    double prod = 1.0;
    for (int j = 1; j <= t; ++j) {
        const std::size_t a_hist = a_seq / ipow(na, t - j + 1);
        const std::size_t a_j = (a_seq / ipow(na, t - j)) % na;
        const std::size_t b_hist = j == 1 ? 0 : b_seq / ipow(nb, t - j);
        prod *= p(j, a_hist, b_hist, a_j);
        if (prod == 0.0) return 0.0;
    }
    return prod;
}

InputDistribution make_input_distribution(std::size_t na, std::size_t nb, int horizon,
                                          FeedbackPattern pattern,
                                          std::vector<std::vector<SimplexVector>> steps) {
    if (na < 1 || nb < 1 || horizon < 1)
        throw ValidationError("input law needs na, nb >= 1 and horizon >= 1");
    if (pattern.kind == FeedbackPattern::Kind::Delay && pattern.delta < 1)
        throw ValidationError("feedback delay must be >= 1");
    if (steps.size() != static_cast<std::size_t>(horizon))
        throw ValidationError("expected one row table per step");
    InputDistribution d;
    d.na = na;
    d.nb = nb;
    d.horizon = horizon;
    d.pattern = pattern;
    for (int t = 1; t <= horizon; ++t) {
        const std::size_t nah = ipow(na, t - 1);
        const std::size_t nbh = ipow(nb, t - 1);
        auto& table = steps[static_cast<std::size_t>(t) - 1];
        if (table.size() != nah * nbh)
            throw ValidationError("step " + std::to_string(t) + " has " +
                                  std::to_string(table.size()) + " rows, expected " +
                                  std::to_string(nah * nbh));
        for (const auto& row : table)
            if (row.size() != na)
                throw ValidationError("step " + std::to_string(t) + " row width mismatch");
        const int hidden = pattern.hidden_suffix(t);
        if (hidden > 0) {
            const std::size_t block = ipow(nb, hidden);
            for (std::size_t ah = 0; ah < nah; ++ah)
                for (std::size_t bh = 0; bh < nbh; ++bh) {
                    const std::size_t canonical = (bh / block) * block;
                    const auto& row = table[ah * nbh + bh];
                    const auto& ref = table[ah * nbh + canonical];
                    for (std::size_t a = 0; a < na; ++a)
                        if (row[a] != ref[a])
                            throw ValidationError(
                                "step " + std::to_string(t) +
                                " rows vary over outputs the pattern hides (a-hist " +
                                std::to_string(ah) + ", b-hist " + std::to_string(bh) + ")");
                }
        }
    }
    d.steps = std::move(steps);
    return d;
}

namespace {

ordered_json pattern_to_json(const FeedbackPattern& p) {
    switch (p.kind) {
        case FeedbackPattern::Kind::Full: return ordered_json{{"kind", "full"}};
        case FeedbackPattern::Kind::None: return ordered_json{{"kind", "none"}};
        case FeedbackPattern::Kind::Delay:
            return ordered_json{{"kind", "delay"}, {"delta", p.delta}};
    }
    return {};
}

FeedbackPattern pattern_from_json(const ordered_json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ParseError("pattern needs a 'kind'");
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "full") return FeedbackPattern::full();
    if (kind == "none") return FeedbackPattern::none();
    if (kind == "delay") {
        if (!j.contains("delta")) throw ParseError("delay pattern needs 'delta'");
        return FeedbackPattern::delay(j["delta"].get<int>());
    }
    throw ParseError("unknown pattern kind '" + kind + "'");
}

} // namespace

InputDistribution load_input_from_json(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid json: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("input law must be a json object");
    const int version = j.value("version", 1);
    if (version != 1) throw ParseError("unsupported input version");
    for (const char* key : {"horizon", "alphabets", "steps"})
        if (!j.contains(key)) throw ParseError(std::string("input law needs '") + key + "'");
    const int horizon = j["horizon"].get<int>();
    const std::size_t na = j["alphabets"].value("A", 0);
    const std::size_t nb = j["alphabets"].value("B", 0);
    if (na == 0 || nb == 0) throw ParseError("input law alphabets need sizes A and B");
    FeedbackPattern pattern =
        j.contains("pattern") ? pattern_from_json(j["pattern"]) : FeedbackPattern::full();
    if (!j["steps"].is_array() || j["steps"].size() != static_cast<std::size_t>(horizon))
        throw ParseError("input law needs one steps table per step");
    std::vector<std::vector<SimplexVector>> steps;
    for (int t = 1; t <= horizon; ++t) {
        const auto& st = j["steps"][static_cast<std::size_t>(t) - 1];
        if (!st.is_array()) throw ParseError("steps entries must be arrays of rows");
        std::vector<SimplexVector> rows;
        rows.reserve(st.size());
        for (std::size_t r = 0; r < st.size(); ++r) {
            std::vector<double> row;
            for (const auto& v : st[r]) row.push_back(v.get<double>());
            try {
                rows.emplace_back(std::move(row));
            } catch (const ValidationError& e) {
                throw ValidationError("input step " + std::to_string(t) + " row " +
                                      std::to_string(r) + ": " + e.what());
            }
        }
        steps.push_back(std::move(rows));
    }
    return make_input_distribution(na, nb, horizon, pattern, std::move(steps));
}

InputDistribution load_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open input file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_input_from_json(ss.str());
}

std::string save_input(const InputDistribution& input) {
    ordered_json j;
    j["version"] = 1;
    j["horizon"] = input.horizon;
    j["alphabets"] = ordered_json{{"A", input.na}, {"B", input.nb}};
    j["pattern"] = pattern_to_json(input.pattern);
    ordered_json steps = ordered_json::array();
    for (const auto& table : input.steps) {
        ordered_json rows = ordered_json::array();
        for (const auto& row : table) {
            ordered_json r = ordered_json::array();
            for (double v : row) r.push_back(v);
            rows.push_back(std::move(r));
        }
        steps.push_back(std::move(rows));
    }
    j["steps"] = std::move(steps);
    return j.dump(2) + "\n";
}

double ConsistentMeasure::q_fab(std::uint64_t f, std::size_t a_seq, std::size_t b_seq) const {
    double sum = 0.0;
    for (std::size_t s = 0; s < n_s_seq; ++s) sum += q(f, s, a_seq, b_seq);
    return sum;
}

std::vector<double> ConsistentMeasure::marginal_f() const {
    std::vector<double> out(space.size, 0.0);
    const std::size_t stride = n_s_seq * n_a_seq * n_b_seq;
    for (std::uint64_t f = 0; f < space.size; ++f)
        for (std::size_t i = 0; i < stride; ++i) out[f] += mass[f * stride + i];
    return out;
}

std::vector<double> ConsistentMeasure::marginal_ab() const {
    std::vector<double> out(n_a_seq * n_b_seq, 0.0);
    for (std::uint64_t f = 0; f < space.size; ++f)
        for (std::size_t s = 0; s < n_s_seq; ++s)
            for (std::size_t a = 0; a < n_a_seq; ++a)
                for (std::size_t b = 0; b < n_b_seq; ++b) out[a * n_b_seq + b] += q(f, s, a, b);
    return out;
}

std::vector<double> ConsistentMeasure::marginal_fb() const {
    std::vector<double> out(space.size * n_b_seq, 0.0);
    for (std::uint64_t f = 0; f < space.size; ++f)
        for (std::size_t s = 0; s < n_s_seq; ++s)
            for (std::size_t a = 0; a < n_a_seq; ++a)
                for (std::size_t b = 0; b < n_b_seq; ++b) out[f * n_b_seq + b] += q(f, s, a, b);
    return out;
}

namespace {

ConsistentMeasure measure_shell(const CodeFunctionDistribution& dist, std::size_t ns,
                                std::size_t cell_cap) {
    ConsistentMeasure m;
    m.space = dist.space;
    m.horizon = m.space.horizon;
    m.na = m.space.na;
    m.nb = m.space.nb;
    m.ns = ns;
    m.n_s_seq = ipow(ns, m.horizon);
    m.n_a_seq = ipow(m.na, m.horizon);
    m.n_b_seq = ipow(m.nb, m.horizon);
    const std::uint64_t cells =
        m.space.size * static_cast<std::uint64_t>(m.n_s_seq) * m.n_a_seq * m.n_b_seq;
    if (cells > cell_cap)
        throw CapExceeded("joint table needs " + std::to_string(cells) + " cells, cap is " +
                          std::to_string(cell_cap));
    m.mass.assign(static_cast<std::size_t>(cells), 0.0);
    return m;
}

} // namespace

ConsistentMeasure build_consistent_measure(const CodeFunctionDistribution& dist,
                                           const GeneralChannelSpec& channel,
                                           std::size_t cell_cap) {
    if (channel.na() != dist.space.na || channel.nb() != dist.space.nb)
        throw CaseMismatch("channel and code-function alphabets differ");
    if (channel.horizon < dist.space.horizon)
        throw CaseMismatch("channel horizon is shorter than the code-function horizon");
    ConsistentMeasure m = measure_shell(dist, 1, cell_cap);
    const int T = m.horizon;
    for (std::uint64_t fi = 0; fi < m.space.size; ++fi) {
        const double pf = dist.mass[fi];
        if (pf == 0.0) continue;
        const CodeFunction f = m.space.decode(fi);
        for (std::size_t b_seq = 0; b_seq < m.n_b_seq; ++b_seq) {
            double chain = pf;
            std::size_t a_seq = 0;
            for (int t = 1; t <= T && chain > 0.0; ++t) {
                const std::size_t b_hist = b_seq / ipow(m.nb, T - t + 1);
                const std::size_t b_t = (b_seq / ipow(m.nb, T - t)) % m.nb;
                a_seq = a_seq * m.na + f.eval(t, b_hist);
                chain *= channel.p(t, a_seq, b_hist, b_t);
            }
            if (chain > 0.0) m.mass[(fi * m.n_a_seq + a_seq) * m.n_b_seq + b_seq] = chain;
        }
    }
    return m;
}

ConsistentMeasure build_consistent_measure(const CodeFunctionDistribution& dist,
                                           const MarkovChannelSpec& channel,
                                           std::size_t cell_cap) {
    if (channel.na() != dist.space.na || channel.nb() != dist.space.nb)
        throw CaseMismatch("channel and code-function alphabets differ");
    ConsistentMeasure m = measure_shell(dist, channel.ns(), cell_cap);
    const int T = m.horizon;
    for (std::uint64_t fi = 0; fi < m.space.size; ++fi) {
        const double pf = dist.mass[fi];
        if (pf == 0.0) continue;
        const CodeFunction f = m.space.decode(fi);
        for (std::size_t b_seq = 0; b_seq < m.n_b_seq; ++b_seq) {
            // inputs along this output path are fixed by f
            std::vector<std::size_t> a(static_cast<std::size_t>(T));
            std::vector<std::size_t> b(static_cast<std::size_t>(T));
            std::size_t a_seq = 0;
            for (int t = 1; t <= T; ++t) {
                const std::size_t b_hist = b_seq / ipow(m.nb, T - t + 1);
                a[static_cast<std::size_t>(t) - 1] = f.eval(t, b_hist);
                b[static_cast<std::size_t>(t) - 1] = (b_seq / ipow(m.nb, T - t)) % m.nb;
                a_seq = a_seq * m.na + a[static_cast<std::size_t>(t) - 1];
            }
            for (std::size_t s_seq = 0; s_seq < m.n_s_seq; ++s_seq) {
                double prob = pf;
                std::size_t prev_s = 0;
                for (int t = 1; t <= T && prob > 0.0; ++t) {
                    const std::size_t s_t = (s_seq / ipow(m.ns, T - t)) % m.ns;
                    prob *= t == 1 ? channel.initial[s_t]
                                   : channel.p_trans(prev_s, a[static_cast<std::size_t>(t) - 2],
                                                     b[static_cast<std::size_t>(t) - 2], s_t);
                    if (prob == 0.0) break;
                    prob *= channel.p_emit(s_t, a[static_cast<std::size_t>(t) - 1],
                                           b[static_cast<std::size_t>(t) - 1]);
                    prev_s = s_t;
                }
                if (prob > 0.0)
                    m.mass[((fi * m.n_s_seq + s_seq) * m.n_a_seq + a_seq) * m.n_b_seq + b_seq] =
                        prob;
            }
        }
    }
    return m;
}

namespace {

// node-set masses wt[t][b_hist][packed a^t] = P{f : f^t along b_hist = a^t}
std::vector<std::vector<std::vector<double>>> history_set_mass(
    const CodeFunctionDistribution& dist) {
    const auto& space = dist.space;
    const int T = space.horizon;
    std::vector<std::vector<std::vector<double>>> wt(static_cast<std::size_t>(T) + 1);
    for (int t = 1; t <= T; ++t) {
        wt[static_cast<std::size_t>(t)].assign(
            space.nodes_per_step[static_cast<std::size_t>(t) - 1],
            std::vector<double>(ipow(space.na, t), 0.0));
    }
    for (std::uint64_t fi = 0; fi < space.size; ++fi) {
        const double pf = dist.mass[fi];
        if (pf == 0.0) continue;
        const CodeFunction f = space.decode(fi);
        for (int t = 1; t <= T; ++t)
            for (std::size_t bh = 0; bh < space.nodes_per_step[static_cast<std::size_t>(t) - 1];
                 ++bh)
                wt[static_cast<std::size_t>(t)][bh][f.eval_prefix(t, bh)] += pf;
    }
    return wt;
}

} // namespace

InputDistribution induced_input_distribution(const CodeFunctionDistribution& dist) {
    const auto& space = dist.space;
    const int T = space.horizon;
    const auto wt = history_set_mass(dist);
    std::vector<std::vector<SimplexVector>> steps(static_cast<std::size_t>(T));
    std::vector<std::pair<int, std::size_t>> filled;
    for (int t = 1; t <= T; ++t) {
        const std::size_t nah = ipow(space.na, t - 1);
        const std::size_t nbh = ipow(space.nb, t - 1);
        auto& table = steps[static_cast<std::size_t>(t) - 1];
        table.reserve(nah * nbh);
        for (std::size_t ah = 0; ah < nah; ++ah)
            for (std::size_t bh = 0; bh < nbh; ++bh) {
                const double denom =
                    t == 1 ? 1.0 : wt[static_cast<std::size_t>(t) - 1][bh / space.nb][ah];
                if (denom > 0.0) {
                    std::vector<double> row(space.na, 0.0);
                    for (std::size_t a = 0; a < space.na; ++a)
                        row[a] = wt[static_cast<std::size_t>(t)][bh][ah * space.na + a] / denom;
                    table.push_back(SimplexVector::renormalized(std::move(row)));
                } else {
                    filled.emplace_back(t, ah * nbh + bh);
                    table.push_back(SimplexVector::uniform(space.na));
                }
            }
    }
    InputDistribution out = make_input_distribution(space.na, space.nb, T,
                                                    FeedbackPattern::full(), std::move(steps));
    out.uniform_filled = std::move(filled);
    return out;
}

InputDistribution induced_input_distribution(const ConsistentMeasure& m) {
    CodeFunctionDistribution dist{m.space, m.marginal_f()};
    double sum = 0.0;
    for (double v : dist.mass) sum += v;
    if (!(sum > 0.0)) throw ValidationError("measure has no code-function mass");
    for (auto& v : dist.mass) v /= sum;
    return induced_input_distribution(dist);
}

CodeFunctionDistribution good_distribution(const InputDistribution& input, std::uint64_t cap) {
    const CodeFunctionSpace space =
        enumerate_codefunctions(input.na, input.nb, input.horizon, cap);
    std::vector<double> mass(space.size, 0.0);
    for (std::uint64_t fi = 0; fi < space.size; ++fi) {
        const CodeFunction f = space.decode(fi);
        double prod = 1.0;
        for (int t = 1; t <= space.horizon && prod > 0.0; ++t)
            for (std::size_t bh = 0; bh < space.nodes_per_step[static_cast<std::size_t>(t) - 1];
                 ++bh) {
                const std::size_t ah = history_prefix(f, t, bh, space.nb);
                prod *= input.p(t, ah, bh, f.eval(t, bh));
                if (prod == 0.0) break;
            }
        mass[fi] = prod;
    }
    return make_codefunction_distribution(space, std::move(mass));
}

CodeFunctionDistribution codeword_only_distribution(const InputDistribution& input,
                                                    std::uint64_t cap) {
    for (int t = 1; t <= input.horizon; ++t) {
        const std::size_t nah = ipow(input.na, t - 1);
        const std::size_t nbh = ipow(input.nb, t - 1);
        for (std::size_t ah = 0; ah < nah; ++ah)
            for (std::size_t bh = 1; bh < nbh; ++bh)
                for (std::size_t a = 0; a < input.na; ++a)
                    if (input.row(t, ah, bh)[a] != input.row(t, ah, 0)[a])
                        throw CaseMismatch(
                            "codeword-only construction needs an output-blind input law");
    }
    const CodeFunctionSpace space =
        enumerate_codefunctions(input.na, input.nb, input.horizon, cap);
    std::vector<double> mass(space.size, 0.0);
    for (std::uint64_t fi = 0; fi < space.size; ++fi) {
        const CodeFunction f = space.decode(fi);
        double prod = 1.0;
        std::size_t ah = 0;
        for (int t = 1; t <= space.horizon && prod > 0.0; ++t) {
            const auto& table = f.tables[static_cast<std::size_t>(t) - 1];
            const std::uint32_t a_t = table[0];
            for (std::size_t node = 1; node < table.size(); ++node)
                if (table[node] != a_t) {
                    prod = 0.0; // mass lives on constant trees only
                    break;
                }
            if (prod == 0.0) break;
            prod *= input.p(t, ah, 0, a_t);
            ah = ah * input.na + a_t;
        }
        mass[fi] = prod;
    }
    return make_codefunction_distribution(space, std::move(mass));
}

GoodCheckResult verify_good(const CodeFunctionDistribution& dist, const InputDistribution& input,
                            double tol) {
    if (dist.space.na != input.na || dist.space.nb != input.nb ||
        dist.space.horizon != input.horizon)
        throw CaseMismatch("distribution and input law shapes differ");
    GoodCheckResult res;
    res.tol = tol;
    const auto& space = dist.space;
    const int T = space.horizon;
    const auto wt = history_set_mass(dist);
    // history-set masses vs directed input products
    for (int t = 1; t <= T; ++t) {
        const std::size_t nbh = space.nodes_per_step[static_cast<std::size_t>(t) - 1];
        const std::size_t naq = ipow(space.na, t);
        for (std::size_t bh = 0; bh < nbh; ++bh)
            for (std::size_t aq = 0; aq < naq; ++aq) {
                const double want = input.directed_mass(t, aq, bh);
                const double got = wt[static_cast<std::size_t>(t)][bh][aq];
                const double dev = std::abs(want - got);
                if (dev > res.max_set_deviation) {
                    res.max_set_deviation = dev;
                    res.worst_t = t;
                    res.worst_a_seq = aq;
                    res.worst_b_seq = bh;
                }
            }
    }
    // induced-rule fixed point on positive-mass histories
    for (int t = 1; t <= T; ++t) {
        const std::size_t nah = ipow(space.na, t - 1);
        const std::size_t nbh = ipow(space.nb, t - 1);
        for (std::size_t ah = 0; ah < nah; ++ah)
            for (std::size_t bh = 0; bh < nbh; ++bh) {
                const double denom =
                    t == 1 ? 1.0 : wt[static_cast<std::size_t>(t) - 1][bh / space.nb][ah];
                if (denom <= 0.0) continue;
                for (std::size_t a = 0; a < space.na; ++a) {
                    const double induced =
                        wt[static_cast<std::size_t>(t)][bh][ah * space.na + a] / denom;
                    const double dev = std::abs(induced - input.p(t, ah, bh, a));
                    if (dev > res.max_rule_deviation) res.max_rule_deviation = dev;
                }
            }
    }
    res.ok = res.max_set_deviation <= tol && res.max_rule_deviation <= tol;
    return res;
}

} // namespace feedcap
