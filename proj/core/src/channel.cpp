#include "feedcap/channel.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "feedcap/filtering.hpp"

namespace feedcap {

using ordered_json = nlohmann::ordered_json;

const char* flag_name(StructureFlag f) {
    switch (f) {
        case StructureFlag::NoIsi: return "no_isi";
        case StructureFlag::StateFromInput: return "state_from_input";
        case StructureFlag::StateFromOutput: return "state_from_output";
        case StructureFlag::StateFromIo: return "state_from_io";
        case StructureFlag::ReceiverCsi: return "receiver_csi";
        case StructureFlag::BeliefFromOutput: return "belief_from_output";
    }
    return "?";
}

std::optional<StructureFlag> flag_from_name(const std::string& name) {
    for (StructureFlag f :
         {StructureFlag::NoIsi, StructureFlag::StateFromInput, StructureFlag::StateFromOutput,
          StructureFlag::StateFromIo, StructureFlag::ReceiverCsi,
          StructureFlag::BeliefFromOutput})
        if (name == flag_name(f)) return f;
    return std::nullopt;
}

const SimplexVector& GeneralChannelSpec::row(int t, std::size_t a_seq, std::size_t b_seq) const {
    std::size_t nb_hist = 1;
    for (int i = 1; i < t; ++i) nb_hist *= nb();
    return steps[static_cast<std::size_t>(t) - 1].row(a_seq * nb_hist + b_seq);
}

MarkovChannelSpec make_markov_spec(Alphabet s, Alphabet a, Alphabet b, SimplexVector initial,
                                   std::vector<SimplexVector> transition_rows,
                                   std::vector<SimplexVector> emission_rows, FlagSet flags) {
    if (s.size == 0 || a.size == 0 || b.size == 0)
        throw ValidationError("alphabets must be non-empty");
    if (initial.size() != s.size)
        throw ValidationError("initial law has width " + std::to_string(initial.size()) +
                              ", expected |S| = " + std::to_string(s.size));
    MarkovChannelSpec spec;
    spec.state = std::move(s);
    spec.input = std::move(a);
    spec.output = std::move(b);
    spec.initial = std::move(initial);
    spec.transition = ConditionalKernel({spec.state.size, spec.input.size, spec.output.size},
                                        spec.state.size, std::move(transition_rows));
    spec.emission = ConditionalKernel({spec.state.size, spec.input.size}, spec.output.size,
                                      std::move(emission_rows));
    spec.flags = std::move(flags);
    for (StructureFlag f : spec.flags) {
        const auto check = check_structure(spec, f);
        if (!check.ok)
            throw FlagCheckError(std::string("flag ") + flag_name(f) + " fails: " + check.detail);
    }
    return spec;
}

GeneralChannelSpec make_general_spec(Alphabet a, Alphabet b, int horizon,
                                     std::vector<std::vector<SimplexVector>> step_rows,
                                     std::size_t cell_cap) {
    if (a.size == 0 || b.size == 0) throw ValidationError("alphabets must be non-empty");
    if (horizon < 1) throw ValidationError("horizon must be >= 1");
    if (step_rows.size() != static_cast<std::size_t>(horizon))
        throw ValidationError("expected one table per step");
    GeneralChannelSpec spec;
    spec.input = std::move(a);
    spec.output = std::move(b);
    spec.horizon = horizon;
    std::size_t total_cells = 0;
    std::size_t n_a_seq = 1, n_b_hist = 1;
    for (int t = 1; t <= horizon; ++t) {
        n_a_seq *= spec.na();
        const std::size_t rows = n_a_seq * n_b_hist;
        total_cells += rows * spec.nb();
        if (total_cells > cell_cap)
            throw CapExceeded("channel tables need " + std::to_string(total_cells) +
                              " cells, cap is " + std::to_string(cell_cap));
        spec.steps.emplace_back(std::vector<std::size_t>{rows}, spec.nb(),
                                std::move(step_rows[static_cast<std::size_t>(t) - 1]));
        n_b_hist *= spec.nb();
    }
    return spec;
}

namespace {

Alphabet parse_alphabet(const ordered_json& j, const std::string& letter) {
    Alphabet a;
    if (j.is_number_unsigned()) {
        a.size = j.get<std::size_t>();
        a.label = letter;
    } else if (j.is_object()) {
        if (!j.contains("size") || !j["size"].is_number_unsigned())
            throw ParseError("alphabet " + letter + " needs an unsigned 'size'");
        a.size = j["size"].get<std::size_t>();
        a.label = j.value("label", letter);
    } else {
        throw ParseError("alphabet " + letter + " must be a size or {size,label}");
    }
    if (a.size == 0) throw ParseError("alphabet " + letter + " is empty");
    return a;
}

std::vector<double> parse_prob_row(const ordered_json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + " must be an array of probabilities");
    std::vector<double> row;
    row.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw ParseError(where + " has a non-numeric entry");
        row.push_back(v.get<double>());
    }
    return row;
}

SimplexVector parse_simplex(const ordered_json& j, const std::string& where) {
    try {
        return SimplexVector(parse_prob_row(j, where));
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

ordered_json dump_row(const SimplexVector& row) {
    ordered_json arr = ordered_json::array();
    for (double v : row) arr.push_back(v);
    return arr;
}

ordered_json dump_alphabet(const Alphabet& a) {
    return ordered_json{{"size", a.size}, {"label", a.label}};
}

MarkovChannelSpec parse_markov(const ordered_json& j) {
    if (!j.contains("alphabets")) throw ParseError("spec needs 'alphabets'");
    const auto& al = j["alphabets"];
    for (const char* key : {"S", "A", "B"})
        if (!al.contains(key)) throw ParseError(std::string("alphabets needs '") + key + "'");
    Alphabet S = parse_alphabet(al["S"], "S");
    Alphabet A = parse_alphabet(al["A"], "A");
    Alphabet B = parse_alphabet(al["B"], "B");

    for (const char* key : {"initial", "transition", "emission"})
        if (!j.contains(key)) throw ParseError(std::string("spec needs '") + key + "'");

    SimplexVector initial = parse_simplex(j["initial"], "initial");

    const auto& tr = j["transition"];
    if (!tr.is_array() || tr.size() != S.size)
        throw ParseError("transition must be nested [s][a][b][s']");
    std::vector<std::vector<double>> raw_tr;
    for (std::size_t s = 0; s < S.size; ++s) {
        if (!tr[s].is_array() || tr[s].size() != A.size)
            throw ParseError("transition[" + std::to_string(s) + "] must have |A| entries");
        for (std::size_t a = 0; a < A.size; ++a) {
            if (!tr[s][a].is_array() || tr[s][a].size() != B.size)
                throw ParseError("transition[" + std::to_string(s) + "][" + std::to_string(a) +
                                 "] must have |B| entries");
            for (std::size_t b = 0; b < B.size; ++b)
                raw_tr.push_back(parse_prob_row(
                    tr[s][a][b], "transition[" + std::to_string(s) + "][" + std::to_string(a) +
                                     "][" + std::to_string(b) + "]"));
        }
    }
    const auto tr_report = validate_kernel(raw_tr, S.size, {S.size, A.size, B.size},
                                           {"s", "a", "b"});
    if (!tr_report.ok)
        throw ValidationError("transition kernel: " + tr_report.defects.front().message);

    const auto& em = j["emission"];
    if (!em.is_array() || em.size() != S.size) throw ParseError("emission must be nested [s][a][b]");
    std::vector<std::vector<double>> raw_em;
    for (std::size_t s = 0; s < S.size; ++s) {
        if (!em[s].is_array() || em[s].size() != A.size)
            throw ParseError("emission[" + std::to_string(s) + "] must have |A| entries");
        for (std::size_t a = 0; a < A.size; ++a)
            raw_em.push_back(parse_prob_row(
                em[s][a], "emission[" + std::to_string(s) + "][" + std::to_string(a) + "]"));
    }
    const auto em_report = validate_kernel(raw_em, B.size, {S.size, A.size}, {"s", "a"});
    if (!em_report.ok)
        throw ValidationError("emission kernel: " + em_report.defects.front().message);

    FlagSet flags;
    if (j.contains("flags")) {
        if (!j["flags"].is_array()) throw ParseError("flags must be an array of names");
        for (const auto& f : j["flags"]) {
            const auto parsed = flag_from_name(f.get<std::string>());
            if (!parsed) throw ParseError("unknown flag '" + f.get<std::string>() + "'");
            flags.insert(*parsed);
        }
    }

    auto to_rows = [](std::vector<std::vector<double>>& raw) {
        std::vector<SimplexVector> rows;
        rows.reserve(raw.size());
        for (auto& r : raw) rows.emplace_back(std::move(r));
        return rows;
    };
    return make_markov_spec(S, A, B, std::move(initial), to_rows(raw_tr), to_rows(raw_em),
                            std::move(flags));
}

GeneralChannelSpec parse_general(const ordered_json& j) {
    if (!j.contains("alphabets")) throw ParseError("spec needs 'alphabets'");
    const auto& al = j["alphabets"];
    for (const char* key : {"A", "B"})
        if (!al.contains(key)) throw ParseError(std::string("alphabets needs '") + key + "'");
    Alphabet A = parse_alphabet(al["A"], "A");
    Alphabet B = parse_alphabet(al["B"], "B");
    if (!j.contains("horizon") || !j["horizon"].is_number_unsigned())
        throw ParseError("general spec needs an unsigned 'horizon'");
    const int horizon = j["horizon"].get<int>();
    if (!j.contains("steps") || !j["steps"].is_array() ||
        j["steps"].size() != static_cast<std::size_t>(horizon))
        throw ParseError("general spec needs one 'steps' table per step");

    std::vector<std::vector<SimplexVector>> tables;
    std::size_t n_a_seq = 1, n_b_hist = 1;
    for (int t = 1; t <= horizon; ++t) {
        n_a_seq *= A.size;
        const auto& st = j["steps"][static_cast<std::size_t>(t) - 1];
        const std::size_t expect = n_a_seq * n_b_hist;
        if (!st.is_array() || st.size() != expect)
            throw ParseError("steps[" + std::to_string(t - 1) + "] must have " +
                             std::to_string(expect) + " rows (a-seq major)");
        std::vector<SimplexVector> rows;
        rows.reserve(expect);
        for (std::size_t r = 0; r < expect; ++r)
            rows.push_back(parse_simplex(st[r], "steps[" + std::to_string(t - 1) + "][" +
                                                    std::to_string(r) + "]"));
        tables.push_back(std::move(rows));
        n_b_hist *= B.size;
    }
    return make_general_spec(A, B, horizon, std::move(tables));
}

} // namespace

ChannelSpec load_spec_from_json(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid json: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("spec must be a json object");
    const int version = j.value("version", 1);
    if (version != 1) throw ParseError("unsupported spec version " + std::to_string(version));
    const std::string kind = j.value("kind", "markov");
    if (kind == "markov") return parse_markov(j);
    if (kind == "general") return parse_general(j);
    throw ParseError("unknown spec kind '" + kind + "'");
}

ChannelSpec load_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open spec file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_spec_from_json(ss.str());
}

std::string save_spec(const ChannelSpec& spec) {
    ordered_json j;
    j["version"] = 1;
    if (const auto* m = std::get_if<MarkovChannelSpec>(&spec)) {
        j["kind"] = "markov";
        j["alphabets"] = ordered_json{{"S", dump_alphabet(m->state)},
                                      {"A", dump_alphabet(m->input)},
                                      {"B", dump_alphabet(m->output)}};
        j["initial"] = dump_row(m->initial);
        ordered_json tr = ordered_json::array();
        for (std::size_t s = 0; s < m->ns(); ++s) {
            ordered_json sj = ordered_json::array();
            for (std::size_t a = 0; a < m->na(); ++a) {
                ordered_json aj = ordered_json::array();
                for (std::size_t b = 0; b < m->nb(); ++b)
                    aj.push_back(dump_row(m->transition_row(s, a, b)));
                sj.push_back(std::move(aj));
            }
            tr.push_back(std::move(sj));
        }
        j["transition"] = std::move(tr);
        ordered_json em = ordered_json::array();
        for (std::size_t s = 0; s < m->ns(); ++s) {
            ordered_json sj = ordered_json::array();
            for (std::size_t a = 0; a < m->na(); ++a) sj.push_back(dump_row(m->emission_row(s, a)));
            em.push_back(std::move(sj));
        }
        j["emission"] = std::move(em);
        ordered_json fl = ordered_json::array();
        for (StructureFlag f : m->flags) fl.push_back(flag_name(f)); // FlagSet iterates sorted
        j["flags"] = std::move(fl);
    } else {
        const auto& g = std::get<GeneralChannelSpec>(spec);
        j["kind"] = "general";
        j["alphabets"] = ordered_json{{"A", dump_alphabet(g.input)},
                                      {"B", dump_alphabet(g.output)}};
        j["horizon"] = g.horizon;
        ordered_json steps = ordered_json::array();
        for (const auto& step : g.steps) {
            ordered_json rows = ordered_json::array();
            for (std::size_t r = 0; r < step.row_count(); ++r) rows.push_back(dump_row(step.row(r)));
            steps.push_back(std::move(rows));
        }
        j["steps"] = std::move(steps);
    }
    return j.dump(2) + "\n";
}

void save_spec_file(const ChannelSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write spec file: " + path);
    out << save_spec(spec);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace feedcap
