#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "feedcap/kernel.hpp"

namespace feedcap {

// Default cell cap for enumerated tables; FEEDCAP_CAP_CELLS and per-call
// arguments override it.
inline constexpr std::size_t kDefaultCellCap = 10'000'000;
inline constexpr std::size_t kDefaultCodeFunctionCap = 1'000'000;

enum class StructureFlag {
    NoIsi,
    StateFromInput,
    StateFromOutput,
    StateFromIo,
    ReceiverCsi,
    BeliefFromOutput,
};

using FlagSet = std::set<StructureFlag>;

const char* flag_name(StructureFlag f);
std::optional<StructureFlag> flag_from_name(const std::string& name);

// Time-invariant state channel: initial state law, state transition driven by
// (state, input, output), output emission driven by (state, input).
struct MarkovChannelSpec {
    Alphabet state;  // S
    Alphabet input;  // A
    Alphabet output; // B
    SimplexVector initial;      // over S
    ConditionalKernel transition; // (S, A, B) -> S
    ConditionalKernel emission;   // (S, A) -> B
    FlagSet flags;

    std::size_t ns() const { return state.size; }
    std::size_t na() const { return input.size; }
    std::size_t nb() const { return output.size; }

    const SimplexVector& transition_row(std::size_t s, std::size_t a, std::size_t b) const {
        return transition.row((s * na() + a) * nb() + b);
    }
    const SimplexVector& emission_row(std::size_t s, std::size_t a) const {
        return emission.row(s * na() + a);
    }
    double p_emit(std::size_t s, std::size_t a, std::size_t b) const {
        return emission_row(s, a)[b];
    }
    double p_trans(std::size_t s, std::size_t a, std::size_t b, std::size_t s2) const {
        return transition_row(s, a, b)[s2];
    }
};

// Horizon-T channel given by per-step tables p(b_t | a^t, b^{t-1});
// step t rows are indexed a_seq * nb^{t-1} + b_seq.
struct GeneralChannelSpec {
    Alphabet input;
    Alphabet output;
    int horizon = 0;
    std::vector<ConditionalKernel> steps;

    std::size_t na() const { return input.size; }
    std::size_t nb() const { return output.size; }
    const SimplexVector& row(int t, std::size_t a_seq, std::size_t b_seq) const;
    double p(int t, std::size_t a_seq, std::size_t b_seq, std::size_t b) const {
        return row(t, a_seq, b_seq)[b];
    }
};

using ChannelSpec = std::variant<MarkovChannelSpec, GeneralChannelSpec>;

// Builds a validated spec; throws ValidationError / FlagCheckError.
MarkovChannelSpec make_markov_spec(Alphabet s, Alphabet a, Alphabet b, SimplexVector initial,
                                   std::vector<SimplexVector> transition_rows,
                                   std::vector<SimplexVector> emission_rows, FlagSet flags);

GeneralChannelSpec make_general_spec(Alphabet a, Alphabet b, int horizon,
                                     std::vector<std::vector<SimplexVector>> step_rows,
                                     std::size_t cell_cap = kDefaultCellCap);

// json file io; canonical form round-trips byte-identically.
ChannelSpec load_spec(const std::string& path);
ChannelSpec load_spec_from_json(const std::string& json_text);
std::string save_spec(const ChannelSpec& spec); // canonical json text
void save_spec_file(const ChannelSpec& spec, const std::string& path);

// fnv-1a 64-bit over bytes; used for report manifests
std::uint64_t fnv1a64(const std::string& bytes);

} // namespace feedcap
