#include "feedcap/filtering.hpp"

#include <cmath>
#include <sstream>

namespace feedcap {

SimplexVector output_predictive(const MarkovChannelSpec& spec, const Belief& pi, std::size_t a) {
    if (pi.size() != spec.ns()) throw ValidationError("belief width does not match |S|");
    std::vector<double> r(spec.nb(), 0.0);
    for (std::size_t s = 0; s < spec.ns(); ++s) {
        const double ps = pi[s];
        if (ps == 0.0) continue;
        const SimplexVector& em = spec.emission_row(s, a);
        for (std::size_t b = 0; b < spec.nb(); ++b) r[b] += em[b] * ps;
    }
    // rows of a simplex mixture; renormalize to clear rounding slack
    return SimplexVector::renormalized(std::move(r));
}

Belief state_posterior(const MarkovChannelSpec& spec, const Belief& pi, std::size_t a,
                       std::size_t b) {
    // Bayes split of the one-step joint pi(s) p(b|s,a): condition on the
    // observed output column.
    std::vector<double> post(spec.ns(), 0.0);
    double mass = 0.0;
    for (std::size_t s = 0; s < spec.ns(); ++s) {
        post[s] = pi[s] * spec.p_emit(s, a, b);
        mass += post[s];
    }
    if (!(mass > 0.0)) {
        std::ostringstream os;
        os << "observation b=" << b << " has zero predictive mass under a=" << a;
        throw ZeroProbabilityObservation(os.str());
    }
    for (auto& v : post) v /= mass;
    return SimplexVector::renormalized(std::move(post));
}

Belief filter_update(const MarkovChannelSpec& spec, const Belief& pi, std::size_t a,
                     std::size_t b) {
    const Belief post = state_posterior(spec, pi, a, b);
    std::vector<double> next(spec.ns(), 0.0);
    for (std::size_t s = 0; s < spec.ns(); ++s) {
        if (post[s] == 0.0) continue;
        const SimplexVector& tr = spec.transition_row(s, a, b);
        for (std::size_t s2 = 0; s2 < spec.ns(); ++s2) next[s2] += tr[s2] * post[s];
    }
    return SimplexVector::renormalized(std::move(next));
}

FilterTrace run_filter(const MarkovChannelSpec& spec,
                       const std::vector<std::pair<std::size_t, std::size_t>>& history) {
    FilterTrace trace;
    trace.io = history;
    trace.beliefs.reserve(history.size() + 1);
    trace.predictives.reserve(history.size());
    trace.beliefs.push_back(spec.initial);
    for (const auto& [a, b] : history) {
        if (a >= spec.na() || b >= spec.nb())
            throw ValidationError("history symbol out of alphabet range");
        trace.predictives.push_back(output_predictive(spec, trace.beliefs.back(), a));
        trace.beliefs.push_back(filter_update(spec, trace.beliefs.back(), a, b));
    }
    return trace;
}

namespace {

std::string coords3(const char* k1, std::size_t v1, const char* k2, std::size_t v2,
                    const char* k3, std::size_t v3) {
    std::ostringstream os;
    os << "(" << k1 << "=" << v1 << "," << k2 << "=" << v2 << "," << k3 << "=" << v3 << ")";
    return os.str();
}

StructureCheckResult fail(std::string detail, bool sampled = false) {
    return {false, sampled, std::move(detail)};
}

// simplex lattice of the given resolution, for the sampled check
void lattice_points(std::size_t dim, int res, std::vector<SimplexVector>& out) {
    std::vector<int> coords(dim, 0);
    // recursive composition enumeration, lexicographic on leading coordinates
    auto rec = [&](auto&& self, std::size_t i, int left) -> void {
        if (i + 1 == dim) {
            coords[i] = left;
            std::vector<double> w(dim);
            for (std::size_t k = 0; k < dim; ++k)
                w[k] = static_cast<double>(coords[k]) / static_cast<double>(res);
            out.push_back(SimplexVector::renormalized(std::move(w)));
            return;
        }
        for (int v = 0; v <= left; ++v) {
            coords[i] = v;
            self(self, i + 1, left - v);
        }
    };
    rec(rec, 0, res);
}

StructureCheckResult check_dirac_family(const MarkovChannelSpec& spec) {
    if (spec.initial.dirac_index() < 0)
        return fail("initial state law is not a point mass");
    for (std::size_t s = 0; s < spec.ns(); ++s)
        for (std::size_t a = 0; a < spec.na(); ++a)
            for (std::size_t b = 0; b < spec.nb(); ++b)
                if (spec.transition_row(s, a, b).dirac_index() < 0)
                    return fail("transition row " + coords3("s", s, "a", a, "b", b) +
                                " is not a point mass");
    return {};
}

std::size_t dirac_target(const MarkovChannelSpec& spec, std::size_t s, std::size_t a,
                         std::size_t b) {
    return static_cast<std::size_t>(spec.transition_row(s, a, b).dirac_index());
}

StructureCheckResult check_no_isi(const MarkovChannelSpec& spec, double tol) {
    if (spec.flags.count(StructureFlag::ReceiverCsi)) {
        // state evolution is embedded in the augmented output: require the
        // emission to factor as p(b0|s,a) * q(s'|s) with q input-independent
        if (spec.nb() % spec.ns() != 0)
            return fail("|B| is not a multiple of |S|, augmented output cannot carry the state");
        const std::size_t nb0 = spec.nb() / spec.ns();
        std::vector<double> q(spec.ns() * spec.ns(), 0.0);
        for (std::size_t s = 0; s < spec.ns(); ++s)
            for (std::size_t s2 = 0; s2 < spec.ns(); ++s2)
                for (std::size_t b0 = 0; b0 < nb0; ++b0)
                    q[s * spec.ns() + s2] += spec.p_emit(s, 0, b0 * spec.ns() + s2);
        for (std::size_t s = 0; s < spec.ns(); ++s)
            for (std::size_t a = 0; a < spec.na(); ++a) {
                std::vector<double> pb0(nb0, 0.0);
                for (std::size_t b0 = 0; b0 < nb0; ++b0)
                    for (std::size_t s2 = 0; s2 < spec.ns(); ++s2)
                        pb0[b0] += spec.p_emit(s, a, b0 * spec.ns() + s2);
                for (std::size_t b0 = 0; b0 < nb0; ++b0)
                    for (std::size_t s2 = 0; s2 < spec.ns(); ++s2) {
                        const double want = pb0[b0] * q[s * spec.ns() + s2];
                        const double got = spec.p_emit(s, a, b0 * spec.ns() + s2);
                        if (std::abs(want - got) > tol)
                            return fail("emission at " + coords3("s", s, "a", a, "b",
                                                                 b0 * spec.ns() + s2) +
                                        " does not factor into output times state chain");
                    }
            }
        return {};
    }
    for (std::size_t s = 0; s < spec.ns(); ++s) {
        const SimplexVector& ref = spec.transition_row(s, 0, 0);
        for (std::size_t a = 0; a < spec.na(); ++a)
            for (std::size_t b = 0; b < spec.nb(); ++b)
                if (linf_distance(spec.transition_row(s, a, b), ref) > tol)
                    return fail("transition row " + coords3("s", s, "a", a, "b", b) +
                                " depends on the input/output pair");
    }
    return {};
}

} // namespace

StructureCheckResult check_structure(const MarkovChannelSpec& spec, StructureFlag flag,
                                     const StructureCheckOptions& opts) {
    switch (flag) {
        case StructureFlag::NoIsi:
            return check_no_isi(spec, opts.tol);
        case StructureFlag::StateFromIo:
            return check_dirac_family(spec);
        case StructureFlag::StateFromInput: {
            auto base = check_dirac_family(spec);
            if (!base.ok) return base;
            for (std::size_t s = 0; s < spec.ns(); ++s)
                for (std::size_t a = 0; a < spec.na(); ++a)
                    for (std::size_t b = 1; b < spec.nb(); ++b)
                        if (dirac_target(spec, s, a, b) != dirac_target(spec, s, a, 0))
                            return fail("next state at " + coords3("s", s, "a", a, "b", b) +
                                        " depends on the output");
            return {};
        }
        case StructureFlag::StateFromOutput: {
            auto base = check_dirac_family(spec);
            if (!base.ok) return base;
            for (std::size_t s = 0; s < spec.ns(); ++s)
                for (std::size_t b = 0; b < spec.nb(); ++b)
                    for (std::size_t a = 1; a < spec.na(); ++a)
                        if (dirac_target(spec, s, a, b) != dirac_target(spec, s, 0, b))
                            return fail("next state at " + coords3("s", s, "a", a, "b", b) +
                                        " depends on the input");
            return {};
        }
        case StructureFlag::ReceiverCsi: {
            if (spec.nb() % spec.ns() != 0)
                return fail("|B| is not a multiple of |S|, output cannot carry the next state");
            for (std::size_t s = 0; s < spec.ns(); ++s)
                for (std::size_t a = 0; a < spec.na(); ++a)
                    for (std::size_t b = 0; b < spec.nb(); ++b) {
                        const long d = spec.transition_row(s, a, b).dirac_index();
                        if (d < 0 || static_cast<std::size_t>(d) != b % spec.ns())
                            return fail("transition row " + coords3("s", s, "a", a, "b", b) +
                                        " is not pinned to the state component of the output");
                    }
            return {};
        }
        case StructureFlag::BeliefFromOutput: {
            std::vector<SimplexVector> pis;
            lattice_points(spec.ns(), opts.belief_resolution, pis);
            for (const auto& pi : pis)
                for (std::size_t b = 0; b < spec.nb(); ++b) {
                    bool have_ref = false;
                    Belief ref;
                    std::size_t ref_a = 0;
                    for (std::size_t a = 0; a < spec.na(); ++a) {
                        const SimplexVector pred = output_predictive(spec, pi, a);
                        if (pred[b] <= 0.0) continue; // unreachable branch, no constraint
                        const Belief next = filter_update(spec, pi, a, b);
                        if (!have_ref) {
                            ref = next;
                            ref_a = a;
                            have_ref = true;
                        } else if (l1_distance(next, ref) > opts.sampled_tol) {
                            std::ostringstream os;
                            os << "filter update at b=" << b << " differs between a=" << ref_a
                               << " and a=" << a << " at a sampled belief (L1 "
                               << l1_distance(next, ref) << ")";
                            return fail(os.str(), true);
                        }
                    }
                }
            StructureCheckResult ok;
            ok.sampled = true;
            return ok;
        }
    }
    return {};
}

} // namespace feedcap
