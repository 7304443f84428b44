#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <variant>

#include "feedcap/channel.hpp"
#include "feedcap/filtering.hpp"
#include "oracles.hpp"

using namespace feedcap;

namespace {

const std::string kData = FEEDCAP_TESTDATA_DIR;

MarkovChannelSpec load_markov(const std::string& name) {
    return std::get<MarkovChannelSpec>(load_spec(kData + "/" + name));
}

// two states, emission depends on state only: p(b=1|s=0) = 0.9, p(b=1|s=1) = 0.2
MarkovChannelSpec two_state_example() {
    std::vector<SimplexVector> tr;
    for (int i = 0; i < 8; ++i)
        tr.push_back(SimplexVector(std::vector<double>{0.7, 0.3}));
    std::vector<SimplexVector> em = {
        SimplexVector(std::vector<double>{0.1, 0.9}), SimplexVector(std::vector<double>{0.1, 0.9}),
        SimplexVector(std::vector<double>{0.8, 0.2}), SimplexVector(std::vector<double>{0.8, 0.2}),
    };
    return make_markov_spec({2, "S"}, {2, "A"}, {2, "B"}, SimplexVector::uniform(2), tr, em, {});
}

} // namespace

TEST_CASE("output predictive mixes emissions by belief") {
    auto spec = two_state_example();
    auto r = output_predictive(spec, SimplexVector::uniform(2), 0);
    CHECK(r[1] == doctest::Approx(0.55).epsilon(1e-15)); // (0.9 + 0.2) / 2
    CHECK(r[0] == doctest::Approx(0.45).epsilon(1e-15));

    auto skew = output_predictive(spec, SimplexVector(std::vector<double>{0.25, 0.75}), 1);
    CHECK(skew[1] == doctest::Approx(0.25 * 0.9 + 0.75 * 0.2).epsilon(1e-15));
}

TEST_CASE("posterior and filter update match direct bayes arithmetic") {
    oracles::Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        auto spec = oracles::random_markov(rng, 3, 2, 2);
        SimplexVector pi(oracles::random_row(rng, 3));
        const std::size_t a = rep % 2, b = (rep / 2) % 2;

        double mass = 0.0;
        std::vector<double> post(3), next(3, 0.0);
        for (std::size_t s = 0; s < 3; ++s) {
            post[s] = pi[s] * spec.p_emit(s, a, b);
            mass += post[s];
        }
        for (auto& v : post) v /= mass;
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t s2 = 0; s2 < 3; ++s2)
                next[s2] += post[s] * spec.p_trans(s, a, b, s2);

        auto got_post = state_posterior(spec, pi, a, b);
        auto got_next = filter_update(spec, pi, a, b);
        for (std::size_t s = 0; s < 3; ++s) {
            CHECK(std::abs(got_post[s] - post[s]) <= 1e-14);
            CHECK(std::abs(got_next[s] - next[s]) <= 1e-14);
        }
    }
}

TEST_CASE("zero predictive mass throws") {
    // emission puts no mass on b = 1 in either state under a = 0
    std::vector<SimplexVector> tr(8, SimplexVector::uniform(2));
    std::vector<SimplexVector> em = {
        SimplexVector::dirac(2, 0), SimplexVector::uniform(2),
        SimplexVector::dirac(2, 0), SimplexVector::uniform(2),
    };
    auto spec = make_markov_spec({2, "S"}, {2, "A"}, {2, "B"}, SimplexVector::uniform(2),
                                 tr, em, {});
    CHECK_THROWS_AS(state_posterior(spec, SimplexVector::uniform(2), 0, 1),
                    ZeroProbabilityObservation);
    try {
        run_filter(spec, {{1, 0}, {0, 1}});
        FAIL("expected throw");
    } catch (const ZeroProbabilityObservation& e) {
        CHECK(std::string(e.what()).find("zero predictive") != std::string::npos);
    }
    CHECK_NOTHROW(run_filter(spec, {{1, 0}, {0, 0}, {1, 1}}));
}

TEST_CASE("filter trace shapes") {
    auto spec = two_state_example();
    auto empty = run_filter(spec, {});
    CHECK(empty.beliefs.size() == 1);
    CHECK(empty.predictives.empty());
    CHECK(empty.beliefs[0][0] == 0.5);

    auto t3 = run_filter(spec, {{0, 1}, {1, 0}, {0, 0}});
    CHECK(t3.beliefs.size() == 4);
    CHECK(t3.predictives.size() == 3);
    CHECK(t3.io.size() == 3);
    CHECK_THROWS_AS(run_filter(spec, {{0, 2}}), ValidationError);

    // one state: every belief is the Dirac point
    auto bsc = load_markov("bsc01.json");
    auto tr = run_filter(bsc, {{0, 1}, {1, 1}, {0, 0}});
    for (const auto& pi : tr.beliefs) CHECK(pi.dirac_index() == 0);
    CHECK(tr.predictives[0][1] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("beliefs and predictives are the path-sum conditionals") {
    // oracle: P(s_{t+1} | a^t, b^t) and P(b_t | a^t, b^{t-1}) read off the
    // exhaustive state-path joint under a causal uniform input law
    oracles::Rng rng(32);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t ns = 2 + rep % 2;
        auto spec = oracles::random_markov(rng, ns, 2, 2);
        const int T = 3;
        auto input = oracles::random_input(rng, 2, 2, T, FeedbackPattern::full());
        auto joint = oracles::state_joint(spec, input);

        // fixed io history; every path has positive mass (rows are positive)
        std::vector<std::pair<std::size_t, std::size_t>> hist = {{1, 0}, {0, 1}, {1, 1}};
        auto trace = run_filter(spec, hist);

        std::size_t a_pref = 0, b_pref = 0;
        for (int t = 1; t <= T; ++t) {
            a_pref = a_pref * 2 + hist[t - 1].first;
            b_pref = b_pref * 2 + hist[t - 1].second;
            const std::size_t a_tail = oracles::ipow(2, T - t), b_tail = oracles::ipow(2, T - t);

            // belief: distribution of s_{t+1} given the t-step prefix
            std::vector<double> marg(ns, 0.0);
            double total = 0.0;
            for (std::size_t ss = 0; ss < joint.n_s; ++ss) {
                const std::size_t st1 = oracles::digit(ss, t, T + 1, ns);
                for (std::size_t at = 0; at < a_tail; ++at)
                    for (std::size_t bt = 0; bt < b_tail; ++bt) {
                        const double m =
                            joint.mass(ss, a_pref * a_tail + at, b_pref * b_tail + bt);
                        marg[st1] += m;
                        total += m;
                    }
            }
            REQUIRE(total > 0.0);
            for (std::size_t s = 0; s < ns; ++s)
                CHECK(std::abs(trace.beliefs[t][s] - marg[s] / total) <= 1e-12);

            // predictive: P(b_t = observed | a^t, b^{t-1}); condition on the
            // prefix with b_t free, weight by the input law's a_t row
            double num = 0.0, den = 0.0;
            const std::size_t bh_prev = b_pref / 2;
            for (std::size_t ss = 0; ss < joint.n_s; ++ss)
                for (std::size_t at = 0; at < a_tail; ++at)
                    for (std::size_t b_free = 0; b_free < 2; ++b_free)
                        for (std::size_t bt = 0; bt < b_tail; ++bt) {
                            const double m = joint.mass(ss, a_pref * a_tail + at,
                                                        (bh_prev * 2 + b_free) * b_tail + bt);
                            den += m;
                            if (b_free == hist[t - 1].second) num += m;
                        }
            CHECK(std::abs(trace.predictives[t - 1][hist[t - 1].second] - num / den) <= 1e-12);
        }
    }
}

TEST_CASE("structure checks accept the shipped instances") {
    auto bsc = load_markov("bsc01.json");
    for (auto f : {StructureFlag::NoIsi, StructureFlag::StateFromOutput,
                   StructureFlag::BeliefFromOutput})
        CHECK(check_structure(bsc, f).ok);

    auto csi = load_markov("csi_switch.json");
    CHECK(check_structure(csi, StructureFlag::ReceiverCsi).ok);
    CHECK(check_structure(csi, StructureFlag::NoIsi).ok); // emission factorization branch

    auto io = load_markov("twostate_io.json");
    CHECK(check_structure(io, StructureFlag::StateFromIo).ok);

    auto bo = load_markov("belief_out.json");
    auto res = check_structure(bo, StructureFlag::BeliefFromOutput);
    CHECK(res.ok);
    CHECK(res.sampled); // grid check, not a proof over all of P(S)
}

TEST_CASE("structure checks reject counterexamples with coordinates") {
    oracles::Rng rng(33);
    auto spec = oracles::random_markov(rng, 2, 2, 2);
    for (auto f : {StructureFlag::NoIsi, StructureFlag::StateFromInput,
                   StructureFlag::StateFromOutput, StructureFlag::StateFromIo,
                   StructureFlag::BeliefFromOutput}) {
        auto res = check_structure(spec, f);
        CHECK_FALSE(res.ok);
        CHECK_FALSE(res.detail.empty());
    }
    // csi needs |B| divisible by |S|
    auto odd = oracles::random_markov(rng, 2, 2, 3);
    CHECK_FALSE(check_structure(odd, StructureFlag::ReceiverCsi).ok);

    // dirac transitions at g(s, a): state_from_input holds, state_from_output fails
    std::vector<SimplexVector> tr;
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
                tr.push_back(SimplexVector::dirac(2, (s + a) % 2));
    std::vector<SimplexVector> em;
    for (int i = 0; i < 4; ++i) em.emplace_back(oracles::random_row(rng, 2));
    auto sfi = make_markov_spec({2, "S"}, {2, "A"}, {2, "B"}, SimplexVector::dirac(2, 0),
                                tr, em, {StructureFlag::StateFromInput});
    CHECK(check_structure(sfi, StructureFlag::StateFromInput).ok);
    CHECK_FALSE(check_structure(sfi, StructureFlag::StateFromOutput).ok);
    CHECK(check_structure(sfi, StructureFlag::StateFromIo).ok); // weaker property
}
