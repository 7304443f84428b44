#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <variant>

#include "feedcap/directed_info.hpp"
#include "oracles.hpp"

using namespace feedcap;

namespace {

const std::string kData = FEEDCAP_TESTDATA_DIR;

MarkovChannelSpec load_markov(const std::string& name) {
    return std::get<MarkovChannelSpec>(load_spec(kData + "/" + name));
}

InputDistribution uniform_iid(std::size_t na, std::size_t nb, int T) {
    std::vector<std::vector<SimplexVector>> steps(static_cast<std::size_t>(T));
    std::size_t rows = 1;
    for (int t = 1; t <= T; ++t) {
        for (std::size_t r = 0; r < rows; ++r)
            steps[static_cast<std::size_t>(t) - 1].push_back(SimplexVector::uniform(na));
        rows *= na * nb;
    }
    return make_input_distribution(na, nb, T, FeedbackPattern::none(), std::move(steps));
}

// step 1 uniform, step 2 repeats the first output
InputDistribution echo_input() {
    std::vector<std::vector<SimplexVector>> steps(2);
    steps[0].push_back(SimplexVector::uniform(2));
    for (std::size_t ah = 0; ah < 2; ++ah)
        for (std::size_t bh = 0; bh < 2; ++bh)
            steps[1].push_back(SimplexVector::dirac(2, bh));
    return make_input_distribution(2, 2, 2, FeedbackPattern::full(), std::move(steps));
}

} // namespace

TEST_CASE("joint measure of the noiseless channel") {
    auto spec = load_markov("noiseless.json");
    auto j = joint_measure(spec, uniform_iid(2, 2, 1));
    CHECK(j.mass(0, 0) == 0.5);
    CHECK(j.mass(0, 1) == 0.0);
    CHECK(j.mass(1, 1) == 0.5);
    CHECK(mutual_information(j) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("joint measure matches path enumeration") {
    oracles::Rng rng(51);
    for (int rep = 0; rep < 4; ++rep) {
        const int T = 3;
        auto input = oracles::random_input(rng, 2, 2, T, FeedbackPattern::full());

        auto gch = oracles::random_general(rng, 2, 2, T);
        auto jg = joint_measure(gch, input);
        auto bg = oracles::brute_joint(gch, input);
        for (std::size_t i = 0; i < bg.size(); ++i)
            CHECK(std::abs(jg.p[i] - bg[i]) <= 1e-12);

        auto mch = oracles::random_markov(rng, 3, 2, 2);
        auto jm = joint_measure(mch, input);
        auto bm = oracles::brute_joint(mch, input);
        for (std::size_t i = 0; i < bm.size(); ++i)
            CHECK(std::abs(jm.p[i] - bm[i]) <= 1e-12);

        // the horizon view of the state channel induces the same joint
        auto jv = joint_measure(general_view(mch, T), input);
        for (std::size_t i = 0; i < bm.size(); ++i)
            CHECK(std::abs(jv.p[i] - bm[i]) <= 1e-12);
    }
}

TEST_CASE("causal information sum against the dense oracle") {
    oracles::Rng rng(52);
    for (int rep = 0; rep < 4; ++rep) {
        const int T = 2 + rep % 2;
        auto ch = oracles::random_general(rng, 2, 2, T);
        auto input = oracles::random_input(rng, 2, 2, T, FeedbackPattern::full());
        auto j = joint_measure(ch, input);
        auto di = directed_information(j);
        const double brute = oracles::brute_directed_bits(j.p, 2, 2, T);
        CHECK(std::abs(di.total_bits - brute) <= 1e-10);
        CHECK(std::abs(di.divergence_form_bits - di.total_bits) <= 1e-10);
        CHECK(static_cast<int>(di.per_step_bits.size()) == T);

        double sum = 0.0;
        for (double v : di.per_step_bits) sum += v;
        CHECK(std::abs(sum - di.total_bits) <= 1e-12);
    }
}

TEST_CASE("frozen value for the memoryless binary channel") {
    auto spec = load_markov("bsc01.json");
    auto di = directed_information(joint_measure(spec, uniform_iid(2, 2, 2)));
    // 2 (1 - H2(0.1)), H2 evaluated by mpmath at 30 digits
    CHECK(std::abs(di.total_bits - oracles::kBscCap01_T2) <= 1e-12);
    CHECK(std::abs(di.per_step_bits[0] - oracles::kBscCap01) <= 1e-12);
    CHECK(std::abs(di.per_step_bits[1] - oracles::kBscCap01) <= 1e-12);
}

TEST_CASE("horizon one reduces to mutual information") {
    oracles::Rng rng(53);
    auto ch = oracles::random_general(rng, 3, 2, 1);
    auto input = oracles::random_input(rng, 3, 2, 1, FeedbackPattern::full());
    auto j = joint_measure(ch, input);
    CHECK(std::abs(directed_information(j).total_bits - mutual_information(j)) <= 1e-12);
}

TEST_CASE("independent pairs carry no information") {
    // constant-output channel: B tells nothing about A
    std::vector<std::vector<SimplexVector>> steps(2);
    steps[0].assign(2, SimplexVector(std::vector<double>{0.3, 0.7}));
    steps[1].assign(8, SimplexVector(std::vector<double>{0.3, 0.7}));
    auto ch = make_general_spec({2, "A"}, {2, "B"}, 2, std::move(steps));
    oracles::Rng rng(54);
    auto j = joint_measure(ch, oracles::random_input(rng, 2, 2, 2, FeedbackPattern::none()));
    CHECK(std::abs(directed_information(j).total_bits) <= 1e-13);
    CHECK(std::abs(mutual_information(j)) <= 1e-13);
}

TEST_CASE("reverse term vanishes without feedback") {
    oracles::Rng rng(55);
    // generic rows: zero to within accumulation noise
    for (int rep = 0; rep < 6; ++rep) {
        auto ch = oracles::random_general(rng, 2, 2, 3);
        auto input = oracles::random_input(rng, 2, 2, 3, FeedbackPattern::none());
        auto rev = reverse_directed_information(joint_measure(ch, input));
        CHECK(std::abs(rev.total_bits) <= 1e-10);
        CHECK(rev.per_step_bits[0] == 0.0); // first step conditions on nothing
    }
    // sixteenth-grid rows: every marginal is an exact dyadic rational, the
    // log ratios cancel exactly, and the sum is exactly zero
    for (int rep = 0; rep < 6; ++rep) {
        auto ch = oracles::random_general(rng, 2, 2, 3, true);
        auto input = oracles::random_input(rng, 2, 2, 3, FeedbackPattern::none(), true);
        auto rev = reverse_directed_information(joint_measure(ch, input));
        CHECK(rev.total_bits == 0.0);
        for (double v : rev.per_step_bits) CHECK(v == 0.0);
    }
}

TEST_CASE("information splits into causal and reverse parts") {
    oracles::Rng rng(56);
    for (int rep = 0; rep < 6; ++rep) {
        auto ch = oracles::random_general(rng, 2, 2, 3);
        auto input = oracles::random_input(rng, 2, 2, 3, FeedbackPattern::full());
        auto j = joint_measure(ch, input);
        auto di = directed_information(j);
        auto rev = reverse_directed_information(j);
        CHECK(std::abs(di.total_bits + rev.total_bits - mutual_information(j)) <= 1e-10);
        // reverse mass is nonnegative information
        CHECK(rev.total_bits >= -1e-10);
        CHECK(mutual_information(j) - di.total_bits >= -1e-10);
    }
}

TEST_CASE("echo strategy shows its feedback in the reverse term") {
    auto spec = load_markov("bsc01.json");
    auto j = joint_measure(spec, echo_input());
    auto rev = reverse_directed_information(j);
    // a_2 = b_1 makes I(A_2; B_1 | A_1) the full output entropy H2(0.1)
    CHECK(std::abs(rev.total_bits - oracles::kH2_01) <= 1e-12);
    CHECK(rev.total_bits > 1e-3);
    auto di = directed_information(j);
    CHECK(std::abs(di.total_bits + rev.total_bits - mutual_information(j)) <= 1e-10);
    CHECK(mutual_information(j) - di.total_bits > 1e-3);
}

TEST_CASE("belief-augmented sum agrees with the plain one") {
    oracles::Rng rng(57);
    for (int rep = 0; rep < 4; ++rep) {
        auto spec = oracles::random_markov(rng, 2 + rep % 2, 2, 2);
        auto input = oracles::random_input(rng, 2, 2, 2, FeedbackPattern::full());
        auto mk = markov_directed_information(spec, input);
        auto di = directed_information(joint_measure(spec, input));
        CHECK(std::abs(mk.total_bits - di.total_bits) <= 1e-10);
        CHECK(mk.per_step_bits.size() == di.per_step_bits.size());
    }

    // one state: the belief is constant and every step term matches exactly
    auto bsc = load_markov("bsc01.json");
    auto input = echo_input();
    auto mk = markov_directed_information(bsc, input);
    auto di = directed_information(joint_measure(bsc, input));
    for (std::size_t t = 0; t < 2; ++t)
        CHECK(std::abs(mk.per_step_bits[t] - di.per_step_bits[t]) <= 1e-12);
}

TEST_CASE("pathwise density") {
    auto spec = load_markov("noiseless.json");
    auto j = joint_measure(spec, uniform_iid(2, 2, 2));
    auto d = information_density(j, 2, 2); // a = (1,0), b = (1,0)
    CHECK(d.value_bits == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(d.increments_bits.size() == 2);
    CHECK_THROWS_AS(information_density(j, 2, 3), ZeroMassCell);

    // density averages back to the causal sum
    oracles::Rng rng(58);
    auto ch = oracles::random_general(rng, 2, 2, 2);
    auto input = oracles::random_input(rng, 2, 2, 2, FeedbackPattern::full());
    auto jr = joint_measure(ch, input);
    double mean = 0.0;
    for (std::size_t as = 0; as < jr.n_a_seq; ++as)
        for (std::size_t bs = 0; bs < jr.n_b_seq; ++bs) {
            const double m = jr.mass(as, bs);
            if (m > 0.0) mean += m * information_density(jr, as, bs).value_bits;
        }
    CHECK(std::abs(mean - directed_information(jr).total_bits) <= 1e-10);
}

TEST_CASE("one-shot capacity of the memoryless binary channel") {
    auto spec = load_markov("bsc01.json");
    CapacityOptions opts;
    opts.starts = 4;
    auto cap = finite_horizon_capacity(spec, 1, FeedbackPattern::none(), opts);
    CHECK(cap.converged);
    CHECK(std::abs(cap.value_bits - oracles::kBscCap01) <= 1e-6);
    // optimizer value is certified by re-evaluating its own input law
    auto di = directed_information(joint_measure(spec, cap.best));
    CHECK(std::abs(di.total_bits - cap.value_bits) <= 1e-10);

    auto noiseless = load_markov("noiseless.json");
    auto cap1 = finite_horizon_capacity(noiseless, 1, FeedbackPattern::none(), opts);
    CHECK(std::abs(cap1.value_bits - 1.0) <= 1e-9);
}

TEST_CASE("more feedback never hurts the optimum") {
    auto spec = std::get<MarkovChannelSpec>(load_spec(kData + "/twostate_io.json"));
    CapacityOptions opts;
    opts.starts = 4;
    opts.seed = 7;
    const int T = 2;
    auto none = finite_horizon_capacity(spec, T, FeedbackPattern::none(), opts);
    auto delayed = finite_horizon_capacity(spec, T, FeedbackPattern::delay(1), opts);
    auto full = finite_horizon_capacity(spec, T, FeedbackPattern::full(), opts);
    CHECK(none.value_bits <= delayed.value_bits + 1e-6);
    CHECK(delayed.value_bits <= full.value_bits + 1e-6);
    CHECK(none.converged);
    CHECK(full.converged);
    for (double v : full.start_values) CHECK(v <= full.value_bits + 1e-9);
}

TEST_CASE("random-coding exponent behaves") {
    auto spec = load_markov("bsc01.json");
    auto input = uniform_iid(2, 2, 2);
    ErrorExponentResult prev;
    bool first = true;
    for (double rate : {0.0, 0.1, 0.3, 0.5}) {
        auto e = error_exponent(spec, input, {rate, 64});
        CHECK(e.exponent_nats >= -1e-12);
        CHECK(std::abs(e.exponent_bits - e.exponent_nats / std::log(2.0)) <= 1e-12);
        CHECK(e.curve.size() == 65);
        if (!first) CHECK(e.exponent_nats <= prev.exponent_nats + 1e-12);
        prev = e;
        first = false;
    }

    auto noiseless = load_markov("noiseless.json");
    auto en = error_exponent(noiseless, uniform_iid(2, 2, 2), {0.5, 64});
    CHECK(en.exponent_bits > 0.4); // rate below capacity, strictly positive slope
    CHECK(en.best_rho == 1.0);
}
