#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "feedcap/codefunctions.hpp"
#include "feedcap/directed_info.hpp"
#include "oracles.hpp"

using namespace feedcap;

TEST_CASE("space sizes and node layout") {
    auto s1 = enumerate_codefunctions(2, 2, 1);
    CHECK(s1.size == 2);
    CHECK(s1.total_nodes == 1);

    auto s2 = enumerate_codefunctions(2, 2, 2);
    CHECK(s2.size == 8); // 2^1 * 2^2
    CHECK(s2.nodes_per_step == std::vector<std::size_t>{1, 2});

    auto s3 = enumerate_codefunctions(2, 2, 3);
    CHECK(s3.size == 128); // 2^(1+2+4)
    CHECK(s3.total_nodes == 7);

    auto s23 = enumerate_codefunctions(3, 2, 2);
    CHECK(s23.size == 27); // 3^1 * 3^2

    // 2^31 trees at horizon 5 blows the default cap
    CHECK_THROWS_AS(enumerate_codefunctions(2, 2, 5), CapExceeded);
    CHECK_NOTHROW(enumerate_codefunctions(2, 2, 4));
}

TEST_CASE("encode decode bijection") {
    auto space = enumerate_codefunctions(2, 2, 3);
    for (std::uint64_t i = 0; i < space.size; ++i) {
        auto f = space.decode(i);
        CHECK(space.encode(f) == i);
        CHECK(f.tables.size() == 3);
        CHECK(f.tables[2].size() == 4);
    }
    // eval_prefix packs first symbol most significant
    auto f = space.decode(37);
    std::size_t expect = f.eval(1, 0);
    CHECK(f.eval_prefix(1, 0) == expect);
    expect = expect * 2 + f.eval(2, 1);
    CHECK(f.eval_prefix(2, 1) == expect);
}

TEST_CASE("distribution factories validate mass") {
    auto space = enumerate_codefunctions(2, 2, 2);
    auto uni = uniform_codefunction_distribution(space);
    CHECK(uni.mass.size() == 8);
    CHECK(uni.mass[3] == 0.125);

    std::vector<double> m(8, 0.0);
    m[2] = 0.5;
    m[5] = 0.5;
    auto two = make_codefunction_distribution(space, m);
    CHECK(two.mass[5] == 0.5);

    m[5] = 0.4;
    CHECK_THROWS_AS(make_codefunction_distribution(space, m), ValidationError);
    CHECK_THROWS_AS(make_codefunction_distribution(space, std::vector<double>(7, 0.125)),
                    ValidationError);
}

TEST_CASE("feedback patterns hide the right suffix") {
    CHECK(FeedbackPattern::full().hidden_suffix(4) == 0);
    CHECK(FeedbackPattern::none().hidden_suffix(4) == 3);
    CHECK(FeedbackPattern::none().hidden_suffix(1) == 0);
    // delay D: the last D-1 outputs are invisible; delay 1 is ordinary feedback
    CHECK(FeedbackPattern::delay(2).hidden_suffix(2) == 1);
    CHECK(FeedbackPattern::delay(2).hidden_suffix(4) == 1);
    CHECK(FeedbackPattern::delay(1).hidden_suffix(4) == 0);
    CHECK(FeedbackPattern::delay(3).hidden_suffix(4) == 2);
    CHECK(FeedbackPattern::delay(3).hidden_suffix(2) == 1);
}

TEST_CASE("input distribution rows and directed mass") {
    oracles::Rng rng(41);
    auto input = oracles::random_input(rng, 2, 2, 3, FeedbackPattern::delay(2));
    // delay 2: the step-3 row cannot see b_2
    CHECK(input.row(3, 2, 0)[0] == input.row(3, 2, 1)[0]);
    CHECK(input.row(3, 2, 0)[0] != input.row(3, 2, 2)[0]); // b_1 is visible

    // directed product along a fixed pair of paths; the output argument packs
    // the step-t conditioning history b^{t-1}
    const std::size_t a_seq = 5, b_hist = 2; // a = (1,0,1), b^2 = (1,0)
    double expect = input.p(1, 0, 0, 1) * input.p(2, 1, 1, 0) * input.p(3, 2, 2, 1);
    CHECK(std::abs(input.directed_mass(3, a_seq, b_hist) - expect) <= 1e-15);
    CHECK(std::abs(input.directed_mass(2, 2, 1) -
                   input.p(1, 0, 0, 1) * input.p(2, 1, 1, 0)) <= 1e-15);

    // hidden-output constraint is enforced at construction
    auto steps = input.steps;
    steps[2][2 * 4 + 0] = SimplexVector(std::vector<double>{0.123, 0.877});
    CHECK_THROWS_AS(make_input_distribution(2, 2, 3, FeedbackPattern::delay(2), steps),
                    ValidationError);

    // io round trip preserves every row
    auto text = save_input(input);
    auto back = load_input_from_json(text);
    CHECK(back.horizon == 3);
    CHECK(back.pattern.kind == FeedbackPattern::Kind::Delay);
    CHECK(save_input(back) == text);
}

TEST_CASE("consistent measure mass support and marginals") {
    oracles::Rng rng(42);
    for (int rep = 0; rep < 3; ++rep) {
        const int T = 2;
        auto channel = oracles::random_general(rng, 2, 2, T);
        auto input = oracles::random_input(rng, 2, 2, T, FeedbackPattern::full());
        auto dist = good_distribution(input);
        auto m = build_consistent_measure(dist, channel);

        double total = std::accumulate(m.mass.begin(), m.mass.end(), 0.0);
        CHECK(std::abs(total - 1.0) <= 1e-10);

        // support: inputs off the tree of f carry no mass
        for (std::uint64_t f = 0; f < m.space.size; ++f) {
            auto fn = m.space.decode(f);
            for (std::size_t as = 0; as < m.n_a_seq; ++as)
                for (std::size_t bs = 0; bs < m.n_b_seq; ++bs) {
                    std::size_t expect_a = fn.eval_prefix(T, bs / 2);
                    if (as != expect_a) CHECK(m.q_fab(f, as, bs) == 0.0);
                }
        }

        // f-marginal returns the generating law
        auto mf = m.marginal_f();
        for (std::uint64_t f = 0; f < m.space.size; ++f)
            CHECK(std::abs(mf[f] - dist.mass[f]) <= 1e-12);

        // (a, b)-marginal equals the direct product joint of the input law
        auto brute = oracles::brute_joint(channel, input);
        auto mab = m.marginal_ab();
        for (std::size_t i = 0; i < brute.size(); ++i)
            CHECK(std::abs(mab[i] - brute[i]) <= 1e-12);
    }
}

TEST_CASE("induced input of flat and point distributions") {
    auto space = enumerate_codefunctions(2, 2, 2);

    auto uni = uniform_codefunction_distribution(space);
    auto flat = induced_input_distribution(uni);
    for (int t = 1; t <= 2; ++t)
        for (std::size_t ah = 0; ah < oracles::ipow(2, t - 1); ++ah)
            for (std::size_t bh = 0; bh < oracles::ipow(2, t - 1); ++bh)
                CHECK(std::abs(flat.p(t, ah, bh, 0) - 0.5) <= 1e-14);

    // all mass on one tree: rows are dirac along its own histories
    std::vector<double> m(space.size, 0.0);
    const std::uint64_t pick = 6;
    m[pick] = 1.0;
    auto point = induced_input_distribution(make_codefunction_distribution(space, m));
    auto f = space.decode(pick);
    CHECK(point.row(1, 0, 0).dirac_index() == static_cast<long>(f.eval(1, 0)));
    for (std::size_t b1 = 0; b1 < 2; ++b1)
        CHECK(point.row(2, f.eval(1, 0), b1).dirac_index() ==
              static_cast<long>(f.eval(2, b1)));
    // histories inconsistent with the tree have zero mass, filled uniform
    CHECK_FALSE(point.uniform_filled.empty());
}

TEST_CASE("induced input matches the set-ratio oracle") {
    oracles::Rng rng(43);
    auto space = enumerate_codefunctions(2, 2, 2);
    std::vector<double> m = oracles::random_row(rng, space.size);
    auto dist = make_codefunction_distribution(space, m);
    auto induced = induced_input_distribution(dist);

    // p(a_t | a^{t-1}, b^{t-1}) = mass of trees consistent with the history
    // and choosing a at the node, over the mass of all consistent trees
    for (int t = 1; t <= 2; ++t)
        for (std::size_t ah = 0; ah < oracles::ipow(2, t - 1); ++ah)
            for (std::size_t bh = 0; bh < oracles::ipow(2, t - 1); ++bh) {
                double den = 0.0, num[2] = {0.0, 0.0};
                for (std::uint64_t fi = 0; fi < space.size; ++fi) {
                    auto f = space.decode(fi);
                    if (t == 2 && f.eval(1, 0) != ah) continue;
                    den += dist.mass[fi];
                    num[f.eval(t, bh)] += dist.mass[fi];
                }
                REQUIRE(den > 0.0);
                for (std::size_t a = 0; a < 2; ++a)
                    CHECK(std::abs(induced.p(t, ah, bh, a) - num[a] / den) <= 1e-12);
            }
}

TEST_CASE("good distributions reproduce their input law") {
    oracles::Rng rng(44);
    for (int rep = 0; rep < 8; ++rep) {
        const int T = 1 + rep % 3;
        auto input = oracles::random_input(rng, 2, 2, T, FeedbackPattern::full());
        auto dist = good_distribution(input);
        auto res = verify_good(dist, input);
        CHECK(res.ok);
        CHECK(res.max_set_deviation <= 1e-12);
        CHECK(res.max_rule_deviation <= 1e-12);

        auto induced = induced_input_distribution(dist);
        for (int t = 1; t <= T; ++t)
            for (std::size_t ah = 0; ah < oracles::ipow(2, t - 1); ++ah)
                for (std::size_t bh = 0; bh < oracles::ipow(2, t - 1); ++bh)
                    for (std::size_t a = 0; a < 2; ++a)
                        CHECK(std::abs(induced.p(t, ah, bh, a) - input.p(t, ah, bh, a)) <=
                              1e-12);
    }

    // horizon 1: the tree law is the input row itself
    auto in1 = oracles::random_input(rng, 3, 2, 1, FeedbackPattern::full());
    auto d1 = good_distribution(in1);
    for (std::size_t a = 0; a < 3; ++a)
        CHECK(d1.mass[a] == doctest::Approx(in1.p(1, 0, 0, a)).epsilon(1e-15));
}

TEST_CASE("verify_good flags a perturbed law with coordinates") {
    oracles::Rng rng(45);
    auto input = oracles::random_input(rng, 2, 2, 2, FeedbackPattern::full());
    auto dist = good_distribution(input);

    // move 2% of the mass between two trees
    auto moved = dist.mass;
    std::size_t hi = 0;
    for (std::size_t i = 1; i < moved.size(); ++i)
        if (moved[i] > moved[hi]) hi = i;
    moved[hi] -= 0.02;
    moved[(hi + 3) % moved.size()] += 0.02;
    auto bad = make_codefunction_distribution(dist.space, moved);

    auto res = verify_good(bad, input);
    CHECK_FALSE(res.ok);
    CHECK(std::max(res.max_set_deviation, res.max_rule_deviation) > 0.01);
    CHECK(res.worst_t >= 1);
}

TEST_CASE("codeword-only laws exist exactly for open-loop inputs") {
    oracles::Rng rng(46);
    auto open = oracles::random_input(rng, 2, 2, 2, FeedbackPattern::none());
    auto cw = codeword_only_distribution(open);
    auto res = verify_good(cw, open);
    CHECK(res.ok);

    // every supported tree is constant in the output argument
    for (std::uint64_t fi = 0; fi < cw.space.size; ++fi) {
        if (cw.mass[fi] == 0.0) continue;
        auto f = cw.space.decode(fi);
        CHECK(f.eval(2, 0) == f.eval(2, 1));
    }

    auto closed = oracles::random_input(rng, 2, 2, 2, FeedbackPattern::full());
    CHECK_THROWS_AS(codeword_only_distribution(closed), CaseMismatch);
}

TEST_CASE("tree-output information equals the causal sum") {
    oracles::Rng rng(47);
    for (int rep = 0; rep < 3; ++rep) {
        const int T = 2;
        auto channel = oracles::random_general(rng, 2, 2, T);
        auto input = oracles::random_input(rng, 2, 2, T, FeedbackPattern::full());
        auto dist = good_distribution(input);
        auto m = build_consistent_measure(dist, channel);

        double ifb = oracles::table_mutual_information(
            m.marginal_fb(), static_cast<std::size_t>(m.space.size), m.n_b_seq);
        auto di = directed_information(joint_measure(channel, input));
        CHECK(std::abs(ifb - di.total_bits) <= 1e-10);
    }
}
