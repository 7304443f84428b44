#include <benchmark/benchmark.h>

#include <random>
#include <variant>

#include "feedcap/coding.hpp"
#include "feedcap/directed_info.hpp"
#include "feedcap/filtering.hpp"
#include "feedcap/mdp.hpp"

using namespace feedcap;

namespace {

MarkovChannelSpec load_markov(const std::string& name) {
    return std::get<MarkovChannelSpec>(load_spec(std::string(FEEDCAP_TESTDATA_DIR) + "/" + name));
}

InputDistribution full_feedback_input(std::size_t na, std::size_t nb, int T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<std::vector<SimplexVector>> steps(static_cast<std::size_t>(T));
    std::size_t rows = 1;
    for (int t = 1; t <= T; ++t) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> w(na);
            double total = 0.0;
            for (auto& x : w) {
                x = g(rng) + 1e-9;
                total += x;
            }
            for (auto& x : w) x /= total;
            steps[static_cast<std::size_t>(t) - 1].push_back(SimplexVector(std::move(w)));
        }
        rows *= na * nb;
    }
    return make_input_distribution(na, nb, T, FeedbackPattern::full(), std::move(steps));
}

void bm_filter_update(benchmark::State& state) {
    auto spec = load_markov("twostate_io.json");
    Belief pi = SimplexVector::uniform(spec.ns());
    std::size_t b = 0;
    for (auto _ : state) {
        pi = filter_update(spec, pi, 1, b);
        b ^= 1;
        benchmark::DoNotOptimize(pi);
    }
}
BENCHMARK(bm_filter_update);

void bm_run_filter_T64(benchmark::State& state) {
    auto spec = load_markov("twostate_io.json");
    std::vector<std::pair<std::size_t, std::size_t>> hist;
    for (int t = 0; t < 64; ++t) hist.push_back({static_cast<std::size_t>(t) % 2, (t / 2) % 2u});
    for (auto _ : state) {
        auto trace = run_filter(spec, hist);
        benchmark::DoNotOptimize(trace);
    }
}
BENCHMARK(bm_run_filter_T64);

void bm_joint_measure_T3(benchmark::State& state) {
    auto spec = load_markov("twostate_io.json");
    auto input = full_feedback_input(2, 2, 3, 11);
    for (auto _ : state) {
        auto j = joint_measure(spec, input);
        benchmark::DoNotOptimize(j);
    }
}
BENCHMARK(bm_joint_measure_T3);

void bm_directed_information_T3(benchmark::State& state) {
    auto spec = load_markov("twostate_io.json");
    auto j = joint_measure(spec, full_feedback_input(2, 2, 3, 11));
    for (auto _ : state) {
        auto di = directed_information(j);
        benchmark::DoNotOptimize(di);
    }
}
BENCHMARK(bm_directed_information_T3);

void bm_consistent_measure_T3(benchmark::State& state) {
    auto input = full_feedback_input(2, 2, 3, 7);
    auto dist = good_distribution(input);
    auto channel = load_markov("twostate_io.json");
    for (auto _ : state) {
        auto m = build_consistent_measure(dist, channel);
        benchmark::DoNotOptimize(m);
    }
}
BENCHMARK(bm_consistent_measure_T3);

void bm_build_instance_csi(benchmark::State& state) {
    auto spec = load_markov("csi_switch.json");
    BuildOptions opts;
    opts.action_resolution = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto inst = build_instance(spec, opts);
        benchmark::DoNotOptimize(inst);
    }
}
BENCHMARK(bm_build_instance_csi)->Arg(16)->Arg(64);

void bm_solve_acoe_csi(benchmark::State& state) {
    auto spec = load_markov("csi_switch.json");
    BuildOptions opts;
    opts.action_resolution = static_cast<int>(state.range(0));
    auto inst = build_instance(spec, opts);
    for (auto _ : state) {
        auto sol = solve_acoe(inst);
        benchmark::DoNotOptimize(sol);
    }
}
BENCHMARK(bm_solve_acoe_csi)->Arg(16)->Arg(64);

void bm_ml_decode_M64_T8(benchmark::State& state) {
    auto spec = load_markov("bsc01.json");
    auto code = sample_code(full_feedback_input(2, 2, 8, 3), 64, 8, 99);
    std::vector<std::size_t> path = {0, 1, 1, 0, 1, 0, 0, 1};
    for (auto _ : state) {
        auto d = ml_decode(spec, code, path);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(bm_ml_decode_M64_T8);

void bm_density_chain_T2000(benchmark::State& state) {
    auto spec = load_markov("bsc01.json");
    PolicyRule rule;
    rule.tag = CaseTag::StateFromOutput;
    rule.ns = 1;
    rule.na = 2;
    rule.nb = 2;
    rule.state_gamma = {{1.0}};
    rule.action_per_state = {
        ControlAction{{0}, {1.0}, {SimplexVector::dirac(1, 0)}, {SimplexVector::uniform(2)}}};
    for (auto _ : state) {
        auto rep = density_chains(spec, rule, 1, 2000, 5);
        benchmark::DoNotOptimize(rep);
    }
}
BENCHMARK(bm_density_chain_T2000);

} // namespace

BENCHMARK_MAIN();
