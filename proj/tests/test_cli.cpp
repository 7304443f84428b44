#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "feedcap/channel.hpp"
#include "feedcap/codefunctions.hpp"
#include "feedcap/mdp.hpp"
#include "oracles.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FEEDCAP_CLI_PATH;
const std::string kData = FEEDCAP_TESTDATA_DIR;

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path scratch_dir() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() /
                 ("feedcap_cli_" + std::to_string(static_cast<long>(::getpid())));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// runs the tool through the shell, captures both streams and the exit code
RunResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const auto out_path = scratch_dir() / ("out" + std::to_string(counter) + ".txt");
    const auto err_path = scratch_dir() / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    std::string cmd = env.empty() ? "" : env + " ";
    cmd += kCli + " " + args + " >" + out_path.string() + " 2>" + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

json parse_error(const RunResult& r) {
    REQUIRE_FALSE(r.err.empty());
    auto j = json::parse(r.err);
    REQUIRE(j.contains("error"));
    REQUIRE(j["error"].contains("type"));
    REQUIRE(j["error"].contains("message"));
    return j["error"];
}

} // namespace

TEST_CASE("validate reports the spec shape and a content hash") {
    auto r = run_cli("validate " + kData + "/bsc01.json");
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    CHECK(rep["valid"] == true);
    CHECK(rep["kind"] == "markov");
    CHECK(rep["alphabets"]["S"] == 1);
    CHECK(rep["alphabets"]["A"] == 2);
    CHECK(rep["flags"].size() == 3);
    const auto& man = rep["manifest"];
    CHECK(man["subcommand"] == "validate");
    CHECK(man.contains("version"));
    CHECK(man["wall_time_ms"].get<double>() >= 0.0);

    const std::string hash = man["spec_hash"].get<std::string>();
    REQUIRE(hash.size() == 16);
    char expect[17];
    std::snprintf(expect, sizeof expect, "%016llx",
                  static_cast<unsigned long long>(
                      feedcap::fnv1a64(slurp(kData + "/bsc01.json"))));
    CHECK(hash == expect);
}

TEST_CASE("validate covers general tables and rejects bad rows") {
    oracles::Rng rng(81);
    auto gen = oracles::random_general(rng, 2, 2, 2);
    const auto path = scratch_dir() / "gen.json";
    std::ofstream(path) << feedcap::save_spec(feedcap::ChannelSpec(gen));
    auto r = run_cli("validate " + path.string());
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    CHECK(rep["kind"] == "general");
    CHECK(rep["horizon"] == 2);

    auto bad = run_cli("validate " + kData + "/bad_rowsum.json");
    CHECK(bad.code == 1);
    CHECK(bad.out.empty());
    auto err = parse_error(bad);
    CHECK(err["type"] == "validation_error");

    auto missing = run_cli("validate " + kData + "/no_such_file.json");
    CHECK(missing.code == 1);
}

TEST_CASE("filter defaults to a csv trace") {
    auto r = run_cli("filter " + kData + "/bsc01.json --history 0,1,1,0");
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string header, row1, row2, extra;
    REQUIRE(std::getline(lines, header));
    REQUIRE(std::getline(lines, row1));
    REQUIRE(std::getline(lines, row2));
    CHECK_FALSE(std::getline(lines, extra));
    CHECK(header == "t,a,b,pred_0,pred_1,belief_0");
    CHECK(row1 == "1,0,1,0.9,0.1,1");
    CHECK(row2.substr(0, 6) == "2,1,0,");

    auto j = run_cli("--format json filter " + kData + "/bsc01.json --history 0,1,1,0");
    REQUIRE(j.code == 0);
    auto rep = json::parse(j.out);
    CHECK(rep["initial_belief"][0] == 1.0);
    REQUIRE(rep["steps"].size() == 2);
    CHECK(rep["steps"][0]["predictive"][1].get<double>() == doctest::Approx(0.1));

    auto bad = run_cli("filter " + kData + "/bsc01.json --history 0,1,1");
    CHECK(bad.code == 1);
    auto oob = run_cli("filter " + kData + "/bsc01.json --history 0,7");
    CHECK(oob.code == 1);
}

TEST_CASE("dinfo prints the frozen memoryless values") {
    const std::string args =
        "dinfo " + kData + "/bsc01.json --input " + kData + "/uniform_iid_T2.json";
    auto r = run_cli(args);
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    // 2 (1 - H2(0.1)); reported at 12 significant digits
    CHECK(std::abs(rep["directed_bits"].get<double>() - oracles::kBscCap01_T2) <= 1e-11);
    CHECK(rep["reverse_bits"].get<double>() == 0.0);
    CHECK(rep["massey_residual_bits"].get<double>() <= 1e-10);
    CHECK(std::abs(rep["mutual_bits"].get<double>() - rep["directed_bits"].get<double>()) <=
          1e-10);
    CHECK(rep["per_step_bits"].size() == 2);
    CHECK(rep.contains("belief_decomposition_bits"));
    CHECK(std::abs(rep["belief_decomposition_bits"].get<double>() -
                   rep["directed_bits"].get<double>()) <= 1e-10);

    auto csv = run_cli("--format csv " + args);
    REQUIRE(csv.code == 0);
    CHECK(csv.out.substr(0, 30) == "t,directed_bits,reverse_bits\n1");

    // identical runs are byte-stable apart from the elapsed-time field
    auto again = run_cli(args);
    auto a = json::parse(r.out), b = json::parse(again.out);
    a["manifest"].erase("wall_time_ms");
    b["manifest"].erase("wall_time_ms");
    CHECK(a.dump() == b.dump());
}

TEST_CASE("finite-horizon capacity emits a reloadable certificate") {
    const auto cert = scratch_dir() / "bsc01.cert.json";
    auto r = run_cli("capacity " + kData + "/bsc01.json --mode finite -T 1 --starts 4 --cert " +
                     cert.string());
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    CHECK(rep["mode"] == "finite");
    CHECK(std::abs(rep["value_bits"].get<double>() - oracles::kBscCap01) <= 1e-4);
    CHECK(rep["converged"] == true);
    CHECK(rep["certificate_path"] == cert.string());
    CHECK(rep["manifest"]["parameters"]["feedback"] == "full");

    REQUIRE(fs::exists(cert));
    auto best = feedcap::load_input(cert.string());
    CHECK(best.horizon == 1);
    CHECK(std::abs(best.p(1, 0, 0, 0) - 0.5) <= 1e-3); // symmetric optimum
}

TEST_CASE("average-cost capacity exports a working policy") {
    const auto pol = scratch_dir() / "bsc01.policy.json";
    auto r = run_cli("capacity " + kData + "/bsc01.json --mode acoe --action-grid 64 "
                     "--policy-out " +
                     pol.string());
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    CHECK(std::abs(rep["V_star_bits"].get<double>() - oracles::kBscCap01) <= 1e-3);
    CHECK(rep["case"] == "state_out");
    CHECK(rep["alpha_mixing"].get<double>() == 0.0);
    CHECK(rep["contraction"] == true);
    CHECK(rep["converged"] == true);
    CHECK(rep["stationary"]["lambda"].size() == 1);
    CHECK(rep["stationary"]["lambda"][0].get<double>() == doctest::Approx(1.0));
    CHECK(rep["grid"]["k"] == 64);

    REQUIRE(fs::exists(pol));
    auto rule = feedcap::load_policy(pol.string());
    CHECK(rule.ns == 1);

    // the exported policy drives a simulation end to end
    auto sim = run_cli("simulate " + kData + "/bsc01.json --policy " + pol.string() +
                       " -M 2 -T 4 --trials 200 --seed 3");
    REQUIRE(sim.code == 0);
    auto srep = json::parse(sim.out);
    CHECK(srep["trials"] == 200);
    CHECK(srep["M"] == 2);
    CHECK(srep["T"] == 4);
    CHECK(srep["error_rate"].get<double>() >= 0.0);
    CHECK(srep["error_rate"].get<double>() <= 1.0);
    CHECK(srep["wilson95"]["hi"].get<double>() <= 1.0);
    CHECK((srep["sampling"] == "lazy" || srep["sampling"] == "materialized"));
}

TEST_CASE("solver case and mixing diagnostics for the switching channel") {
    const auto pol = scratch_dir() / "csi.policy.json";
    auto r = run_cli("capacity " + kData + "/csi_switch.json --policy-out " + pol.string());
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    CHECK(rep["case"] == "csi");
    CHECK(std::abs(rep["V_star_bits"].get<double>() - oracles::kCsiValue) <= 2e-3);
    CHECK(std::abs(rep["alpha_mixing"].get<double>() - 0.8) <= 1e-9);
    CHECK(std::abs(rep["stationary"]["lambda"][0].get<double>() - 0.5) <= 1e-6);

    auto m = run_cli("mixing " + kData + "/csi_switch.json");
    REQUIRE(m.code == 0);
    auto mix = json::parse(m.out);
    CHECK(mix["case"] == "csi");
    CHECK(std::abs(mix["alpha"].get<double>() - 0.8) <= 1e-9);
    CHECK(mix["contraction"] == true);
    CHECK(mix["rows_compared"].get<int>() > 0);

    // iteration starvation: report still printed, exit code signals it
    auto nc = run_cli("capacity " + kData + "/csi_switch.json --max-iters 1 --policy-out " +
                      (scratch_dir() / "nc.policy.json").string());
    CHECK(nc.code == 2);
    auto ncrep = json::parse(nc.out);
    CHECK(ncrep["converged"] == false);
    CHECK(parse_error(nc)["type"] == "not_converged");
}

TEST_CASE("verify passes the identity suite on a clean pair") {
    auto r = run_cli("verify " + kData + "/bsc01.json --input " + kData +
                     "/uniform_iid_T2.json");
    REQUIRE(r.code == 0);
    auto rep = json::parse(r.out);
    CHECK(rep["ok"] == true);
    REQUIRE(rep["checks"].size() == 6);
    for (const auto& c : rep["checks"]) {
        CHECK(c["ok"] == true);
        CHECK(c["deviation"].get<double>() <= c["tolerance"].get<double>());
    }
}

TEST_CASE("simulate validates its source options") {
    const auto pol = scratch_dir() / "bsc01.policy.json"; // written by the acoe case
    auto iid = kData + "/uniform_iid_T2.json";
    auto both = run_cli("simulate " + kData + "/bsc01.json --policy " + pol.string() +
                        " --input " + iid + " -T 2 --trials 10");
    CHECK(both.code == 1);
    CHECK(parse_error(both)["type"] == "validation_error");

    auto neither = run_cli("simulate " + kData + "/bsc01.json -T 2 --trials 10");
    CHECK(neither.code == 1);

    auto dens = run_cli("simulate " + kData + "/bsc01.json --input " + iid +
                        " -T 2 --trials 10 --density");
    CHECK(dens.code == 1);

    auto ok = run_cli("simulate " + kData + "/bsc01.json --input " + iid +
                      " -M 2 -T 2 --trials 50 --seed 5");
    REQUIRE(ok.code == 0);
    auto rep = json::parse(ok.out);
    CHECK(rep["trials"] == 50);
}

TEST_CASE("cell caps stop enumeration with a distinct exit code") {
    auto r = run_cli("verify " + kData + "/bsc01.json --input " + kData +
                         "/uniform_iid_T2.json",
                     "FEEDCAP_CAP_CELLS=100");
    CHECK(r.code == 3);
    CHECK(parse_error(r)["type"] == "cap_exceeded");

    // the override is only consulted where a table is enumerated
    auto garbage = run_cli("validate " + kData + "/bsc01.json", "FEEDCAP_CAP_CELLS=abc");
    CHECK(garbage.code == 0);
    auto d = run_cli("dinfo " + kData + "/bsc01.json --input " + kData +
                         "/uniform_iid_T2.json",
                     "FEEDCAP_CAP_CELLS=abc");
    CHECK(d.code == 1);
    CHECK(parse_error(d)["type"] == "validation_error");
}

TEST_CASE("subcommands that need a state spec reject history tables") {
    oracles::Rng rng(82);
    auto gen = oracles::random_general(rng, 2, 2, 2);
    const auto path = scratch_dir() / "gen_reject.json";
    std::ofstream(path) << feedcap::save_spec(feedcap::ChannelSpec(gen));
    auto r = run_cli("filter " + path.string() + " --history 0,1");
    CHECK(r.code == 1);
    CHECK(parse_error(r)["type"] == "case_mismatch");
    auto c = run_cli("capacity " + path.string() + " --mode acoe --policy-out " +
                     (scratch_dir() / "g.policy.json").string());
    CHECK(c.code == 1);
}
