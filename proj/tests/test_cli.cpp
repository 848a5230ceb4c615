#include "varisk/cli.hpp"
#include "varisk/dataset.hpp"
#include "varisk/inventory.hpp"
#include "varisk/risk.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

using namespace varisk;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch() {
    auto dir = fs::temp_directory_path() / "varisk_cli_test";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("solve matches a library-level recomputation") {
    const auto dir = scratch();
    const auto p = sample_params(21, 1, 0.95);
    {
        std::ofstream(dir / "ex.json") << params_to_json(p).dump();
    }
    const auto r = run_cli({"solve", "--instance", (dir / "ex.json").string(), "--alpha", "0.95", "--q", "0"});
    REQUIRE(r.code == cli::kOk);
    const auto j = nlohmann::json::parse(r.out);

    RiskSpec spec;
    spec.objective = Measure::var_threshold(0.95);
    spec.constraints = {Constraint::ratio_gt(0.0)};
    const auto want = optimize(build_inventory_mdp(p), spec);
    REQUIRE(want.feasible());
    CHECK(j.at("optimum").at("index").get<std::uint64_t>() == want.optimum->index);
    CHECK(j.at("optimum").at("objective").get<double>() == want.optimum->objective);
    CHECK(j.at("feasible_count").get<std::uint64_t>() == want.feasible_count);
}

TEST_CASE("solve reports infeasibility with its own exit code") {
    const auto dir = scratch();
    {
        std::ofstream(dir / "ex.json") << params_to_json(sample_params(21, 1, 0.95)).dump();
    }
    const auto r = run_cli({"solve", "--instance", (dir / "ex.json").string(), "--q", "1e12"});
    CHECK(r.code == cli::kInfeasible);
}

TEST_CASE("gen-data is reproducible") {
    const auto dir = scratch();
    const auto a = dir / "a.csv", b = dir / "b.csv";
    REQUIRE(run_cli({"gen-data", "--n", "10", "--M", "2", "--seed", "1", "--out", a.string()}).code == 0);
    REQUIRE(run_cli({"gen-data", "--n", "10", "--M", "2", "--seed", "1", "--out", b.string(),
                     "--threads", "4"})
                .code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(!slurp(a).empty());
}

TEST_CASE("a dataset row re-solved by solve reproduces its labels") {
    GenConfig cfg;
    cfg.n = 3;
    cfg.M = 2;
    cfg.seed = 4;
    const auto data = generate_dataset(cfg);
    const auto dir = scratch();
    for (const auto& row : data.rows) {
        {
            std::ofstream(dir / "row.json") << params_to_json(row.params).dump();
        }
        const auto r = run_cli({"solve", "--instance", (dir / "row.json").string()});
        REQUIRE(r.code == 0);
        const auto j = nlohmann::json::parse(r.out);
        CHECK(j.at("optimum").at("index").get<std::uint64_t>() == row.policy.canonical_index());
        CHECK(j.at("optimum").at("objective").get<double>() == row.rho);
    }
}

TEST_CASE("usage and data errors") {
    auto r = run_cli({"solve"});
    CHECK(r.code == cli::kUsage);
    CHECK(r.out.empty());
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(r.err.find("\"error\":\"usage\"") != std::string::npos);

    CHECK(run_cli({}).code == cli::kUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kUsage);
    CHECK(run_cli({"--help"}).code == cli::kOk);

    r = run_cli({"solve", "--instance", "/nonexistent/file.json"});
    CHECK(r.code == cli::kDataError);
    const auto e = nlohmann::json::parse(r.err);
    CHECK(e.at("error") == "data");

    const auto dir = scratch();
    {
        std::ofstream(dir / "broken.json") << "{\"states\": [\"a\"], \"actions\": [[\"x\"]], "
                                              "\"transitions\": [[0,0,0,0.5]], \"rewards\": "
                                              "[[0,0,0,1.0,1.0]], \"initial\": [1.0], \"gamma\": 0.9}";
    }
    CHECK(run_cli({"solve", "--instance", (dir / "broken.json").string()}).code == cli::kDataError);
}

TEST_CASE("generic MDP JSON with an embedded risk block") {
    const auto dir = scratch();
    {
        std::ofstream(dir / "mdp.json")
            << R"({"states": ["a", "b"], "actions": [["stay", "move"], ["stay"]],
                  "transitions": [[0,0,0,1.0],[0,1,1,1.0],[1,0,1,1.0]],
                  "rewards": [[0,0,0,1.0,1.0],[0,1,1,0.0,0.5],[0,1,1,4.0,0.5],[1,0,1,2.0,0.5],[1,0,1,0.0,0.5]],
                  "initial": [1.0, 0.0], "gamma": 0.9,
                  "risk": {"objective": {"kind": "mean"}, "constraints": [], "sense": "maximize"}})";
    }
    const auto r = run_cli({"solve", "--instance", (dir / "mdp.json").string(), "--records"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    // staying earns 10; moving earns 2 + 0.9 * 10 = 11
    CHECK(j.at("optimum").at("index") == 1);
    CHECK(j.at("optimum").at("objective").get<double>() == doctest::Approx(11.0).epsilon(1e-12));
    CHECK(j.at("records").size() == 2);
}

TEST_CASE("var-function, simulate, train and predict") {
    const auto dir = scratch();
    {
        std::ofstream(dir / "ex.json") << params_to_json(sample_params(3, 1, 0.95)).dump();
    }
    auto r = run_cli({"var-function", "--instance", (dir / "ex.json").string(), "--points", "11"});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "tau,p");
    double last = -1.0;
    int n = 0;
    while (std::getline(lines, line)) {
        const double p = std::stod(line.substr(line.find(',') + 1));
        CHECK(p >= last);
        last = p;
        ++n;
    }
    CHECK(n == 11);

    r = run_cli({"simulate", "--instance", (dir / "ex.json").string(), "--policy-index", "1",
                 "--episodes", "2000", "--seed", "5", "--cdf-points", "5"});
    REQUIRE(r.code == 0);
    const auto sj = nlohmann::json::parse(r.out);
    CHECK(sj.at("simulation").at("episodes") == 2000);
    CHECK(sj.at("empirical_cdf").size() == 5);
    CHECK(run_cli({"simulate", "--instance", (dir / "ex.json").string(), "--policy-index", "99",
                   "--seed", "1"})
              .code == cli::kDataError);

    const auto data = dir / "d.csv", model = dir / "m.json", model2 = dir / "m2.json";
    REQUIRE(run_cli({"gen-data", "--n", "60", "--M", "1", "--seed", "2", "--out", data.string()}).code == 0);
    REQUIRE(run_cli({"train", "--data", data.string(), "--out", model.string(), "--seed", "3",
                     "--epochs", "4", "--history", (dir / "h.csv").string()})
                .code == 0);
    REQUIRE(run_cli({"train", "--data", data.string(), "--out", model2.string(), "--seed", "3",
                     "--epochs", "4", "--threads", "8"})
                .code == 0);
    CHECK(slurp(model) == slurp(model2));

    r = run_cli({"predict", "--model", model.string(), "--data", data.string()});
    REQUIRE(r.code == 0);
    const auto pj = nlohmann::json::parse(r.out);
    CHECK(pj.at("predictions").size() == 60);
    CHECK(pj.at("hit_rate").get<double>() >= 0.0);

    r = run_cli({"predict", "--model", model.string(), "--features", "1,2,3"});
    CHECK(r.code == cli::kDataError);
    CHECK(run_cli({"predict", "--model", model.string()}).code == cli::kUsage);
}
