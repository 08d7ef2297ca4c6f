#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "mflq/cli.hpp"

using namespace mflq;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig config(Command c, const std::string& out)
{
    RunConfig cfg;
    cfg.command = c;
    cfg.input = fixtures::data_path("scalar_example.json");
    cfg.out = out;
    fs::remove_all(out);
    return cfg;
}

} // namespace

TEST_CASE("solve writes the summary and trajectories")
{
    std::ostringstream log;
    const RunConfig cfg = config(Command::solve, "cli_solve");
    REQUIRE(run(cfg, log) == exit_ok);
    const auto j = nlohmann::json::parse(slurp("cli_solve/summary.json"));
    for (const char* key : {"V1", "V2", "P1_t0", "P2_t0"})
        CHECK(j.contains(key));
    const std::string gains = slurp("cli_solve/gains.csv");
    CHECK(gains.rfind("t,Theta1[0][0],Theta1hat[0][0],Theta[0][0],Theta[0][1]", 0) == 0);
    // Header plus one row per node.
    CHECK(std::count(gains.begin(), gains.end(), '\n') == 202);
    CHECK(fs::exists("cli_solve/riccati.csv"));
    CHECK(fs::exists("cli_solve/eta.csv"));
}

TEST_CASE("missing input is an I/O error")
{
    std::ostringstream log;
    RunConfig cfg = config(Command::solve, "cli_missing");
    cfg.input = "/nonexistent/problem.json";
    CHECK(run(cfg, log) == exit_io);
    CHECK(log.str().find("cannot open") != std::string::npos);
}

TEST_CASE("unknown check name is rejected")
{
    std::ostringstream log;
    RunConfig cfg = config(Command::verify, "cli_badcheck");
    cfg.checks = {"no_such_check"};
    CHECK(run(cfg, log) == exit_io);
}

TEST_CASE("solver failure maps to its exit code")
{
    nlohmann::json j = nlohmann::json::parse(slurp(fixtures::data_path("scalar_example.json")));
    j["weights"]["player1"]["R11"] = -3.0;
    {
        std::ofstream out("cli_indefinite.json");
        out << j.dump();
    }
    std::ostringstream log;
    RunConfig cfg = config(Command::solve, "cli_indefinite");
    cfg.input = "cli_indefinite.json";
    CHECK(run(cfg, log) == exit_solver);
    CHECK(log.str().find("at s=") != std::string::npos);
}

TEST_CASE("verify with a corrupted gain fails")
{
    std::ostringstream log;
    RunConfig cfg = config(Command::verify, "cli_corrupt");
    cfg.n_paths = 500;
    cfg.perturb_gain = 0.1;
    cfg.checks = {"stationarity_follower", "stationarity_leader"};
    CHECK(run(cfg, log) == exit_verification);
    const auto j = nlohmann::json::parse(slurp("cli_corrupt/summary.json"));
    CHECK(j["verification"]["pass"] == false);
}

TEST_CASE("identical runs write identical files")
{
    std::ostringstream log;
    RunConfig a = config(Command::simulate, "cli_det_a");
    RunConfig b = config(Command::simulate, "cli_det_b");
    a.n_paths = b.n_paths = 2000;
    REQUIRE(run(a, log) == exit_ok);
    REQUIRE(run(b, log) == exit_ok);
    for (const char* f : {"summary.json", "gains.csv", "riccati.csv", "eta.csv"})
        CHECK(slurp(fs::path("cli_det_a") / f) == slurp(fs::path("cli_det_b") / f));
}

TEST_CASE("report renders a table and the summary grows additively")
{
    std::ostringstream log;
    RunConfig cfg = config(Command::report, "cli_report");
    cfg.n_paths = 500;
    cfg.checks = {"stationarity_follower", "stationarity_leader", "value_match"};
    REQUIRE(run(cfg, log) == exit_ok);
    const auto j = nlohmann::json::parse(slurp("cli_report/summary.json"));
    for (const char* key : {"V1", "V2", "P1_t0", "P2_t0", "monte_carlo", "verification"})
        CHECK(j.contains(key));
    const std::string text = slurp("cli_report/report.txt");
    CHECK(text.find("stationarity_leader") != std::string::npos);
    CHECK(text.find("overall: PASS") != std::string::npos);
}

TEST_CASE("refinement solves on a finer grid")
{
    std::ostringstream log;
    RunConfig cfg = config(Command::solve, "cli_refine");
    cfg.refine = 2;
    REQUIRE(run(cfg, log) == exit_ok);
    const auto j = nlohmann::json::parse(slurp("cli_refine/summary.json"));
    CHECK(j["n_steps"] == 400);
}
