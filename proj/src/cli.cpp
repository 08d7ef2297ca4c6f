#include "mflq/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mflq/follower.hpp"
#include "mflq/leader.hpp"
#include "mflq/simulate.hpp"
#include "mflq/verify.hpp"

namespace mflq {

namespace {

using nlohmann::ordered_json;

class OutputError : public std::runtime_error {
public:
    explicit OutputError(const std::string& what) : std::runtime_error(what) {}
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Column-oriented CSV table, one row per grid node.
class Table {
public:
    explicit Table(const TimeGrid& g) : grid_(g) { add_column("t", [&](int k) { return g.time(k); }); }

    template <class F>
    void add_column(const std::string& name, F f)
    {
        names_.push_back(name);
        std::vector<double> col(grid_.nodes());
        for (int k = 0; k < grid_.nodes(); ++k)
            col[k] = f(k);
        cols_.push_back(std::move(col));
    }

    // Every entry of a path, flattened row-major as name[i][j].
    void add_path(const std::string& name, const MatPath& p)
    {
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j)
                add_column(name + "[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                           [&](int k) { return p[k](i, j); });
    }

    // Vector paths as name[i].
    void add_vector(const std::string& name, const MatPath& p)
    {
        for (int i = 0; i < p.rows(); ++i)
            add_column(name + "[" + std::to_string(i) + "]", [&](int k) { return p[k](i, 0); });
    }

    void add_diagonal(const std::string& name, const MatPath& p)
    {
        for (int i = 0; i < p.rows(); ++i)
            add_column(name + "[" + std::to_string(i) + "][" + std::to_string(i) + "]",
                       [&](int k) { return p[k](i, i); });
    }

    std::string str() const
    {
        std::string s;
        for (std::size_t c = 0; c < names_.size(); ++c)
            s += (c ? "," : "") + names_[c];
        s += "\n";
        for (int k = 0; k < grid_.nodes(); ++k) {
            for (std::size_t c = 0; c < cols_.size(); ++c)
                s += (c ? "," : "") + num(cols_[c][k]);
            s += "\n";
        }
        return s;
    }

private:
    TimeGrid grid_;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> cols_;
};

ordered_json to_json(const Mat& m)
{
    ordered_json a = ordered_json::array();
    for (int i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (int j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw OutputError("cannot write '" + p.string() + "'");
    out << text;
    if (!out)
        throw OutputError("write failed for '" + p.string() + "'");
}

const char* command_name(Command c)
{
    switch (c) {
    case Command::solve:
        return "solve";
    case Command::simulate:
        return "simulate";
    case Command::verify:
        return "verify";
    case Command::report:
        return "report";
    }
    return "?";
}

std::string report_text(const ordered_json& summary, const VerificationReport* rep, bool with_timing)
{
    std::ostringstream os;
    char line[256];
    os << "problem: " << summary["input"].get<std::string>() << "  (n=" << summary["n"] << ", m1=" << summary["m1"]
       << ", m2=" << summary["m2"] << ", steps=" << summary["n_steps"] << ")\n";
    std::snprintf(line, sizeof line, "V1 = %.10g\nV2 = %.10g\n", summary["V1"].get<double>(),
                  summary["V2"].get<double>());
    os << line;
    if (summary.contains("monte_carlo")) {
        const auto& mc = summary["monte_carlo"];
        std::snprintf(line, sizeof line, "MC J1 = %.10g +- %.3g\nMC J2 = %.10g +- %.3g  (%d paths, seed %llu)\n",
                      mc["J1_mean"].get<double>(), mc["J1_se"].get<double>(), mc["J2_mean"].get<double>(),
                      mc["J2_se"].get<double>(), mc["n_paths"].get<int>(),
                      static_cast<unsigned long long>(mc["seed"].get<std::uint64_t>()));
        os << line;
    }
    if (rep) {
        std::snprintf(line, sizeof line, "\n%-22s %-6s %14s %14s%s\n", "check", "status", "value", "tolerance",
                      with_timing ? "   seconds" : "");
        os << line;
        for (const auto& c : rep->checks) {
            const char* status = c.informational ? "info" : (c.pass ? "PASS" : "FAIL");
            std::snprintf(line, sizeof line, "%-22s %-6s %14.6g %14.6g", c.name.c_str(), status, c.value,
                          c.tolerance);
            os << line;
            if (with_timing) {
                std::snprintf(line, sizeof line, " %9.2f", c.seconds);
                os << line;
            }
            os << "\n    " << c.detail << "\n";
        }
        os << "\noverall: " << (rep->pass() ? "PASS" : "FAIL") << "\n";
    }
    return os.str();
}

} // namespace

int run(const RunConfig& cfg, std::ostream& log)
{
    namespace fs = std::filesystem;
    ValidatedProblem prob;
    try {
        if (cfg.n_paths < 1)
            throw ParseError("--paths must be at least 1");
        ProblemSpec spec = load_spec(cfg.input);
        if (cfg.refine != 1)
            spec = refine_spec(spec, cfg.refine);
        prob = validate(spec);
        for (const auto& c : cfg.checks)
            if (std::find(check_names().begin(), check_names().end(), c) == check_names().end())
                throw ParseError("unknown check '" + c + "'");
        fs::create_directories(cfg.out);
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_io;
    }

    const fs::path out(cfg.out);
    try {
        const ProblemSpec& sp = prob.spec();
        const TimeGrid& g = sp.grid;
        const FollowerSolution fsol = solve_follower_riccati(prob, cfg.tol);
        const AugmentedCoefficients aug = build_augmented(prob, fsol);
        const LeaderSolution lsol = solve_leader(aug, cfg.tol);
        const double V1 = follower_value_equilibrium(aug, lsol);
        const MatPath EX = propagate_mean(aug, lsol);

        Table gains(g);
        gains.add_path("Theta1", fsol.Theta1);
        gains.add_path("Theta1hat", fsol.Theta1hat);
        gains.add_path("Theta", lsol.ThetaBold);
        gains.add_path("ThetaHat", lsol.ThetaHatBold);
        gains.add_vector("v2", lsol.V2check);

        Table ric(g);
        ric.add_diagonal("P1", fsol.P1);
        ric.add_diagonal("Pi1", fsol.Pi1);
        ric.add_diagonal("P2", lsol.P2);
        ric.add_diagonal("Pi2", lsol.Pi2);

        // Mean offset of the follower's adjoint at the equilibrium: 𝕄₂(Π₂EX̄ + η₂).
        const Mat M2 = select2(sp.n);
        MatPath eta1(g, sp.n, 1);
        for (int k = 0; k < g.nodes(); ++k)
            eta1[k] = M2 * (lsol.Pi2[k] * EX[k] + lsol.eta2[k]);
        Table eta(g);
        eta.add_vector("eta1", eta1);
        eta.add_vector("eta2", lsol.eta2);

        ordered_json summary;
        summary["command"] = command_name(cfg.command);
        summary["input"] = cfg.input;
        summary["n"] = sp.n;
        summary["m1"] = sp.m1;
        summary["m2"] = sp.m2;
        summary["t0"] = g.t0;
        summary["T"] = g.T;
        summary["n_steps"] = g.n_steps;
        summary["refine"] = cfg.refine;
        summary["tolerances"] = {{"eps_pd", cfg.tol.eps_pd},
                                 {"kappa_max", cfg.tol.kappa_max},
                                 {"tol_residual", cfg.tol.tol_residual}};
        summary["V1"] = V1;
        summary["V2"] = lsol.V2;
        summary["P1_t0"] = to_json(fsol.P1[0]);
        summary["Pi1_t0"] = to_json(fsol.Pi1[0]);
        summary["P2_t0"] = to_json(lsol.P2[0]);
        summary["Pi2_t0"] = to_json(lsol.Pi2[0]);

        write_file(out / "gains.csv", gains.str());
        write_file(out / "riccati.csv", ric.str());
        write_file(out / "eta.csv", eta.str());

        int code = exit_ok;
        VerificationReport rep;
        bool have_report = false;
        if (cfg.command != Command::solve) {
            SimOptions so;
            so.follower_gain_shift = cfg.perturb_gain;
            so.leader_gain_shift = cfg.perturb_gain;
            so.store_paths = cfg.command != Command::simulate;
            const SimBatch batch = simulate_paths(prob, aug, fsol, lsol, cfg.n_paths, cfg.seed, so);
            summary["monte_carlo"] = {{"n_paths", cfg.n_paths},         {"seed", cfg.seed},
                                      {"perturb_gain", cfg.perturb_gain}, {"J1_mean", batch.costs.J1_mean},
                                      {"J1_se", batch.costs.J1_se},       {"J2_mean", batch.costs.J2_mean},
                                      {"J2_se", batch.costs.J2_se}};
            if (cfg.command != Command::simulate) {
                VerifyOptions vo;
                vo.n_paths = cfg.n_paths;
                vo.seed = cfg.seed;
                vo.tol = cfg.tol;
                vo.checks = cfg.checks;
                vo.sim = so;
                vo.sim.store_paths = false;
                rep = verify_all(prob, aug, fsol, lsol, batch, vo);
                have_report = true;
                ordered_json checks = ordered_json::array();
                for (const auto& c : rep.checks)
                    checks.push_back({{"name", c.name},
                                      {"value", c.value},
                                      {"tolerance", c.tolerance},
                                      {"pass", c.pass},
                                      {"informational", c.informational},
                                      {"detail", c.detail}});
                summary["verification"] = {{"pass", rep.pass()}, {"checks", checks}};
                if (!rep.pass())
                    code = exit_verification;
            }
        }
        write_file(out / "summary.json", summary.dump(2) + "\n");
        if (cfg.command == Command::report) {
            write_file(out / "report.txt", report_text(summary, have_report ? &rep : nullptr, false));
            log << report_text(summary, have_report ? &rep : nullptr, true);
        }
        if (code == exit_verification)
            log << "verification failed\n";
        return code;
    } catch (const OutputError& e) {
        log << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::exception& e) {
        log << "solver error: " << e.what() << "\n";
        return exit_solver;
    }
}

int cli_main(int argc, char** argv)
{
    CLI::App app{"Closed-loop Stackelberg equilibria of mean-field LQ leader-follower games"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string checks;

    const std::vector<std::pair<Command, std::string>> commands{
        {Command::solve, "Solve the Riccati systems and write gains, diagonals, offsets and values"},
        {Command::simulate, "Solve, then estimate both costs by Monte Carlo"},
        {Command::verify, "Solve, simulate and run the verification checks"},
        {Command::report, "Everything, plus a human-readable table"}};
    for (const auto& [cmd, help] : commands) {
        CLI::App* sub = app.add_subcommand(command_name(cmd), help);
        sub->add_option("--input", cfg.input, "Problem file (JSON)")->required();
        sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
        sub->add_option("--paths", cfg.n_paths, "Monte Carlo paths")->capture_default_str();
        sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
        sub->add_option("--refine", cfg.refine, "Solve on a grid with K times as many steps")->capture_default_str();
        sub->add_option("--checks", checks, "Comma-separated subset of verification checks");
        sub->add_option("--eps-pd", cfg.tol.eps_pd, "Smallest admissible eigenvalue of the Hessian blocks")
            ->capture_default_str();
        sub->add_option("--kappa-max", cfg.tol.kappa_max, "Largest admissible condition number of I - P2 K")
            ->capture_default_str();
        sub->add_option("--tol-residual", cfg.tol.tol_residual, "Relative tolerance of stationarity residuals")
            ->capture_default_str();
        sub->add_option("--perturb-gain", cfg.perturb_gain,
                        "Add a constant to both fluctuation gains before simulating (corruption probe)")
            ->capture_default_str();
        sub->callback([&cfg, cmd] { cfg.command = cmd; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_io;
    }
    std::stringstream ss(checks);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty())
            cfg.checks.push_back(item);
    return run(cfg, std::cerr);
}

} // namespace mflq
