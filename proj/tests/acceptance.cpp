// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "mflq/cli.hpp"
#include "mflq/verify.hpp"
#include "oracles.hpp"

using namespace mflq;
using fixtures::set;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Solved {
    ValidatedProblem prob;
    FollowerSolution fsol;
    AugmentedCoefficients aug;
    LeaderSolution lsol;
};

Solved solve_all(const ProblemSpec& s)
{
    Solved r{validate(s), {}, {}, {}};
    r.fsol = solve_follower_riccati(r.prob);
    r.aug = build_augmented(r.prob, r.fsol);
    r.lsol = solve_leader(r.aug);
    return r;
}

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome riccati_convergence()
{
    const ProblemSpec base = fixtures::scalar_example();
    std::vector<std::vector<double>> v;  // per resolution: all entries of P1, Pi1, P2, Pi2 at t0
    const auto t0 = std::chrono::steady_clock::now();
    for (int factor : {1, 2, 4}) {
        const ValidatedProblem prob = validate(refine_spec(base, factor));
        const FollowerSolution f = solve_follower_riccati(prob);
        const LeaderRiccati l = solve_leader_riccati(build_augmented(prob, f));
        std::vector<double> e;
        for (const Mat* m : {&f.P1[0], &f.Pi1[0], &l.P2[0], &l.Pi2[0]})
            for (int i = 0; i < m->size(); ++i)
                e.push_back(m->data()[i]);
        v.push_back(e);
    }
    const double secs = seconds_since(t0);
    double lo = 1e300, hi = 0.0;
    for (std::size_t i = 0; i < v[0].size(); ++i) {
        const double r = std::abs(v[0][i] - v[1][i]) / std::abs(v[1][i] - v[2][i]);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return {lo >= 8.0 && hi <= 32.0 && secs < 2.0,
            "ratios in [" + fmt("%.2f", lo) + ", " + fmt("%.2f", hi) + "], 200/400/800 steps in " +
                fmt("%.2f", secs) + " s"};
}

Outcome exactness_fixture()
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.player1.Q, 1.0);
    const FollowerSolution f = solve_follower_riccati(validate(s));
    const double err = std::abs(f.P1[0](0, 0) - (s.grid.T - s.grid.t0));
    return {err <= 1e-12, "|P1(t0) - (T - t0)| = " + fmt("%.2e", err)};
}

Outcome reduction()
{
    ProblemSpec s = fixtures::scalar_example();
    for (MatPath* p : {&s.Ah, &s.B1h, &s.B2h, &s.Ch, &s.D1h, &s.D2h})
        set(*p, 0.0);
    for (PlayerWeights* w : {&s.player1, &s.player2}) {
        for (MatPath* p : {&w->Qh, &w->S1h, &w->S2h, &w->R11h, &w->R12h, &w->R21h, &w->R22h})
            set(*p, 0.0);
        w->Gh.setZero();
        w->gh.setZero();
    }
    const ReductionGaps g = reduction_check(validate(s));
    return {g.hats_zero && g.Pi1_P1 <= 1e-10 && g.Pi2_P2 <= 1e-9,
            "|Pi1-P1| = " + fmt("%.2e", g.Pi1_P1) + ", |Pi2-P2| = " + fmt("%.2e", g.Pi2_P2)};
}

Outcome value_match_criterion()
{
    const auto t0 = std::chrono::steady_clock::now();
    const Solved r = solve_all(fixtures::scalar_example());
    const SimBatch b = simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 10000, 42);
    const ValueMatch v = value_match(r.prob, r.aug, r.fsol, r.lsol, b);
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os.precision(6);
    os << "V1 " << v.V1 << " vs " << v.mc.J1_mean << " +- " << v.mc.J1_se << ", V2 " << v.V2 << " vs "
       << v.mc.J2_mean << " +- " << v.mc.J2_se << ", " << fmt("%.2f", secs) << " s";
    return {v.pass() && secs < 10.0, os.str()};
}

Outcome optimality()
{
    const Solved r = solve_all(fixtures::scalar_example());
    const auto t0 = std::chrono::steady_clock::now();
    SimOptions o;
    o.store_paths = false;
    const std::vector<double> eps{-0.05, -0.01, 0.01, 0.05};
    int samples = 0, below = 0;
    double worst = 1e300;
    for (Player who : {Player::leader, Player::follower}) {
        const DirectionSet dirs = random_directions(r.prob, who, 50, 42);
        const PerturbationSweep sw = perturbation_sweep(r.prob, r.aug, r.fsol, r.lsol, dirs, eps, 10000, 42, o);
        for (int j = 0; j < sw.diff_mean.rows(); ++j)
            for (int e = 0; e < sw.diff_mean.cols(); ++e) {
                ++samples;
                const double m = sw.diff_mean(j, e), se = sw.diff_se(j, e);
                if (m < -3.0 * se)
                    ++below;
                if (se > 0)
                    worst = std::min(worst, m / se);
            }
    }
    const double secs = seconds_since(t0);
    return {below == 0 && secs < 60.0,
            std::to_string(samples) + " samples, " + std::to_string(below) + " below -3 SE (smallest " +
                fmt("%.2f", worst) + " SE), " + fmt("%.1f", secs) + " s; consistent with optimality"};
}

Outcome stationarity()
{
    const Solved r = solve_all(fixtures::scalar_example());
    const double tol = Tolerances{}.tol_residual;
    const SimBatch b = simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 10000, 42);
    const Residual f = stationarity_residual_follower(r.prob, r.aug, r.lsol, b);
    const Residual l = stationarity_residual_leader(r.prob, r.aug, r.lsol, b);
    SimOptions bf, bl;
    bf.follower_gain_shift = 0.1;
    bl.leader_gain_shift = 0.1;
    const double cf =
        stationarity_residual_follower(r.prob, r.aug, r.lsol, simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 10000, 42, bf))
            .value;
    const double cl =
        stationarity_residual_leader(r.prob, r.aug, r.lsol, simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 10000, 42, bl))
            .value;
    const bool ok = f.value <= tol * (1.0 + f.scale) && l.value <= tol * (1.0 + l.scale) && cf > 1e-3 && cl > 1e-3;
    return {ok, "follower " + fmt("%.1e", f.value) + ", leader " + fmt("%.1e", l.value) + "; corrupted " +
                    fmt("%.3f", cf) + " / " + fmt("%.3f", cl)};
}

Outcome dp_oracle_criterion()
{
    const Solved r = solve_all(fixtures::scalar_example());
    std::vector<double> gaps;
    for (int steps : {200, 400, 800, 1600})
        gaps.push_back(dp_oracle(r.prob, r.fsol, r.aug, r.lsol, steps).gap_rel);
    bool ok = gaps[0] <= 0.05;
    std::string ratios;
    for (int i = 0; i < 3; ++i) {
        const double q = gaps[i] / gaps[i + 1];
        ok = ok && q >= 1.6 && q <= 3.0;
        ratios += (i ? ", " : "") + fmt("%.3f", q);
    }

    ProblemSpec s = fixtures::scalar_example();
    s.grid.T = 0.25;
    s.xi_cov.setZero();
    s.xi_mean = Vec::Constant(1, 0.8);
    const DpResult d = dp_discrete_game(validate(s), 1);
    const oracles::OneStepSolution hand = oracles::one_step_stackelberg(s, 0.25, 0.8);
    const double one = std::max(std::abs(d.u1_0(0) - hand.u1), std::abs(d.u2_0(0) - hand.u2));
    ok = ok && one <= 1e-12;
    return {ok, "relative gap " + fmt("%.4f", gaps[0]) + " at 200 steps, halving ratios " + ratios +
                    "; one-step game error " + fmt("%.1e", one)};
}

Outcome mean_path()
{
    ProblemSpec s = fixtures::scalar_example();
    set(s.b, 0.0);
    set(s.sigma, 0.0);
    const ValidatedProblem prob = validate(s);
    const FollowerSolution f = solve_follower_riccati(prob);
    const double gap = oracles::mean_path_gap(s, f, follower_mean_path(prob, f));
    return {gap <= 1e-8, "max gap to the exponential formula " + fmt("%.2e", gap)};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism()
{
    const Solved r = solve_all(fixtures::scalar_example());
    SimOptions one, four;
    one.threads = 1;
    four.threads = 4;
    const SimBatch a = simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 2000, 42, one);
    const SimBatch b = simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 2000, 42, four);
    const bool same_batch = a.X == b.X && a.U1 == b.U1 && a.U2 == b.U2 && a.J1 == b.J1 && a.J2 == b.J2;

    bool same_files = true;
    std::ostringstream log;
    std::vector<std::string> dirs{"acceptance_run_a", "acceptance_run_b"};
    const char* caps[] = {"1", "4"};
    for (int i = 0; i < 2; ++i) {
        ::setenv("MFLQ_THREADS", caps[i], 1);
        RunConfig cfg;
        cfg.command = Command::simulate;
        cfg.input = fixtures::data_path("scalar_example.json");
        cfg.out = dirs[i];
        same_files = same_files && run(cfg, log) == exit_ok;
    }
    ::unsetenv("MFLQ_THREADS");
    for (const char* f : {"summary.json", "gains.csv", "riccati.csv", "eta.csv"})
        same_files = same_files && slurp(std::filesystem::path(dirs[0]) / f) == slurp(std::filesystem::path(dirs[1]) / f);
    return {same_batch && same_files, std::string("batches with 1 and 4 threads ") +
                                          (same_batch ? "identical" : "differ") + ", CLI outputs " +
                                          (same_files ? "byte-identical" : "differ")};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Riccati convergence", riccati_convergence},
        {"exactness fixture", exactness_fixture},
        {"mean-field-off reduction", reduction},
        {"value match", value_match_criterion},
        {"equilibrium optimality", optimality},
        {"stationarity residuals", stationarity},
        {"DP oracle", dp_oracle_criterion},
        {"mean-path formula", mean_path},
        {"determinism", determinism}};
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        all = all && o.pass;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
