#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mflq/leader.hpp"
#include "mflq/simulate.hpp"
#include "mflq/verify.hpp"
#include "oracles.hpp"

using namespace mflq;
using fixtures::set;

namespace {

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

ProblemSpec homogeneous(ProblemSpec s)
{
    set(s.b, 0.0);
    set(s.sigma, 0.0);
    for (PlayerWeights* w : {&s.player1, &s.player2}) {
        set(w->q, 0.0);
        set(w->rho1, 0.0);
        set(w->rho2, 0.0);
        w->g.setZero();
        w->gh.setZero();
    }
    return s;
}

Mat random_pd(std::mt19937_64& rng, int n, double shift)
{
    std::normal_distribution<double> N(0.0, 1.0);
    Mat L(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            L(i, j) = 0.5 * N(rng);
    return L * L.transpose() + shift * Mat::Identity(n, n);
}

Mat random_mat(std::mt19937_64& rng, int r, int c, double scale)
{
    std::normal_distribution<double> N(0.0, scale);
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            M(i, j) = N(rng);
    return M;
}

// Two-dimensional instance with positive definite weights and no mean-field data.
ProblemSpec random_two_dim(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    ProblemSpec s = zero_spec(2, 1, 1, TimeGrid{0.0, 1.0, 200});
    set(s.A, random_mat(rng, 2, 2, 0.3));
    set(s.B1, random_mat(rng, 2, 1, 0.7));
    set(s.B2, random_mat(rng, 2, 1, 0.7));
    set(s.C, random_mat(rng, 2, 2, 0.2));
    set(s.D1, random_mat(rng, 2, 1, 0.2));
    set(s.D2, random_mat(rng, 2, 1, 0.2));
    set(s.sigma, random_mat(rng, 2, 1, 0.3));
    set(s.b, random_mat(rng, 2, 1, 0.3));
    for (PlayerWeights* w : {&s.player1, &s.player2}) {
        set(w->Q, random_pd(rng, 2, 0.5));
        set(w->R11, random_pd(rng, 1, 0.5));
        set(w->R22, random_pd(rng, 1, 0.5));
        set(w->q, random_mat(rng, 2, 1, 0.1));
        w->G = random_pd(rng, 2, 0.2);
        w->g = random_mat(rng, 2, 1, 0.1);
    }
    s.xi_mean = Vec::Constant(2, 0.5);
    s.xi_cov = 0.1 * Mat::Identity(2, 2);
    return s;
}

double ratio(double a, double b, double c)
{
    return std::abs(a - b) / std::abs(b - c);
}

} // namespace

TEST_CASE("augmented blocks in the simplest follower")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.B1, 1.0);
    const CoeffsAt c = coeffs_at(s, 0.2);
    const FollowerPoint f = follower_point(c, Mat::Constant(1, 1, 0.6), Mat::Constant(1, 1, 0.6), Tolerances{}, 0.2);
    const AugPoint a = aug_point(c, f);
    CHECK(a.Mt(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(a.Ft.norm() == 0.0);
    CHECK(a.Kt.norm() == 0.0);
}

TEST_CASE("no inhomogeneous data gives zero vector blocks")
{
    const ProblemSpec s = homogeneous(fixtures::scalar_example());
    const Solved r = solve_all(s);
    for (int k = 0; k < s.grid.nodes(); k += 25) {
        const AugPoint& a = r.aug[k];
        for (const Vec* v : {&a.bt, &a.sigt, &a.ft, &a.q1t, &a.q2t, &a.q3t, &a.rhot, &a.bc, &a.sigc, &a.fc, &a.q1c,
                             &a.q2c, &a.q3c, &a.rhoc})
            CHECK(v->norm() == 0.0);
    }
    CHECK(r.lsol.eta2.max_abs() == 0.0);
    CHECK(r.lsol.V2check.max_abs() == 0.0);
    CHECK(r.lsol.V2tilde.max_abs() == 0.0);
}

TEST_CASE("leader without cost or influence has zero Riccati solution and zero gain")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.A, 0.3);
    set(s.B1, 1.0);
    set(s.player1.Q, 1.0);
    s.player1.G = Mat::Ones(1, 1);
    const Solved r = solve_all(s);
    CHECK(r.lsol.P2.max_abs() == 0.0);
    CHECK(r.lsol.Pi2.max_abs() == 0.0);
    CHECK(r.lsol.ThetaBold.max_abs() == 0.0);
    for (int k = 0; k < s.grid.nodes(); k += 50)
        CHECK(r.lsol.Sigma2tilde[k](0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("leader without cost but with influence never acts")
{
    // The gain on the multiplier block is nonzero, but the multiplier stays at zero.
    ProblemSpec s = fixtures::scalar_base();
    set(s.A, 0.3);
    set(s.B1, 1.0);
    set(s.B2, 0.5);
    set(s.sigma, 0.4);
    set(s.player1.Q, 1.0);
    s.player1.G = Mat::Ones(1, 1);
    s.xi_mean = Vec::Ones(1);
    s.xi_cov = Mat::Constant(1, 1, 0.2);
    const Solved r = solve_all(s);
    CHECK(r.lsol.ThetaBold[0](0, 0) == 0.0);
    const SimBatch b = simulate_paths(r.prob, r.aug, r.fsol, r.lsol, 50, 2);
    for (int p = 0; p < 50; ++p)
        for (int k = 0; k < s.grid.nodes(); k += 10)
            CHECK(b.control2(p, k).norm() == 0.0);
}

TEST_CASE("constant terminal offset propagates unchanged")
{
    ProblemSpec s = fixtures::scalar_base();
    s.player2.g = Vec::Constant(1, 0.4);
    s.player2.gh = Vec::Constant(1, 0.1);
    s.player1.g = Vec::Constant(1, -0.2);
    s.player1.gh = Vec::Constant(1, 0.05);
    const Solved r = solve_all(s);
    for (int k = 0; k < s.grid.nodes(); ++k) {
        CHECK(std::abs(r.lsol.eta2[k](0, 0) - 0.5) <= 1e-14);
        CHECK(std::abs(r.lsol.eta2[k](1, 0) + 0.15) <= 1e-14);
    }
}

TEST_CASE("terminal conditions are exact")
{
    const Solved r = solve_all(fixtures::scalar_example());
    const int N = r.prob->grid.n_steps;
    CHECK((r.lsol.P2[N] - r.aug.Gt).norm() == 0.0);
    CHECK((r.lsol.Pi2[N] - (r.aug.Gt + r.aug.Gc)).norm() == 0.0);
    CHECK((r.lsol.eta2[N] - (r.aug.gt + r.aug.gc)).norm() == 0.0);
    CHECK((r.fsol.P1[N] - r.prob->player1.G).norm() == 0.0);
}

TEST_CASE("leader value of trivial problems")
{
    ProblemSpec s = fixtures::scalar_base();
    CHECK(solve_all(s).lsol.V2 == 0.0);
    s.player2.G = Mat::Ones(1, 1);
    s.xi_mean = Vec::Ones(1);
    CHECK(solve_all(s).lsol.V2 == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("constant from deterministic noise")
{
    ProblemSpec s = fixtures::scalar_base();
    CHECK(compute_L(validate(s), solve_follower_riccati(validate(s))) == 0.0);

    // With A = B1 = C = Q = 0 the follower Riccati solution stays at G, so the
    // integrand is constant: T·Ŕ·(Σ̂₁⁻¹D́ G σ)².
    set(s.D1, 0.5);
    set(s.D1h, 0.1);
    set(s.sigma, 1.0);
    s.player1.G = Mat::Constant(1, 1, 2.0);
    set(s.player1.R11h, 0.2);
    set(s.player2.R11, 0.7);
    set(s.player2.R11h, 0.1);
    const ValidatedProblem prob = validate(s);
    const double Sh = 1.2 + 0.6 * 2.0 * 0.6;
    const double v = 0.6 * 2.0 * 1.0 / Sh;
    CHECK(compute_L(prob, solve_follower_riccati(prob)) == doctest::Approx(0.8 * v * v).epsilon(1e-13));
}

TEST_CASE("mean-field-off reduction on the scalar instance")
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
    const ValidatedProblem prob = validate(s);
    REQUIRE(hatted_data_zero(s));
    const ReductionGaps g = reduction_check(prob);
    CHECK(g.Pi1_P1 <= 1e-10);
    CHECK(g.Pi2_P2 <= 1e-9);
    CHECK(g.ThetaHat_Theta <= 1e-9);
}

TEST_CASE("mean-field-off reduction on random two-dimensional instances")
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const ProblemSpec s = random_two_dim(seed);
        const ReductionGaps g = reduction_check(validate(s));
        CHECK(g.hats_zero);
        CHECK(g.pass());
    }
}

TEST_CASE("mean-field drift separates the two Riccati equations")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.A, 0.2);
    set(s.Ah, 0.5);
    set(s.B1, 1.0);
    set(s.B2, 0.5);
    set(s.player1.Q, 1.0);
    set(s.player2.Q, 1.0);
    const ReductionGaps g = reduction_check(validate(s));
    CHECK_FALSE(g.hats_zero);
    CHECK(g.Pi1_P1 > 1e-3);
}

TEST_CASE("leader Riccati solution against a ten times finer grid")
{
    const ProblemSpec s = fixtures::scalar_example();
    const Solved coarse = solve_all(s);
    const ValidatedProblem fine = validate(refine_spec(s, 10));
    const FollowerSolution ff = solve_follower_riccati(fine);
    const LeaderRiccati fr = solve_leader_riccati(build_augmented(fine, ff));
    CHECK((coarse.lsol.P2[0] - fr.P2[0]).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK((coarse.fsol.P1[0] - ff.P1[0]).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("Riccati endpoint values converge at fourth order")
{
    const ProblemSpec base = fixtures::scalar_example();
    std::vector<Mat> P1, Pi1, P2, Pi2;
    const auto t0 = std::chrono::steady_clock::now();
    for (int steps : {200, 400, 800}) {
        const ValidatedProblem prob = validate(refine_spec(base, steps / 200));
        const FollowerSolution f = solve_follower_riccati(prob);
        const LeaderRiccati l = solve_leader_riccati(build_augmented(prob, f));
        P1.push_back(f.P1[0]);
        Pi1.push_back(f.Pi1[0]);
        P2.push_back(l.P2[0]);
        Pi2.push_back(l.Pi2[0]);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(seconds < 2.0);
    for (const auto* v : {&P1, &Pi1, &P2, &Pi2})
        for (int i = 0; i < (*v)[0].rows(); ++i)
            for (int j = 0; j < (*v)[0].cols(); ++j) {
                const double r = ratio((*v)[0](i, j), (*v)[1](i, j), (*v)[2](i, j));
                CHECK(r >= 8.0);
                CHECK(r <= 32.0);
            }
}

TEST_CASE("follower mean path matches the exponential of the integrated rate")
{
    const ProblemSpec s = homogeneous(fixtures::scalar_example());
    const ValidatedProblem prob = validate(s);
    const FollowerSolution fsol = solve_follower_riccati(prob);
    const MatPath m = follower_mean_path(prob, fsol);

    const double worst = oracles::mean_path_gap(s, fsol, m);
    CHECK(worst <= 1e-8);
}

TEST_CASE("indefinite leader control weight trips a monitor that names the time")
{
    ProblemSpec s = fixtures::scalar_example();
    set(s.player2.R22, -5.0);
    try {
        solve_all(s);
        FAIL("expected a solvability error");
    } catch (const InvertibilityError& e) {
        CHECK(std::string(e.what()).find("at s=") != std::string::npos);
    }
}
