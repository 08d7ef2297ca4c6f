#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mflq/follower.hpp"

using namespace mflq;
using fixtures::set;

namespace {

// Straight scalar RK4 for ṗ = −(2ap + q − (b p)²/r), p(T) = G.
double scalar_riccati(double a, double b, double q, double r, double G, double T, int steps)
{
    auto f = [&](double p) { return -(2.0 * a * p + q - b * b * p * p / r); };
    const double h = T / steps;
    double p = G;
    for (int k = 0; k < steps; ++k) {
        const double k1 = f(p), k2 = f(p - 0.5 * h * k1), k3 = f(p - 0.5 * h * k2), k4 = f(p - h * k3);
        p -= h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return p;
}

ProblemSpec without_hats(ProblemSpec s)
{
    for (MatPath* p : {&s.Ah, &s.B1h, &s.B2h, &s.Ch, &s.D1h, &s.D2h})
        set(*p, 0.0);
    for (PlayerWeights* w : {&s.player1, &s.player2}) {
        for (MatPath* p : {&w->Qh, &w->S1h, &w->S2h, &w->R11h, &w->R12h, &w->R21h, &w->R22h})
            set(*p, 0.0);
        w->Gh.setZero();
        w->gh.setZero();
    }
    return s;
}

} // namespace

TEST_CASE("no cost gives a zero Riccati solution and zero gain")
{
    const ValidatedProblem prob = validate(fixtures::scalar_base());
    const FollowerSolution sol = solve_follower_riccati(prob);
    for (int k = 0; k < prob->grid.nodes(); ++k) {
        CHECK(sol.P1[k].norm() == 0.0);
        CHECK(sol.Theta1[k].norm() == 0.0);
    }
}

TEST_CASE("unit running cost without dynamics gives P1(s) = T - s")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.player1.Q, 1.0);
    const ValidatedProblem prob = validate(s);
    const FollowerSolution sol = solve_follower_riccati(prob);
    CHECK(std::abs(sol.P1[0](0, 0) - 1.0) <= 1e-12);
    for (int k = 0; k < prob->grid.nodes(); k += 20)
        CHECK(std::abs(sol.P1[k](0, 0) - (1.0 - prob->grid.time(k))) <= 1e-12);
}

TEST_CASE("scalar Riccati against an independent fine-step integration")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.A, 1.0);
    set(s.B1, 1.0);
    set(s.player1.Q, 1.0);
    s.player1.G = Mat::Ones(1, 1);
    const FollowerSolution sol = solve_follower_riccati(validate(s));
    const double ref = scalar_riccati(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2000);
    CHECK(std::abs(sol.P1[0](0, 0) - ref) <= 1e-8);
    // With no mean-field data both equations coincide.
    CHECK(std::abs(sol.Pi1[0](0, 0) - ref) <= 1e-8);
}

TEST_CASE("gain formula at a given P1")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.B1, 1.0);
    const CoeffsAt c = coeffs_at(s, 0.3);
    const FollowerPoint p = follower_point(c, Mat::Constant(1, 1, 2.0), Mat::Constant(1, 1, 2.0), Tolerances{}, 0.3);
    CHECK(p.Theta1(0, 0) == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("gain does not depend on C when D1 is zero")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.B1, 0.7);
    set(s.player1.S1, 0.2);
    const Mat P = Mat::Constant(1, 1, 1.3);
    set(s.C, 0.0);
    const Mat t0 = follower_point(coeffs_at(s, 0.5), P, P, Tolerances{}, 0.5).Theta1;
    set(s.C, 5.0);
    const Mat t1 = follower_point(coeffs_at(s, 0.5), P, P, Tolerances{}, 0.5).Theta1;
    CHECK((t0 - t1).norm() == 0.0);
}

TEST_CASE("without mean-field data the mean gain equals the fluctuation gain")
{
    const ValidatedProblem prob = validate(without_hats(fixtures::scalar_example()));
    const FollowerSolution sol = solve_follower_riccati(prob);
    for (int k = 0; k < prob->grid.nodes(); ++k) {
        CHECK((sol.Pi1[k] - sol.P1[k]).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((sol.Theta1hat[k] - sol.Theta1[k]).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("follower adjoint for zero data and for a constant terminal")
{
    ProblemSpec s = fixtures::scalar_base();
    const MatPath u2 = MatPath(s.grid, 1, 1);
    {
        const ValidatedProblem prob = validate(s);
        const FollowerSolution sol = solve_follower_riccati(prob);
        const FollowerAdjoint adj = solve_eta1(prob, sol, u2);
        CHECK(adj.eta1.max_abs() == 0.0);
        CHECK(adj.vbar1.max_abs() == 0.0);
    }
    s.player1.g = Vec::Constant(1, 0.3);
    s.player1.gh = Vec::Constant(1, 0.2);
    {
        const ValidatedProblem prob = validate(s);
        const FollowerSolution sol = solve_follower_riccati(prob);
        const FollowerAdjoint adj = solve_eta1(prob, sol, u2);
        for (int k = 0; k < prob->grid.nodes(); ++k)
            CHECK(std::abs(adj.eta1[k](0, 0) - 0.5) <= 1e-14);
    }
}

TEST_CASE("follower offset against its formula at five nodes")
{
    ProblemSpec s = fixtures::scalar_example();
    for (PlayerWeights* w : {&s.player1, &s.player2}) {
        set(w->q, 0.0);
        set(w->rho1, 0.0);
        set(w->rho2, 0.0);
    }
    set(s.sigma, 1.0);
    const ValidatedProblem prob = validate(s);
    const FollowerSolution sol = solve_follower_riccati(prob);
    MatPath u2(s.grid, 1, 1);
    set(u2, 0.4);
    const FollowerAdjoint adj = solve_eta1(prob, sol, u2);
    for (int k : {0, 37, 100, 163, 200}) {
        const CoeffsAt c = coeffs_at(s, s.grid.time(k));
        const double P1 = sol.P1[k](0, 0);
        const double Db = c.D1(0, 0) + c.D1h(0, 0), Bb = c.B1(0, 0) + c.B1h(0, 0), D2b = c.D2(0, 0) + c.D2h(0, 0);
        const double Sh = c.w1.R11(0, 0) + c.w1.R11h(0, 0) + Db * P1 * Db;
        const double R21b = c.w1.R21(0, 0) + c.w1.R21h(0, 0);
        const double expected =
            -(Db * P1 * c.sigma(0, 0) + Bb * adj.eta1[k](0, 0) + (R21b + Db * P1 * D2b) * 0.4) / Sh;
        CHECK(adj.vbar1[k](0, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("follower value of trivial problems")
{
    ProblemSpec s = fixtures::scalar_base();
    const MatPath u2(s.grid, 1, 1);
    {
        const ValidatedProblem prob = validate(s);
        const FollowerSolution sol = solve_follower_riccati(prob);
        CHECK(follower_value(prob, sol, solve_eta1(prob, sol, u2), u2) == 0.0);
    }
    s.player1.G = Mat::Ones(1, 1);
    s.xi_mean = Vec::Ones(1);
    {
        const ValidatedProblem prob = validate(s);
        const FollowerSolution sol = solve_follower_riccati(prob);
        CHECK(follower_value(prob, sol, solve_eta1(prob, sol, u2), u2) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("Riccati solutions stay symmetric")
{
    ProblemSpec s = zero_spec(2, 2, 1, TimeGrid{0.0, 1.0, 100});
    Mat A(2, 2), B(2, 2), C(2, 2), Q(2, 2);
    A << 0.1, 0.5, -0.3, 0.2;
    B << 1.0, 0.2, 0.1, 0.8;
    C << 0.2, 0.1, 0.0, 0.3;
    Q << 2.0, 0.3, 0.3, 1.0;
    set(s.A, A);
    set(s.Ah, A.transpose() * 0.3);
    set(s.B1, B);
    set(s.C, C);
    set(s.D1, B * 0.2);
    set(s.player1.Q, Q);
    set(s.player1.Qh, Q * 0.5);
    set(s.player1.R11, Mat::Identity(2, 2));
    set(s.player2.R22, Mat::Identity(1, 1));
    s.player1.G = Q;
    const FollowerSolution sol = solve_follower_riccati(validate(s));
    for (int k = 0; k < s.grid.nodes(); ++k) {
        CHECK((sol.P1[k] - sol.P1[k].transpose()).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((sol.Pi1[k] - sol.Pi1[k].transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("indefinite control weight trips the solvability monitor")
{
    ProblemSpec s = fixtures::scalar_base();
    set(s.player1.R11, -1.0);
    CHECK_THROWS_AS(solve_follower_riccati(validate(s)), SolvabilityError);
}
