#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mflq/follower.hpp"
#include "mflq/leader.hpp"
#include "mflq/simulate.hpp"

namespace mflq {

struct CheckResult {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool informational = false;  // reported but never fails the report
    double seconds = 0.0;
    std::string detail;
};

struct VerificationReport {
    std::vector<CheckResult> checks;
    bool pass() const;
    void add(CheckResult c) { checks.push_back(std::move(c)); }
    const CheckResult* find(const std::string& name) const;
};

struct Residual {
    double value = 0.0;  // max over paths and nodes of the residual norm
    double scale = 0.0;  // max over paths and nodes of the largest term norm
    int path = -1, node = -1;
};

// Follower's stationarity expression on every stored path and node, with (y, z)
// rebuilt from the follower decoupling and (η₁, ζ₁) read off the leader's
// decoupling Y = P₂(X̄ − EX̄) + Π₂EX̄ + η₂ and the Z reconstruction.
Residual stationarity_residual_follower(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                                        const LeaderSolution& lsol, const SimBatch& batch);

// Leader's stationarity expression with (p₂, q₂, k₂) rebuilt the same way.
Residual stationarity_residual_leader(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                                      const LeaderSolution& lsol, const SimBatch& batch);

// Leader's second-order form for one deterministic direction u₂(·).
double convexity_form(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const MatPath& u2);

// Minimum of the form over n_dirs random deterministic directions.
double convexity_sample(const ValidatedProblem& prob, const AugmentedCoefficients& aug, int n_dirs,
                        std::uint64_t seed);

struct ValueMatch {
    double V1 = 0.0, V2 = 0.0;
    CostEstimate mc;
    double gap1 = 0.0, gap2 = 0.0;
    double tol1 = 0.0, tol2 = 0.0;  // max(3·SE, 0.02·|V|)
    bool pass() const { return gap1 <= tol1 && gap2 <= tol2; }
};

ValueMatch value_match(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const FollowerSolution& fsol,
                       const LeaderSolution& lsol, const SimBatch& batch);

struct ReductionGaps {
    double Pi1_P1 = 0.0, Pi2_P2 = 0.0, ThetaHat_Theta = 0.0;
    bool hats_zero = false;
    bool pass() const { return Pi1_P1 <= 1e-10 && Pi2_P2 <= 1e-9 && ThetaHat_Theta <= 1e-9; }
};

bool hatted_data_zero(const ProblemSpec& sp);
ReductionGaps reduction_check(const ValidatedProblem& prob, const Tolerances& tol = {});

struct DpResult {
    int n_steps = 0;
    // Discrete gains at the nodes t₀ … t_{N−1}.
    std::vector<Mat> Theta1, Theta1hat, Theta, ThetaHat;
    std::vector<Vec> v2;  // leader's mean offset
    // Mean controls at t₀ with EX̄(t₀) = (ξ_mean, 0).
    Vec u1_0, u2_0;
    // Largest nodewise gap to the continuous gains, absolute and relative to the
    // largest continuous gain of the same kind.
    double gap_abs = 0.0, gap_rel = 0.0;
    double gap_follower = 0.0, gap_leader = 0.0;
};

// Discrete-time game on n_steps Euler steps solved by backward induction: the
// follower by one-step minimization with a quadratic value in (x − Ex, Ex), the
// leader through the discrete first-order conditions of its problem with the
// follower's recursion as a constraint. n_steps = 0 keeps the problem's grid.
DpResult dp_discrete_game(const ValidatedProblem& prob, int n_steps);

// dp_discrete_game plus gaps against the continuous gains at the same times.
DpResult dp_oracle(const ValidatedProblem& prob, const FollowerSolution& fsol, const AugmentedCoefficients& aug,
                   const LeaderSolution& lsol, int n_steps = 0);

struct VerifyOptions {
    int n_paths = 10000;
    std::uint64_t seed = 42;
    int n_dirs = 50;
    std::vector<double> eps{-0.05, -0.01, 0.01, 0.05};
    Tolerances tol;
    std::vector<std::string> checks;  // empty = all
    SimOptions sim;
};

// Names accepted by VerifyOptions::checks, in report order.
const std::vector<std::string>& check_names();
bool check_enabled(const VerifyOptions& o, const std::string& name);

// Every enabled check on a solved problem. The batch must hold stored paths.
VerificationReport verify_all(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                              const FollowerSolution& fsol, const LeaderSolution& lsol, const SimBatch& batch,
                              const VerifyOptions& opts);

} // namespace mflq
