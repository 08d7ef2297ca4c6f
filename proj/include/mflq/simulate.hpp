#pragma once

#include <cstdint>
#include <vector>

#include "mflq/follower.hpp"
#include "mflq/leader.hpp"
#include "mflq/problem.hpp"

namespace mflq {

struct SimOptions {
    bool store_paths = true;
    // Constant added to every entry of the fluctuation gain acting on x − Ex
    // (follower Θ̄₁ and the x-block of the leader's Θ̄). Used by corruption probes.
    double follower_gain_shift = 0.0;
    double leader_gain_shift = 0.0;
    // 0 = hardware concurrency, capped by MFLQ_THREADS. Results do not depend on it.
    int threads = 0;
};

struct CostEstimate {
    double J1_mean = 0.0, J1_se = 0.0;
    double J2_mean = 0.0, J2_se = 0.0;
};

struct SimBatch {
    int n_paths = 0;
    std::uint64_t seed = 0;
    TimeGrid grid;
    int n = 0, m1 = 0, m2 = 0;
    bool stored = false;

    // Path-major storage: index ((path * nodes) + node) * dim + component.
    std::vector<double> X, U1, U2;
    std::vector<double> J1, J2;
    CostEstimate costs;

    // Deterministic means used for the mean-field closure.
    MatPath EX, Eu1, Eu2;

    Vec state(int path, int node) const;
    Vec control1(int path, int node) const;
    Vec control2(int path, int node) const;
};

// Sample mean and standard error (sample standard deviation / √N), with a fixed
// pairwise summation order.
std::pair<double, double> mean_and_se(const std::vector<double>& v);
double pairwise_sum(const double* v, std::size_t n);

// Worker count: hardware concurrency capped by MFLQ_THREADS and by the work size.
int worker_count(int requested, int work_items);

// Euler–Maruyama paths of the closed-loop equilibrium. X̄ − EX̄ is simulated and
// EX̄ comes from propagate_mean, so the mean-field terms are exact.
SimBatch simulate_paths(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const FollowerSolution& fsol,
                        const LeaderSolution& lsol, int n_paths, std::uint64_t seed, const SimOptions& opts = {});

// Per-path trapezoid costs recomputed from stored paths.
CostEstimate estimate_costs(const ValidatedProblem& prob, SimBatch& batch);

// Running cost of player i at one node. Hatted weights act on the means only.
double running_cost(const WeightsAt& w, const Vec& x, const Vec& u1, const Vec& u2, const Vec& Ex, const Vec& Eu1,
                    const Vec& Eu2);
double terminal_cost(const PlayerWeights& w, const Vec& x, const Vec& Ex);

enum class Player { follower = 1, leader = 2 };

// Perturbation directions. The leader's directions are deterministic paths w(s);
// the follower's are w(s) + κ(x − Ex) with x the equilibrium state and u₂ frozen.
struct DirectionSet {
    Player player = Player::leader;
    std::vector<MatPath> w;    // m×1 paths (m = m2 for the leader, m1 for the follower)
    std::vector<Mat> kappa;    // m1×n, follower only
};

DirectionSet random_directions(const ValidatedProblem& prob, Player player, int n_dirs, std::uint64_t seed);

struct PerturbationSweep {
    Player player = Player::leader;
    std::vector<double> eps;
    // Rows: directions, columns: ε values. Statistics of J(ε) − J(0) over paths
    // for the perturbing player's own cost.
    Mat diff_mean, diff_se;
    double J0_mean = 0.0, J0_se = 0.0;
};

PerturbationSweep perturbation_sweep(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                                     const FollowerSolution& fsol, const LeaderSolution& lsol,
                                     const DirectionSet& dirs, const std::vector<double>& eps, int n_paths,
                                     std::uint64_t seed, const SimOptions& opts = {});

// One batch under a perturbed control: the leader's u₂ + εw with the follower's
// best response, or the follower's u₁ + ε(w + κ(x − Ex)) with u₂ frozen. The same
// seed reuses the same increments as simulate_paths; ε = 0 reproduces it exactly.
SimBatch simulate_with_control(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                               const FollowerSolution& fsol, const LeaderSolution& lsol, const DirectionSet& dirs,
                               int dir, double eps, int n_paths, std::uint64_t seed, const SimOptions& opts = {});

} // namespace mflq
