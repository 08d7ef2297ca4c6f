#pragma once

#include <utility>

#include "mflq/odecore.hpp"
#include "mflq/problem.hpp"

namespace mflq {

struct FollowerSolution {
    MatPath P1;         // n×n
    MatPath Pi1;        // n×n
    MatPath Sigma1;     // m1×m1, R₁₁ + D₁ᵀP₁D₁
    MatPath Sigma1hat;  // m1×m1, R₁₁ + R̂₁₁ + (D₁+D̂₁)ᵀP₁(D₁+D̂₁)
    MatPath Theta1;     // m1×n
    MatPath Theta1hat;  // m1×n
    Tolerances tol;
};

// Deterministic follower adjoint for an open-loop leader input (ζ₁ ≡ 0).
struct FollowerAdjoint {
    MatPath eta1;   // n×1
    MatPath vbar1;  // m1×1
};

// Follower quantities at a single time, from (P₁, Π₁) at that time.
struct FollowerPoint {
    Mat P1, Pi1;
    Mat Sigma1, Sigma1hat;
    Mat Sigma1_inv, Sigma1hat_inv;
    Mat Theta1, Theta1hat;
};

FollowerPoint follower_point(const CoeffsAt& c, const Mat& P1, const Mat& Pi1, const Tolerances& tol, double s);

// Evaluate the follower point at time s from the stored Riccati paths.
FollowerPoint follower_point_at(const ProblemSpec& spec, const FollowerSolution& sol, double s);

FollowerSolution solve_follower_riccati(const ValidatedProblem& prob, const Tolerances& tol = {});

// Right-hand side of the stacked (P₁; Π₁) system, exposed for residual diagnostics.
OdeField follower_riccati_field(const ValidatedProblem& prob, const Tolerances& tol = {});

std::pair<Mat, Mat> follower_gain_at(const FollowerSolution& sol, double s);

// η̄₁ and v̄₁ for a deterministic leader control path u₂(·) (m2×1 path).
FollowerAdjoint solve_eta1(const ValidatedProblem& prob, const FollowerSolution& sol, const MatPath& u2_mean);

// V₁(t0, ξ; u₂) for a deterministic leader control path.
double follower_value(const ValidatedProblem& prob, const FollowerSolution& sol, const FollowerAdjoint& adj,
                      const MatPath& u2_mean);

// Trapezoid rule on the grid for scalar node samples.
double trapezoid(const std::vector<double>& f, double dt);

// Smallest eigenvalue of the symmetric part.
double min_sym_eig(const Mat& m);

} // namespace mflq
