#pragma once

#include "mflq/follower.hpp"
#include "mflq/odecore.hpp"
#include "mflq/problem.hpp"

namespace mflq {

// Every block of the leader's reformulated problem at one time.
// Tilde blocks act on fluctuations (· − E·), check blocks on means.
struct AugPoint {
    CoeffsAt c;
    FollowerPoint f;

    // Shorthand built from both players' weights.
    Mat Racute, Sacute, Qacute, Bacute, Dacute, Lacute, Rgrave, Sgrave, Rbreve, Jacute;

    // n-level state blocks.
    Mat At, Ac, Ct, Cc, Mt, Mc, Ft, Fc, Bt, Bc, Kt, Kc, Dt, Dc, Nt, Nc;

    // n-level weight blocks.
    Mat Q11t, Q12t, Q13t, Q22t, Q23t, Q33t, S1t, S2t, S3t, Rt;
    Mat Q11c, Q12c, Q13c, Q22c, Q23c, Q33c, S1c, S2c, S3c, Rc;

    // n-level vector blocks. With deterministic data the tilde ones vanish
    // identically, but they are still evaluated from their formulas.
    Vec bt, sigt, ft, q1t, q2t, q3t, rhot;
    Vec bc, sigc, fc, q1c, q2c, q3c, rhoc;

    // 2n-level blocks.
    Mat cAt, cAc, cMt, cMc, cFt, cFc, cHt, cHc, cCt, cCc, cKt, cKc;
    Mat cBt, cBc, cDt, cDc, cNt, cNc;
    Vec vbt, vbc, vsigt, vsigc, vft, vfc;

    // Integrand of the constant ℒ in the leader's cost.
    double Lint = 0.0;
};

AugPoint aug_point(const CoeffsAt& c, const FollowerPoint& f);

struct AugmentedCoefficients {
    ValidatedProblem prob;
    FollowerSolution fsol;
    std::vector<AugPoint> nodes;
    Mat Gt, Gc;  // 𝒢̃ = diag(G², 0), 𝒢̌ = diag(Ĝ², 0)
    Vec gt, gc;  // 𝒈̃ = (g², g¹), 𝒈̌ = (ĝ², ĝ¹)

    const TimeGrid& grid() const { return prob->grid; }
    int n2() const { return 2 * prob->n; }
    const AugPoint& operator[](int k) const { return nodes[k]; }
    // Exact node value at grid nodes; rebuilt from interpolated data in between.
    AugPoint at(double s) const;

    template <class M>
    MatPath path(M AugPoint::*member) const
    {
        const Mat first = nodes.front().*member;
        MatPath p(grid(), static_cast<int>(first.rows()), static_cast<int>(first.cols()));
        for (int k = 0; k < p.size(); ++k)
            p[k] = nodes[k].*member;
        return p;
    }
};

AugmentedCoefficients build_augmented(const ValidatedProblem& prob, const FollowerSolution& fsol);

// Leader quantities at one time, given P₂, Π₂ and Eη₂ there.
struct LeaderPoint {
    Mat Wt, Wc;                 // (I − P₂𝒦̃)⁻¹P₂ and (I − P₂𝒦̌)⁻¹P₂
    Mat IKt_inv, IKc_inv;       // (I − P₂𝒦̃)⁻¹, (I − P₂𝒦̌)⁻¹
    Mat Sig2t, Sig2c;           // Σ̃₂, Σ̌₂
    Mat Sig2t_inv, Sig2c_inv;
    Mat Theta, ThetaHat;        // Θ̄, Θ̂̄ (m2 × 2n)
    Vec V2t, V2c;               // Ṽ₂, V̌₂
    Mat AAt, AAc, CCt, CCc;     // closed-loop 𝔸̃, 𝔸̌, ℂ̃, ℂ̌
    Vec BBt, BBc, DDt, DDc;     // 𝔹̃, 𝔹̌, 𝔻̃, 𝔻̌
    Mat Wxt, Wxc;               // Z − EZ = Wxt (X − EX), EZ = Wxc EX + ez
    Vec ez;
    Mat Theta1b, Theta1hb;      // follower feedback on the augmented state
    Vec V1t, V1c;               // follower offsets
};

// Checks I − P₂𝒦 (positive symmetric part, bounded condition number).
Mat checked_inverse_IPK(const Mat& IPK, const char* monitor, const Tolerances& tol, double s);

LeaderPoint leader_point(const AugPoint& a, const Mat& P2, const Mat& Pi2, const Vec& eta2, const Tolerances& tol,
                         double s);

// Right-hand side of the stacked (P₂; Π₂) system.
OdeField leader_riccati_field(const AugmentedCoefficients& aug, const Tolerances& tol);

struct LeaderRiccati {
    MatPath P2, Pi2;
    MatPath Sigma2tilde, Sigma2check;
    MatPath ThetaBold, ThetaHatBold;
};

LeaderRiccati solve_leader_riccati(const AugmentedCoefficients& aug, const Tolerances& tol = {});

struct LeaderOffsets {
    MatPath eta2;     // 2n×1, Eη₂
    MatPath V2tilde;  // m2×1, identically zero here
    MatPath V2check;  // m2×1
};

LeaderOffsets solve_eta2(const AugmentedCoefficients& aug, const LeaderRiccati& ric, const Tolerances& tol = {});

struct LeaderSolution {
    Tolerances tol;
    MatPath P2, Pi2, Sigma2tilde, Sigma2check, ThetaBold, ThetaHatBold;
    MatPath eta2, V2tilde, V2check;
    MatPath Gamma1, Gamma2, alpha1, alpha2;
    double Lscalar = 0.0;
    double V2 = 0.0;
    std::vector<double> value_integrand;  // node samples of the ds-integrand of V₂

    LeaderPoint point_at(const AugmentedCoefficients& aug, double s) const;
    LeaderPoint point_node(const AugmentedCoefficients& aug, int k) const;
};

// ℒ from the follower solution alone.
double compute_L(const ValidatedProblem& prob, const FollowerSolution& fsol);

struct LeaderValue {
    MatPath Gamma1, Gamma2, alpha1, alpha2;
    double Lscalar = 0.0;
    double V2 = 0.0;
    std::vector<double> integrand;
};

// Γ₁, Γ₂, α₁, α₂ and V₂. Only the Riccati and offset parts of lsol are read.
LeaderValue leader_value(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const LeaderSolution& lsol,
                         const FollowerSolution& fsol);

// Full leader pipeline: Riccati pair, offsets, Lyapunov/adjoint equations and V₂.
LeaderSolution solve_leader(const AugmentedCoefficients& aug, const Tolerances& tol = {});

// EX̄ from dEX̄ = (𝔸̌EX̄ + 𝔹̌)ds, EX̄(t0) = (ξ_mean, 0).
MatPath propagate_mean(const AugmentedCoefficients& aug, const LeaderSolution& lsol);

// Cov(X̄) from dΣ = [𝔸̃Σ + Σ𝔸̃ᵀ + ℂ̃Σℂ̃ᵀ + (ℂ̌EX̄ + 𝔻̌)(ℂ̌EX̄ + 𝔻̌)ᵀ]ds, Σ(t0) = diag(ξ_cov, 0).
MatPath propagate_covariance(const AugmentedCoefficients& aug, const LeaderSolution& lsol, const MatPath& mean);

// V₁ at the equilibrium, where the leader's control is a feedback of X̄.
double follower_value_equilibrium(const AugmentedCoefficients& aug, const LeaderSolution& lsol);

// Mean of the follower's state when u₂ ≡ 0 and all inhomogeneous data vanish:
// dEx = (A + Â + (B₁+B̂₁)Θ̂̄₁)Ex ds.
MatPath follower_mean_path(const ValidatedProblem& prob, const FollowerSolution& fsol);

// Block selectors 𝕄₁ = [I 0], 𝕄₂ = [0 I] (n × 2n).
Mat select1(int n);
Mat select2(int n);

} // namespace mflq
