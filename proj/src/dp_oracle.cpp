#include "mflq/verify.hpp"

#include <algorithm>
#include <cmath>

namespace mflq {

namespace {

// Row selector picking `size` consecutive variables starting at `offset` out of `total`.
Mat pick(int total, int offset, int size)
{
    Mat S = Mat::Zero(size, total);
    S.middleCols(offset, size).setIdentity();
    return S;
}

Mat sym2(const Mat& X)
{
    return X + X.transpose();
}

std::vector<int> range(int from, int to)
{
    std::vector<int> r;
    for (int i = from; i < to; ++i)
        r.push_back(i);
    return r;
}

Mat weight3(const Mat& Q, const Mat& S1, const Mat& S2, const Mat& R11, const Mat& R21, const Mat& R22)
{
    const int n = static_cast<int>(Q.rows()), m1 = static_cast<int>(R11.rows()), m2 = static_cast<int>(R22.rows());
    Mat W(n + m1 + m2, n + m1 + m2);
    W << Q, S1.transpose(), S2.transpose(), S1, R11, R21, S2, R21.transpose(), R22;
    return W;
}

Mat fluct_w(const WeightsAt& w)
{
    return weight3(w.Q, w.S1, w.S2, w.R11, w.R21, w.R22);
}

Mat mean_w(const WeightsAt& w)
{
    return weight3(w.Q + w.Qh, w.S1 + w.S1h, w.S2 + w.S2h, w.R11 + w.R11h, w.R21 + w.R21h, w.R22 + w.R22h);
}

Vec lin_w(const WeightsAt& w)
{
    Vec l(w.q.size() + w.rho1.size() + w.rho2.size());
    l << w.q, w.rho1, w.rho2;
    return l;
}

// Minimize the quadratic form vᵀMv over the block [u0, u0+mu) and return the
// minimizer as a map of the remaining variables, plus the reduced form on them.
struct Reduced {
    Mat K;      // u = K · rest
    Mat S;      // reduced form on rest
    std::vector<int> rest;
};

Reduced eliminate(const Mat& M, int u0, int mu, const char* monitor, double t, const Tolerances& tol)
{
    const int nv = static_cast<int>(M.rows());
    std::vector<int> u = range(u0, u0 + mu);
    std::vector<int> rest = range(0, u0);
    for (int i = u0 + mu; i < nv; ++i)
        rest.push_back(i);
    const Mat Quu = M(u, u);
    const double e = min_sym_eig(Quu);
    (void)tol;
    if (!(e > 0.0))
        throw SolvabilityError(monitor, t, e);
    Reduced r;
    r.K = -Quu.llt().solve(M(u, rest));
    r.S = M(rest, rest) + M(rest, u) * r.K;
    r.rest = rest;
    return r;
}

struct FollowerStep {
    Mat P, Pi;
    Mat Kx, Kw;    // δu₁ = Kx δx + Kw (δu₂, δy, δz)
    Mat Psi;       // δη = Psi (δu₂, δy, δz)
    Mat Khx, Khw;  // Eu₁ = Khx Ex + Khw (Eu₂, Ey, Ez, 1)
    Mat PsiM;      // Eη = PsiM (Eu₂, Ey, Ez, 1)
};

FollowerStep follower_step(const CoeffsAt& c, double h, const Mat& Pn, const Mat& Pin, double t,
                           const Tolerances& tol)
{
    const int n = static_cast<int>(c.A.rows()), m1 = static_cast<int>(c.B1.cols()),
              m2 = static_cast<int>(c.B2.cols());
    const WeightsAt& w = c.w1;
    FollowerStep fs;
    {
        // Variables (δx, δu₁, δu₂, δy, δz).
        const int nv = 3 * n + m1 + m2;
        const Mat Sx = pick(nv, 0, n), Su1 = pick(nv, n, m1), Su2 = pick(nv, n + m1, m2);
        const Mat Sy = pick(nv, n + m1 + m2, n), Sz = pick(nv, 2 * n + m1 + m2, n);
        const Mat E = Sx + h * (c.A * Sx + c.B1 * Su1 + c.B2 * Su2);
        const Mat G = c.C * Sx + c.D1 * Su1 + c.D2 * Su2;
        Mat Wmap(n + m1 + m2, nv);
        Wmap << Sx, Su1, Su2;
        const Mat M = h * Wmap.transpose() * fluct_w(w) * Wmap + E.transpose() * Pn * E + h * G.transpose() * Pn * G +
                      sym2(Sy.transpose() * E) + h * sym2(Sz.transpose() * G);
        const Reduced r = eliminate(M, n, m1, "discrete follower Hessian (fluctuation)", t, tol);
        // rest = (δx, δu₂, δy, δz)
        fs.Kx = r.K.leftCols(n);
        fs.Kw = r.K.rightCols(m2 + 2 * n);
        fs.P = r.S.topLeftCorner(n, n);
        fs.Psi = r.S.topRightCorner(n, m2 + 2 * n);
    }
    {
        // Variables (Ex, Eu₁, Eu₂, Ey, Ez, 1).
        const int nv = 3 * n + m1 + m2 + 1;
        const Mat Sm = pick(nv, 0, n), Su1 = pick(nv, n, m1), Su2 = pick(nv, n + m1, m2);
        const Mat Sy = pick(nv, n + m1 + m2, n), Sz = pick(nv, 2 * n + m1 + m2, n), S1 = pick(nv, nv - 1, 1);
        const Mat Bb = c.B1 + c.B1h, B2b = c.B2 + c.B2h, Db = c.D1 + c.D1h, D2b = c.D2 + c.D2h;
        const Mat E = Sm + h * ((c.A + c.Ah) * Sm + Bb * Su1 + B2b * Su2 + c.b * S1);
        const Mat G = (c.C + c.Ch) * Sm + Db * Su1 + D2b * Su2 + c.sigma * S1;
        Mat Wmap(n + m1 + m2, nv);
        Wmap << Sm, Su1, Su2;
        const Mat M = h * (Wmap.transpose() * mean_w(w) * Wmap + sym2(S1.transpose() * (lin_w(w).transpose() * Wmap))) +
                      E.transpose() * Pin * E + h * G.transpose() * Pn * G + sym2(Sy.transpose() * E) +
                      h * sym2(Sz.transpose() * G);
        const Reduced r = eliminate(M, n, m1, "discrete follower Hessian (mean)", t, tol);
        fs.Khx = r.K.leftCols(n);
        fs.Khw = r.K.rightCols(m2 + 2 * n + 1);
        fs.Pi = r.S.topLeftCorner(n, n);
        fs.PsiM = r.S.topRightCorner(n, m2 + 2 * n + 1);
    }
    return fs;
}

Mat solve_square(const Mat& A, const Mat& B, double t)
{
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible()) {
        const Eigen::JacobiSVD<Mat> svd(A);
        throw SolvabilityError("discrete leader first-order system", t,
                               svd.singularValues()(svd.singularValues().size() - 1));
    }
    return lu.solve(B);
}

} // namespace

DpResult dp_discrete_game(const ValidatedProblem& prob, int n_steps)
{
    const ProblemSpec& sp = prob.spec();
    const int n = sp.n, m1 = sp.m1, m2 = sp.m2, N2 = 2 * n;
    TimeGrid g = sp.grid;
    if (n_steps > 0)
        g.n_steps = n_steps;
    // A single step is allowed here: the one-step game is a test fixture.
    if (g.n_steps < 1 || !(g.T > g.t0))
        throw BadGrid("discrete game needs at least one step on a nonempty horizon");
    const double h = g.dt();
    const Tolerances tol;

    DpResult res;
    res.n_steps = g.n_steps;
    res.Theta1.resize(g.n_steps);
    res.Theta1hat.resize(g.n_steps);
    res.Theta.resize(g.n_steps);
    res.ThetaHat.resize(g.n_steps);
    res.v2.resize(g.n_steps);

    Mat P1 = sp.player1.G, Pi1 = sp.player1.G + sp.player1.Gh;
    Mat P2 = Mat::Zero(N2, N2), Pi2 = Mat::Zero(N2, N2);
    P2.topLeftCorner(n, n) = sp.player2.G;
    Pi2.topLeftCorner(n, n) = sp.player2.G + sp.player2.Gh;
    Vec phi(N2);
    phi << sp.player2.g + sp.player2.gh, sp.player1.g + sp.player1.gh;

    for (int k = g.n_steps - 1; k >= 0; --k) {
        const double t = g.time(k);
        const CoeffsAt c = coeffs_at(sp, t);
        const FollowerStep fs = follower_step(c, h, P1, Pi1, t, tol);
        res.Theta1[k] = fs.Kx;
        res.Theta1hat[k] = fs.Khx;

        Mat P2k, Pi2k;
        Vec phik;
        {
            // Variables (δx, δp, δu₂, δy, δz, δΛ, δΞ); Λ, Ξ are the conditional mean of the
            // next x-multiplier and its correlation with the increment.
            const int nv = 6 * n + m2;
            const Mat Sx = pick(nv, 0, n), Sp = pick(nv, n, n), Su2 = pick(nv, N2, m2);
            const Mat Sy = pick(nv, N2 + m2, n), Sz = pick(nv, 3 * n + m2, n);
            const Mat SL = pick(nv, 4 * n + m2, n), SX = pick(nv, 5 * n + m2, n);
            Mat Sw(m2 + N2, nv);
            Sw << Su2, Sy, Sz;
            const Mat U1 = fs.Kx * Sx + fs.Kw * Sw;
            const Mat F = c.A * Sx + c.B1 * U1 + c.B2 * Su2;
            const Mat G = c.C * Sx + c.D1 * U1 + c.D2 * Su2;
            Mat Wmap(n + m1 + m2, nv);
            Wmap << Sx, U1, Su2;
            const Mat H = h * Wmap.transpose() * fluct_w(c.w2) * Wmap + sym2(SL.transpose() * (Sx + h * F)) +
                          h * sym2(SX.transpose() * G) + sym2(Sp.transpose() * fs.Psi * Sw);
            Mat E(4 * n + m2, nv);
            Mat top(N2, nv), bot(N2, nv);
            top << Sx + h * F, Sy * H;
            bot << G, (Sz * H) / h;
            Mat lhsA(N2, nv), lhsB(N2, nv);
            lhsA << SL, Sy;
            lhsB << SX, Sz;
            E << lhsA - P2 * top, lhsB - P2 * bot, Su2 * H;
            const std::vector<int> known = range(0, N2), unknown = range(N2, nv);
            const Mat sol = -solve_square(E(Eigen::all, unknown), E(Eigen::all, known), t);
            Mat V(nv, N2);
            V << Mat::Identity(N2, N2), sol;
            Mat Y(N2, nv);
            Y << Sx * H, fs.Psi * Sw;
            P2k = Y * V;
            res.Theta[k] = Su2 * V;
        }
        {
            // Variables (Ex, Ep, Eu₂, Ey, Ez, EΛ, EΞ, 1).
            const int nv = 6 * n + m2 + 1;
            const Mat Sm = pick(nv, 0, n), Sp = pick(nv, n, n), Su2 = pick(nv, N2, m2);
            const Mat Sy = pick(nv, N2 + m2, n), Sz = pick(nv, 3 * n + m2, n);
            const Mat SL = pick(nv, 4 * n + m2, n), SX = pick(nv, 5 * n + m2, n), S1 = pick(nv, nv - 1, 1);
            Mat Sw(m2 + N2 + 1, nv);
            Sw << Su2, Sy, Sz, S1;
            const Mat Bb = c.B1 + c.B1h, B2b = c.B2 + c.B2h, Db = c.D1 + c.D1h, D2b = c.D2 + c.D2h;
            const Mat U1 = fs.Khx * Sm + fs.Khw * Sw;
            const Mat F = (c.A + c.Ah) * Sm + Bb * U1 + B2b * Su2 + c.b * S1;
            const Mat G = (c.C + c.Ch) * Sm + Db * U1 + D2b * Su2 + c.sigma * S1;
            Mat Wmap(n + m1 + m2, nv);
            Wmap << Sm, U1, Su2;
            const Mat H = h * (Wmap.transpose() * mean_w(c.w2) * Wmap +
                               sym2(S1.transpose() * (lin_w(c.w2).transpose() * Wmap))) +
                          sym2(SL.transpose() * (Sm + h * F)) + h * sym2(SX.transpose() * G) +
                          sym2(Sp.transpose() * fs.PsiM * Sw);
            Mat E(4 * n + m2, nv);
            Mat top(N2, nv), bot(N2, nv);
            top << Sm + h * F, Sy * H;
            bot << G, (Sz * H) / h;
            Mat lhsA(N2, nv), lhsB(N2, nv);
            lhsA << SL, Sy;
            lhsB << SX, Sz;
            E << lhsA - Pi2 * top - phi * S1, lhsB - P2 * bot, Su2 * H;
            std::vector<int> known = range(0, N2);
            known.push_back(nv - 1);
            const std::vector<int> unknown = range(N2, nv - 1);
            const Mat sol = -solve_square(E(Eigen::all, unknown), E(Eigen::all, known), t);
            Mat V = Mat::Zero(nv, N2 + 1);
            V.topLeftCorner(N2, N2).setIdentity();
            V.middleRows(N2, nv - 1 - N2) = sol;
            V(nv - 1, N2) = 1.0;
            Mat Y(N2, nv);
            Y << Sm * H, fs.PsiM * Sw;
            const Mat EY = Y * V;
            Pi2k = EY.leftCols(N2);
            phik = EY.col(N2);
            const Mat Gu = Su2 * V;
            res.ThetaHat[k] = Gu.leftCols(N2);
            res.v2[k] = Gu.col(N2);
            if (k == 0) {
                Vec X0 = Vec::Zero(N2 + 1);
                X0.head(n) = sp.xi_mean;
                X0(N2) = 1.0;
                const Vec v0 = V * X0;
                res.u2_0 = Su2 * v0;
                res.u1_0 = U1 * v0;
            }
        }
        P1 = fs.P;
        Pi1 = fs.Pi;
        P2 = P2k;
        Pi2 = Pi2k;
        phi = phik;
    }
    return res;
}

DpResult dp_oracle(const ValidatedProblem& prob, const FollowerSolution& fsol, const AugmentedCoefficients& aug,
                   const LeaderSolution& lsol, int n_steps)
{
    DpResult r = dp_discrete_game(prob, n_steps);
    const ProblemSpec& sp = prob.spec();
    TimeGrid g = sp.grid;
    g.n_steps = r.n_steps;
    double d1 = 0, d1h = 0, d2 = 0, d2h = 0, s1 = 0, s1h = 0, s2 = 0, s2h = 0;
    for (int k = 0; k < g.n_steps; ++k) {
        const double t = g.time(k);
        const FollowerPoint f = follower_point_at(sp, fsol, t);
        const LeaderPoint p = lsol.point_at(aug, t);
        d1 = std::max(d1, (r.Theta1[k] - f.Theta1).cwiseAbs().maxCoeff());
        d1h = std::max(d1h, (r.Theta1hat[k] - f.Theta1hat).cwiseAbs().maxCoeff());
        d2 = std::max(d2, (r.Theta[k] - p.Theta).cwiseAbs().maxCoeff());
        d2h = std::max(d2h, (r.ThetaHat[k] - p.ThetaHat).cwiseAbs().maxCoeff());
        s1 = std::max(s1, f.Theta1.cwiseAbs().maxCoeff());
        s1h = std::max(s1h, f.Theta1hat.cwiseAbs().maxCoeff());
        s2 = std::max(s2, p.Theta.cwiseAbs().maxCoeff());
        s2h = std::max(s2h, p.ThetaHat.cwiseAbs().maxCoeff());
    }
    auto rel = [](double d, double s) { return s > 0 ? d / s : d; };
    r.gap_follower = std::max(d1, d1h);
    r.gap_leader = std::max(d2, d2h);
    r.gap_abs = std::max(r.gap_follower, r.gap_leader);
    r.gap_rel = std::max({rel(d1, s1), rel(d1h, s1h), rel(d2, s2), rel(d2h, s2h)});
    return r;
}

} // namespace mflq
