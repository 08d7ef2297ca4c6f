#include "mflq/follower.hpp"

namespace mflq {

double min_sym_eig(const Mat& m)
{
    Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double trapezoid(const std::vector<double>& f, double dt)
{
    if (f.size() < 2)
        return 0.0;
    double acc = 0.5 * (f.front() + f.back());
    for (size_t k = 1; k + 1 < f.size(); ++k)
        acc += f[k];
    return acc * dt;
}

namespace {

Mat spd_inverse(const Mat& m, const char* name, const Tolerances& tol, double s)
{
    const double e = min_sym_eig(m);
    if (!(e > tol.eps_pd))
        throw SolvabilityError(name, s, e);
    Mat sym = 0.5 * (m + m.transpose());
    return sym.llt().solve(Mat::Identity(m.rows(), m.cols()));
}

} // namespace

FollowerPoint follower_point(const CoeffsAt& c, const Mat& P1, const Mat& Pi1, const Tolerances& tol, double s)
{
    const WeightsAt& w = c.w1;
    const Mat Bb = c.B1 + c.B1h;
    const Mat Db = c.D1 + c.D1h;
    const Mat Cb = c.C + c.Ch;
    FollowerPoint f;
    f.P1 = P1;
    f.Pi1 = Pi1;
    f.Sigma1 = w.R11 + c.D1.transpose() * P1 * c.D1;
    f.Sigma1hat = w.R11 + w.R11h + Db.transpose() * P1 * Db;
    f.Sigma1_inv = spd_inverse(f.Sigma1, "Sigma1", tol, s);
    f.Sigma1hat_inv = spd_inverse(f.Sigma1hat, "Sigma1hat", tol, s);
    f.Theta1 = -f.Sigma1_inv * (c.B1.transpose() * P1 + c.D1.transpose() * P1 * c.C + w.S1);
    f.Theta1hat = -f.Sigma1hat_inv * (Bb.transpose() * Pi1 + Db.transpose() * P1 * Cb + w.S1 + w.S1h);
    return f;
}

FollowerPoint follower_point_at(const ProblemSpec& spec, const FollowerSolution& sol, double s)
{
    return follower_point(coeffs_at(spec, s), sol.P1.at(s), sol.Pi1.at(s), sol.tol, s);
}

OdeField follower_riccati_field(const ValidatedProblem& prob, const Tolerances& tol)
{
    const int n = prob->n;
    return [prob, tol, n](double s, const Mat& y) -> Mat {
        const CoeffsAt c = coeffs_at(prob.spec(), s);
        const WeightsAt& w = c.w1;
        const Mat P1 = y.topRows(n);
        const Mat Pi1 = y.bottomRows(n);
        const FollowerPoint f = follower_point(c, P1, Pi1, tol, s);
        const Mat Ab = c.A + c.Ah;
        const Mat Cb = c.C + c.Ch;
        const Mat L = c.B1.transpose() * P1 + c.D1.transpose() * P1 * c.C + w.S1;
        const Mat Lh = (c.B1 + c.B1h).transpose() * Pi1 + (c.D1 + c.D1h).transpose() * P1 * Cb + w.S1 + w.S1h;
        Mat out(2 * n, n);
        // L^T Σ^{-1} L = −L^T Θ
        out.topRows(n) = -(P1 * c.A + c.A.transpose() * P1 + c.C.transpose() * P1 * c.C + w.Q + L.transpose() * f.Theta1);
        out.bottomRows(n) = -(Pi1 * Ab + Ab.transpose() * Pi1 + Cb.transpose() * P1 * Cb + w.Q + w.Qh +
                              Lh.transpose() * f.Theta1hat);
        return out;
    };
}

FollowerSolution solve_follower_riccati(const ValidatedProblem& prob, const Tolerances& tol)
{
    const ProblemSpec& sp = prob.spec();
    const int n = sp.n;
    Mat terminal(2 * n, n);
    terminal.topRows(n) = sp.player1.G;
    terminal.bottomRows(n) = sp.player1.G + sp.player1.Gh;
    IntegrateOptions opts;
    opts.label = "follower Riccati (P1, Pi1)";
    opts.post_step = [n](Mat& y) {
        Mat a = y.topRows(n), b = y.bottomRows(n);
        symmetrize(a);
        symmetrize(b);
        y.topRows(n) = a;
        y.bottomRows(n) = b;
    };
    MatPath stacked = integrate_backward(follower_riccati_field(prob, tol), terminal, sp.grid, opts);

    FollowerSolution sol;
    sol.tol = tol;
    sol.P1 = row_block(stacked, 0, n);
    sol.Pi1 = row_block(stacked, n, n);
    // The exact terminal values are stored even though symmetrization never touches them.
    sol.P1[sp.grid.n_steps] = sp.player1.G;
    sol.Pi1[sp.grid.n_steps] = sp.player1.G + sp.player1.Gh;
    const TimeGrid& g = sp.grid;
    sol.Sigma1 = MatPath(g, sp.m1, sp.m1);
    sol.Sigma1hat = MatPath(g, sp.m1, sp.m1);
    sol.Theta1 = MatPath(g, sp.m1, n);
    sol.Theta1hat = MatPath(g, sp.m1, n);
    for (int k = 0; k < g.nodes(); ++k) {
        const double s = g.time(k);
        const FollowerPoint f = follower_point(coeffs_at(sp, s), sol.P1[k], sol.Pi1[k], tol, s);
        sol.Sigma1[k] = f.Sigma1;
        sol.Sigma1hat[k] = f.Sigma1hat;
        sol.Theta1[k] = f.Theta1;
        sol.Theta1hat[k] = f.Theta1hat;
    }
    return sol;
}

std::pair<Mat, Mat> follower_gain_at(const FollowerSolution& sol, double s)
{
    return {sol.Theta1.at(s), sol.Theta1hat.at(s)};
}

namespace {

// Ǎ, Ň and the constant forcing of the deterministic η̄₁ equation at time s.
struct EtaCoeffs {
    Mat Acheck, Ncheck, Jt;  // Jt = R₂₁ + R̂₂₁ + D́ᵀP₁(D₂+D̂₂)
    Vec forcing;
    FollowerPoint f;
    CoeffsAt c;
};

EtaCoeffs eta_coeffs(const ProblemSpec& sp, const FollowerSolution& sol, double s)
{
    EtaCoeffs e;
    e.c = coeffs_at(sp, s);
    const CoeffsAt& c = e.c;
    const WeightsAt& w = c.w1;
    e.f = follower_point(c, sol.P1.at(s), sol.Pi1.at(s), sol.tol, s);
    const Mat& P1 = e.f.P1;
    const Mat& Pi1 = e.f.Pi1;
    const Mat Bb = c.B1 + c.B1h, Db = c.D1 + c.D1h;
    const Mat B2b = c.B2 + c.B2h, D2b = c.D2 + c.D2h;
    const Mat Ccheck = c.C + c.Ch + Db * e.f.Theta1hat;
    e.Acheck = c.A + c.Ah + Bb * e.f.Theta1hat;
    e.Jt = w.R21 + w.R21h + Db.transpose() * P1 * D2b;
    e.Ncheck = Pi1 * B2b + (c.C + c.Ch).transpose() * P1 * D2b + (w.S2 + w.S2h).transpose() +
               e.f.Theta1hat.transpose() * e.Jt;
    e.forcing = Pi1 * c.b + Ccheck.transpose() * P1 * c.sigma + e.f.Theta1hat.transpose() * w.rho1 + w.q;
    return e;
}

} // namespace

FollowerAdjoint solve_eta1(const ValidatedProblem& prob, const FollowerSolution& sol, const MatPath& u2_mean)
{
    const ProblemSpec& sp = prob.spec();
    if (u2_mean.rows() != sp.m2 || u2_mean.cols() != 1)
        throw DimensionMismatch("u2_mean");
    OdeField rhs = [&](double s, const Mat& eta) -> Mat {
        const EtaCoeffs e = eta_coeffs(sp, sol, s);
        return -(e.Acheck.transpose() * eta + e.Ncheck * u2_mean.at(s) + e.forcing);
    };
    IntegrateOptions opts;
    opts.label = "follower adjoint eta1";
    FollowerAdjoint adj;
    adj.eta1 = integrate_backward(rhs, sp.player1.g + sp.player1.gh, sp.grid, opts);
    adj.vbar1 = MatPath(sp.grid, sp.m1, 1);
    for (int k = 0; k < sp.grid.nodes(); ++k) {
        const double s = sp.grid.time(k);
        const EtaCoeffs e = eta_coeffs(sp, sol, s);
        const CoeffsAt& c = e.c;
        const Mat Bb = c.B1 + c.B1h, Db = c.D1 + c.D1h;
        adj.vbar1[k] = -e.f.Sigma1hat_inv * (Bb.transpose() * adj.eta1[k] + Db.transpose() * e.f.P1 * c.sigma +
                                             c.w1.rho1 + e.Jt * u2_mean[k]);
    }
    return adj;
}

double follower_value(const ValidatedProblem& prob, const FollowerSolution& sol, const FollowerAdjoint& adj,
                      const MatPath& u2_mean)
{
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = sp.grid;
    std::vector<double> integrand(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) {
        const double s = g.time(k);
        const CoeffsAt c = coeffs_at(sp, s);
        const WeightsAt& w = c.w1;
        const Mat& P1 = sol.P1[k];
        const Vec u = u2_mean[k];
        const Vec eta = adj.eta1[k];
        const Vec v = adj.vbar1[k];
        const Mat B2b = c.B2 + c.B2h, D2b = c.D2 + c.D2h;
        const Mat Ru = w.R22 + w.R22h + D2b.transpose() * P1 * D2b;
        double val = u.dot(Ru * u);
        val += 2.0 * (B2b.transpose() * eta + D2b.transpose() * P1 * c.sigma + w.rho2).dot(u);
        val += 2.0 * eta.dot(c.b);
        val += c.sigma.dot(P1 * c.sigma);
        val -= v.dot(sol.Sigma1hat[k] * v);
        integrand[k] = val;
    }
    const Vec& m = sp.xi_mean;
    double V = (sol.P1[0] * sp.xi_cov).trace() + m.dot(sol.Pi1[0] * m) + 2.0 * adj.eta1[0].col(0).dot(m);
    return V + trapezoid(integrand, g.dt());
}

} // namespace mflq
