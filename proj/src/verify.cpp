#include "mflq/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace mflq {

bool VerificationReport::pass() const
{
    for (const auto& c : checks)
        if (!c.informational && !c.pass)
            return false;
    return true;
}

const CheckResult* VerificationReport::find(const std::string& name) const
{
    for (const auto& c : checks)
        if (c.name == name)
            return &c;
    return nullptr;
}

namespace {

// All paths of one node gathered column by column.
struct NodeSample {
    Mat dX, dU1, dU2;  // fluctuations (2n×P, m1×P, m2×P)
    Vec EX, Eu1, Eu2;
};

NodeSample gather(const SimBatch& b, int k)
{
    if (!b.stored)
        throw std::invalid_argument("stationarity residuals need stored paths");
    NodeSample s;
    const int P = b.n_paths, N = 2 * b.n;
    s.EX = b.EX[k].col(0);
    s.Eu1 = b.Eu1[k].col(0);
    s.Eu2 = b.Eu2[k].col(0);
    s.dX.resize(N, P);
    s.dU1.resize(b.m1, P);
    s.dU2.resize(b.m2, P);
    for (int p = 0; p < P; ++p) {
        s.dX.col(p) = b.state(p, k) - s.EX;
        s.dU1.col(p) = b.control1(p, k) - s.Eu1;
        s.dU2.col(p) = b.control2(p, k) - s.Eu2;
    }
    return s;
}

// Accumulates a sum of terms, each given per path as a column, and tracks the
// largest column norm of the sum and of any single term.
struct TermSum {
    Mat sum;
    double scale = 0.0;

    void add(const Mat& term)
    {
        if (sum.size() == 0)
            sum = Mat::Zero(term.rows(), term.cols());
        sum += term;
        scale = std::max(scale, term.colwise().norm().maxCoeff());
    }
    // A term that is the same on every path.
    void add_const(const Vec& v, int P)
    {
        add(v.replicate(1, P));
    }
};

void record(Residual& r, const TermSum& t, int k)
{
    Eigen::Index col = 0;
    const double v = t.sum.colwise().norm().maxCoeff(&col);
    if (v > r.value || r.path < 0) {
        r.value = std::max(r.value, v);
        r.path = static_cast<int>(col);
        r.node = k;
    }
    r.scale = std::max(r.scale, t.scale);
}

// Z̄ − EZ̄ and EZ̄ rebuilt from Y and the realized leader control.
struct ZRebuild {
    Mat dZ;
    Vec EZ;
};

ZRebuild rebuild_z(const AugPoint& a, const LeaderPoint& p, const Mat& P2, const Mat& Pi2, const Vec& eta2,
                   const NodeSample& s)
{
    ZRebuild z;
    const Mat CtP = a.cCt + a.cFt.transpose() * P2;
    const Mat CcP = a.cCc + a.cFc.transpose() * Pi2;
    z.dZ = p.Wt * (CtP * s.dX + a.cDt * s.dU2);
    z.EZ = p.Wc * (CcP * s.EX + a.cFc.transpose() * eta2 + a.cDc * s.Eu2 + a.vsigc);
    return z;
}

} // namespace

Residual stationarity_residual_follower(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                                        const LeaderSolution& lsol, const SimBatch& batch)
{
    const ProblemSpec& sp = prob.spec();
    const int n = sp.n, P = batch.n_paths;
    const Mat M2 = select2(n);
    Residual r;
    for (int k = 0; k < batch.grid.nodes(); ++k) {
        const AugPoint& a = aug[k];
        const CoeffsAt& c = a.c;
        const WeightsAt& w = c.w1;
        const LeaderPoint p = lsol.point_node(aug, k);
        const NodeSample s = gather(batch, k);
        const ZRebuild z = rebuild_z(a, p, lsol.P2[k], lsol.Pi2[k], lsol.eta2[k].col(0), s);
        const Mat& P1 = a.f.P1;
        const Mat& Pi1 = a.f.Pi1;

        const Mat dx = s.dX.topRows(n);
        const Vec Ex = s.EX.head(n);
        const Mat deta = M2 * lsol.P2[k] * s.dX;
        const Vec Eeta = M2 * (lsol.Pi2[k] * s.EX + lsol.eta2[k].col(0));
        const Mat dzeta = M2 * z.dZ;
        const Vec Ezeta = M2 * z.EZ;
        // Diffusion of the state split into fluctuation and mean.
        const Mat ddiff = c.C * dx + c.D1 * s.dU1 + c.D2 * s.dU2;
        const Vec Ediff = (c.C + c.Ch) * Ex + (c.D1 + c.D1h) * s.Eu1 + (c.D2 + c.D2h) * s.Eu2 + c.sigma;
        const Mat dy = P1 * dx + deta;
        const Vec Ey = Pi1 * Ex + Eeta;
        const Mat dz = P1 * ddiff + dzeta;
        const Vec Ez = P1 * Ediff + Ezeta;

        TermSum t;
        t.add(c.B1.transpose() * dy);
        t.add_const((c.B1 + c.B1h).transpose() * Ey, P);
        t.add(c.D1.transpose() * dz);
        t.add_const((c.D1 + c.D1h).transpose() * Ez, P);
        t.add(w.S1 * dx);
        t.add_const((w.S1 + w.S1h) * Ex, P);
        t.add(w.R11 * s.dU1);
        t.add_const((w.R11 + w.R11h) * s.Eu1, P);
        t.add(w.R21 * s.dU2);
        t.add_const((w.R21 + w.R21h) * s.Eu2, P);
        t.add_const(w.rho1, P);
        record(r, t, k);
    }
    return r;
}

Residual stationarity_residual_leader(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                                      const LeaderSolution& lsol, const SimBatch& batch)
{
    (void)prob;
    const int P = batch.n_paths;
    Residual r;
    for (int k = 0; k < batch.grid.nodes(); ++k) {
        const AugPoint& a = aug[k];
        const LeaderPoint p = lsol.point_node(aug, k);
        const NodeSample s = gather(batch, k);
        const ZRebuild z = rebuild_z(a, p, lsol.P2[k], lsol.Pi2[k], lsol.eta2[k].col(0), s);
        const Mat dY = lsol.P2[k] * s.dX;
        const Vec EY = lsol.Pi2[k] * s.EX + lsol.eta2[k].col(0);

        TermSum t;
        t.add(a.cNt.transpose() * s.dX);
        t.add_const(a.cNc.transpose() * s.EX, P);
        t.add(a.cBt.transpose() * dY);
        t.add_const(a.cBc.transpose() * EY, P);
        t.add(a.cDt.transpose() * z.dZ);
        t.add_const(a.cDc.transpose() * z.EZ, P);
        t.add(a.Rt * s.dU2);
        t.add_const(a.Rc * s.Eu2, P);
        t.add_const(a.rhoc, P);
        record(r, t, k);
    }
    return r;
}

namespace {

Mat mean_big_weight(const AugPoint& a)
{
    const int n = static_cast<int>(a.Ac.rows());
    const int m2 = static_cast<int>(a.Rc.rows());
    Mat W(3 * n + m2, 3 * n + m2);
    W << a.Q11c, a.Q12c.transpose(), a.Q13c.transpose(), a.S1c.transpose(), a.Q12c, a.Q22c, a.Q23c.transpose(),
        a.S2c.transpose(), a.Q13c, a.Q23c, a.Q33c, a.S3c.transpose(), a.S1c, a.S2c, a.S3c, a.Rc;
    return W;
}

} // namespace

double convexity_form(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const MatPath& u2)
{
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = sp.grid;
    const int n = sp.n, m2 = sp.m2;
    if (u2.rows() != m2 || u2.cols() != 1)
        throw DimensionMismatch("u2");

    // Homogeneous follower adjoint: deterministic, so ζ ≡ 0 and only its mean moves.
    IntegrateOptions ob;
    ob.label = "homogeneous follower adjoint";
    const MatPath eta = integrate_backward(
        [&](double s, const Mat& e) -> Mat {
            const AugPoint a = aug.at(s);
            return -(a.Ac.transpose() * e + a.Nc * u2.at(s));
        },
        Mat::Zero(n, 1), g, ob);

    // Mean of x in column 0, covariance of x − Ex in the remaining columns.
    IntegrateOptions of;
    of.label = "homogeneous state moments";
    const MatPath mom = integrate_forward(
        [&](double s, const Mat& y) -> Mat {
            const AugPoint a = aug.at(s);
            const Vec Ex = y.col(0);
            const Mat Cov = y.rightCols(n);
            const Vec e = eta.at(s);
            const Vec u = u2.at(s);
            const Vec v = a.Cc * Ex + a.Fc.transpose() * e + a.Dc * u;
            Mat d(n, n + 1);
            d.col(0) = a.Ac * Ex + a.Mc * e + a.Bc * u;
            d.rightCols(n) = a.At * Cov + Cov * a.At.transpose() + a.Ct * Cov * a.Ct.transpose() + v * v.transpose();
            return d;
        },
        Mat::Zero(n, n + 1), g, of);

    std::vector<double> f(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) {
        const AugPoint& a = aug[k];
        Vec z = Vec::Zero(3 * n + m2);
        z.head(n) = mom[k].col(0);
        z.segment(n, n) = eta[k].col(0);
        z.tail(m2) = u2[k].col(0);
        f[k] = (a.Q11t * mom[k].rightCols(n)).trace() + z.dot(mean_big_weight(a) * z);
    }
    const Vec ExT = mom[g.n_steps].col(0);
    const Mat CovT = mom[g.n_steps].rightCols(n);
    return (sp.player2.G * CovT).trace() + ExT.dot((sp.player2.G + sp.player2.Gh) * ExT) + trapezoid(f, g.dt());
}

double convexity_sample(const ValidatedProblem& prob, const AugmentedCoefficients& aug, int n_dirs,
                        std::uint64_t seed)
{
    const DirectionSet dirs = random_directions(prob, Player::leader, n_dirs, seed);
    double best = std::numeric_limits<double>::infinity();
    for (const MatPath& w : dirs.w)
        best = std::min(best, convexity_form(prob, aug, w));
    return best;
}

ValueMatch value_match(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const FollowerSolution& fsol,
                       const LeaderSolution& lsol, const SimBatch& batch)
{
    (void)prob;
    (void)fsol;
    ValueMatch v;
    v.V1 = follower_value_equilibrium(aug, lsol);
    v.V2 = lsol.V2;
    v.mc = batch.costs;
    v.gap1 = std::abs(v.mc.J1_mean - v.V1);
    v.gap2 = std::abs(v.mc.J2_mean - v.V2);
    v.tol1 = std::max(3.0 * v.mc.J1_se, 0.02 * std::abs(v.V1));
    v.tol2 = std::max(3.0 * v.mc.J2_se, 0.02 * std::abs(v.V2));
    return v;
}

bool hatted_data_zero(const ProblemSpec& sp)
{
    auto zero = [](const MatPath& p) { return p.max_abs() == 0.0; };
    for (const MatPath* p : {&sp.Ah, &sp.B1h, &sp.B2h, &sp.Ch, &sp.D1h, &sp.D2h})
        if (!zero(*p))
            return false;
    for (int i = 1; i <= 2; ++i) {
        const PlayerWeights& w = sp.player(i);
        for (const MatPath* p : {&w.Qh, &w.S1h, &w.S2h, &w.R11h, &w.R12h, &w.R21h, &w.R22h})
            if (!zero(*p))
                return false;
        if (w.Gh.cwiseAbs().maxCoeff() != 0.0 || w.gh.cwiseAbs().maxCoeff() != 0.0)
            return false;
    }
    return true;
}

ReductionGaps reduction_check(const ValidatedProblem& prob, const Tolerances& tol)
{
    const FollowerSolution fsol = solve_follower_riccati(prob, tol);
    const AugmentedCoefficients aug = build_augmented(prob, fsol);
    const LeaderSolution lsol = solve_leader(aug, tol);
    ReductionGaps r;
    r.hats_zero = hatted_data_zero(prob.spec());
    for (int k = 0; k < prob->grid.nodes(); ++k) {
        r.Pi1_P1 = std::max(r.Pi1_P1, (fsol.Pi1[k] - fsol.P1[k]).cwiseAbs().maxCoeff());
        r.Pi2_P2 = std::max(r.Pi2_P2, (lsol.Pi2[k] - lsol.P2[k]).cwiseAbs().maxCoeff());
        r.ThetaHat_Theta = std::max(r.ThetaHat_Theta, (lsol.ThetaHatBold[k] - lsol.ThetaBold[k]).cwiseAbs().maxCoeff());
    }
    return r;
}

const std::vector<std::string>& check_names()
{
    static const std::vector<std::string> names{"stationarity_follower", "stationarity_leader", "convexity",
                                                "value_match",           "perturbation_leader", "perturbation_follower",
                                                "reduction",             "dp_oracle"};
    return names;
}

bool check_enabled(const VerifyOptions& o, const std::string& name)
{
    return o.checks.empty() || std::find(o.checks.begin(), o.checks.end(), name) != o.checks.end();
}

namespace {

template <class F>
CheckResult timed(const std::string& name, F&& f)
{
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult c = f();
    c.name = name;
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

CheckResult perturbation_check(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                               const FollowerSolution& fsol, const LeaderSolution& lsol, Player who,
                               const VerifyOptions& o)
{
    const DirectionSet dirs = random_directions(prob, who, o.n_dirs, o.seed);
    SimOptions so = o.sim;
    so.store_paths = false;
    const PerturbationSweep sw = perturbation_sweep(prob, aug, fsol, lsol, dirs, o.eps, o.n_paths, o.seed, so);
    // Smallest (J(ε) − J(0)) / SE over all directions and ε; the bound is −3.
    double worst = std::numeric_limits<double>::infinity();
    int failures = 0;
    for (int j = 0; j < sw.diff_mean.rows(); ++j)
        for (int e = 0; e < sw.diff_mean.cols(); ++e) {
            const double m = sw.diff_mean(j, e), se = sw.diff_se(j, e);
            const double z = se > 0 ? m / se : (m >= 0 ? std::numeric_limits<double>::infinity() : -1e300);
            worst = std::min(worst, z);
            if (m < -3.0 * se)
                ++failures;
        }
    CheckResult c;
    c.value = worst;
    c.tolerance = -3.0;
    c.pass = failures == 0;
    std::ostringstream os;
    os << sw.diff_mean.size() << " samples, " << failures << " below -3 SE; "
       << (c.pass ? "consistent with optimality" : "optimality refuted");
    c.detail = os.str();
    return c;
}

} // namespace

VerificationReport verify_all(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                              const FollowerSolution& fsol, const LeaderSolution& lsol, const SimBatch& batch,
                              const VerifyOptions& o)
{
    VerificationReport rep;
    const double rtol = o.tol.tol_residual;
    if (check_enabled(o, "stationarity_follower"))
        rep.add(timed("stationarity_follower", [&] {
            const Residual r = stationarity_residual_follower(prob, aug, lsol, batch);
            CheckResult c;
            c.value = r.value;
            c.tolerance = rtol * (1.0 + r.scale);
            c.pass = r.value <= c.tolerance;
            std::ostringstream os;
            os << "largest at path " << r.path << ", node " << r.node << "; term scale " << r.scale;
            c.detail = os.str();
            return c;
        }));
    if (check_enabled(o, "stationarity_leader"))
        rep.add(timed("stationarity_leader", [&] {
            const Residual r = stationarity_residual_leader(prob, aug, lsol, batch);
            CheckResult c;
            c.value = r.value;
            c.tolerance = rtol * (1.0 + r.scale);
            c.pass = r.value <= c.tolerance;
            std::ostringstream os;
            os << "largest at path " << r.path << ", node " << r.node << "; term scale " << r.scale;
            c.detail = os.str();
            return c;
        }));
    if (check_enabled(o, "convexity"))
        rep.add(timed("convexity", [&] {
            CheckResult c;
            c.value = convexity_sample(prob, aug, o.n_dirs, o.seed);
            c.tolerance = -1e-10;
            c.pass = c.value >= c.tolerance;
            c.detail = "minimum of the leader's second-order form over sampled directions";
            return c;
        }));
    if (check_enabled(o, "value_match"))
        rep.add(timed("value_match", [&] {
            const ValueMatch v = value_match(prob, aug, fsol, lsol, batch);
            CheckResult c;
            c.value = std::max(v.gap1 / v.tol1, v.gap2 / v.tol2);
            c.tolerance = 1.0;
            c.pass = v.pass();
            std::ostringstream os;
            os.precision(10);
            os << "V1=" << v.V1 << " J1=" << v.mc.J1_mean << "±" << v.mc.J1_se << "; V2=" << v.V2
               << " J2=" << v.mc.J2_mean << "±" << v.mc.J2_se;
            c.detail = os.str();
            return c;
        }));
    if (check_enabled(o, "perturbation_leader"))
        rep.add(timed("perturbation_leader",
                      [&] { return perturbation_check(prob, aug, fsol, lsol, Player::leader, o); }));
    if (check_enabled(o, "perturbation_follower"))
        rep.add(timed("perturbation_follower",
                      [&] { return perturbation_check(prob, aug, fsol, lsol, Player::follower, o); }));
    if (check_enabled(o, "reduction"))
        rep.add(timed("reduction", [&] {
            const ReductionGaps r = reduction_check(prob, o.tol);
            CheckResult c;
            c.value = std::max({r.Pi1_P1, r.Pi2_P2, r.ThetaHat_Theta});
            c.tolerance = 1e-9;
            c.informational = !r.hats_zero;
            c.pass = r.pass();
            std::ostringstream os;
            os << "|Pi1-P1|=" << r.Pi1_P1 << " |Pi2-P2|=" << r.Pi2_P2 << " |ThetaHat-Theta|=" << r.ThetaHat_Theta
               << (r.hats_zero ? "" : " (mean-field data present: informational)");
            c.detail = os.str();
            return c;
        }));
    if (check_enabled(o, "dp_oracle") && prob->n <= 2)
        rep.add(timed("dp_oracle", [&] {
            const DpResult d = dp_oracle(prob, fsol, aug, lsol);
            CheckResult c;
            c.value = d.gap_rel;
            c.tolerance = 0.05;
            c.pass = d.gap_rel <= c.tolerance;
            std::ostringstream os;
            os << "follower gap " << d.gap_follower << ", leader gap " << d.gap_leader << " at " << d.n_steps
               << " steps";
            c.detail = os.str();
            return c;
        }));
    return rep;
}

} // namespace mflq
