#include "mflq/simulate.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <tuple>
#include <random>
#include <string>
#include <thread>

namespace mflq {

double pairwise_sum(const double* v, std::size_t n)
{
    if (n <= 8) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += v[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

std::pair<double, double> mean_and_se(const std::vector<double>& v)
{
    const std::size_t n = v.size();
    if (n == 0)
        return {0.0, 0.0};
    const double mean = pairwise_sum(v.data(), n) / static_cast<double>(n);
    if (n == 1)
        return {mean, 0.0};
    // Deviations are taken from the first sample, so identical samples give exactly zero.
    std::vector<double> d(n), sq(n);
    for (std::size_t i = 0; i < n; ++i)
        d[i] = v[i] - v[0];
    const double dmean = pairwise_sum(d.data(), n) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        sq[i] = (d[i] - dmean) * (d[i] - dmean);
    const double var = pairwise_sum(sq.data(), n) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

int worker_count(int requested, int work_items)
{
    int t = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (t < 1)
        t = 1;
    if (const char* env = std::getenv("MFLQ_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < t)
            t = cap;
    }
    if (work_items >= 1 && t > work_items)
        t = work_items;
    return t < 1 ? 1 : t;
}

Vec SimBatch::state(int path, int node) const
{
    const int d = 2 * n;
    return Eigen::Map<const Vec>(X.data() + (static_cast<std::size_t>(path) * grid.nodes() + node) * d, d);
}

Vec SimBatch::control1(int path, int node) const
{
    return Eigen::Map<const Vec>(U1.data() + (static_cast<std::size_t>(path) * grid.nodes() + node) * m1, m1);
}

Vec SimBatch::control2(int path, int node) const
{
    return Eigen::Map<const Vec>(U2.data() + (static_cast<std::size_t>(path) * grid.nodes() + node) * m2, m2);
}

double running_cost(const WeightsAt& w, const Vec& x, const Vec& u1, const Vec& u2, const Vec& Ex, const Vec& Eu1,
                    const Vec& Eu2)
{
    const Vec dx = x - Ex, d1 = u1 - Eu1, d2 = u2 - Eu2;
    double v = dx.dot(w.Q * dx) + Ex.dot((w.Q + w.Qh) * Ex);
    v += 2.0 * d1.dot(w.S1 * dx) + 2.0 * Eu1.dot((w.S1 + w.S1h) * Ex);
    v += 2.0 * d2.dot(w.S2 * dx) + 2.0 * Eu2.dot((w.S2 + w.S2h) * Ex);
    v += d1.dot(w.R11 * d1) + Eu1.dot((w.R11 + w.R11h) * Eu1);
    v += 2.0 * d1.dot(w.R21 * d2) + 2.0 * Eu1.dot((w.R21 + w.R21h) * Eu2);
    v += d2.dot(w.R22 * d2) + Eu2.dot((w.R22 + w.R22h) * Eu2);
    v += 2.0 * (w.q.dot(x) + w.rho1.dot(u1) + w.rho2.dot(u2));
    return v;
}

double terminal_cost(const PlayerWeights& w, const Vec& x, const Vec& Ex)
{
    const Vec dx = x - Ex;
    return dx.dot(w.G * dx) + Ex.dot((w.G + w.Gh) * Ex) + 2.0 * w.g.dot(x) + 2.0 * w.gh.dot(Ex);
}

namespace {

// Static contiguous chunks; exceptions are rethrown from the lowest chunk.
template <class F>
void parallel_for(int n, int threads, F&& f)
{
    const int t = worker_count(threads, n);
    if (t <= 1) {
        for (int i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::exception_ptr> errs(t);
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (int w = 0; w < t; ++w) {
        const int lo = static_cast<int>(static_cast<long long>(n) * w / t);
        const int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / t);
        pool.emplace_back([&, lo, hi, w] {
            try {
                for (int i = lo; i < hi; ++i)
                    f(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    for (auto& e : errs)
        if (e)
            std::rethrow_exception(e);
}

std::mt19937_64 path_generator(std::uint64_t seed, std::uint64_t path)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
    return std::mt19937_64(seq);
}

Mat cov_factor(const Mat& cov)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (cov + cov.transpose()));
    Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal();
}

// Quadratic weight of the fluctuation variables (x, u₁, u₂) and of their means.
Mat fluct_weight(const WeightsAt& w)
{
    const int n = static_cast<int>(w.Q.rows()), m1 = static_cast<int>(w.R11.rows()),
              m2 = static_cast<int>(w.R22.rows());
    Mat W(n + m1 + m2, n + m1 + m2);
    W << w.Q, w.S1.transpose(), w.S2.transpose(), w.S1, w.R11, w.R21, w.S2, w.R21.transpose(), w.R22;
    return W;
}

Mat mean_weight(const WeightsAt& w)
{
    const int n = static_cast<int>(w.Q.rows()), m1 = static_cast<int>(w.R11.rows()),
              m2 = static_cast<int>(w.R22.rows());
    const Mat S1 = w.S1 + w.S1h, S2 = w.S2 + w.S2h, R21 = w.R21 + w.R21h;
    Mat W(n + m1 + m2, n + m1 + m2);
    W << w.Q + w.Qh, S1.transpose(), S2.transpose(), S1, w.R11 + w.R11h, R21, S2, R21.transpose(), w.R22 + w.R22h;
    return W;
}

Vec linear_weight(const WeightsAt& w)
{
    Vec l(w.q.size() + w.rho1.size() + w.rho2.size());
    l << w.q, w.rho1, w.rho2;
    return l;
}

struct NodeMaps {
    Mat Ad, Cd;  // drift and diffusion of X̄ − EX̄ acting on X̄ − EX̄
    Vec d;       // diffusion part driven by the means
    Mat U1, U2;  // fluctuation feedback of both controls on X̄ − EX̄
    Vec EX, Eu1, Eu2;
    WeightsAt w1, w2;
    Mat W1, W2;  // fluctuation weights of both players
    Vec l1, l2;
    double c1 = 0.0, c2 = 0.0;  // mean-channel part of both running costs
    Mat A, C, B1, D1;
};

struct Equilibrium {
    ValidatedProblem prob;
    std::vector<NodeMaps> nodes;
    Mat L0;
    MatPath EX, Eu1, Eu2;
    double cT1 = 0.0, cT2 = 0.0;  // mean-channel part of both terminal costs
};

Equilibrium build_equilibrium(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                              const LeaderSolution& lsol, const SimOptions& opts)
{
    const ProblemSpec& sp = prob.spec();
    const int n = sp.n, N = 2 * n;
    const Mat M1 = select1(n), M2 = select2(n);
    Equilibrium eq;
    eq.prob = prob;
    eq.L0 = cov_factor(sp.xi_cov);
    eq.EX = propagate_mean(aug, lsol);
    eq.Eu1 = MatPath(sp.grid, sp.m1, 1);
    eq.Eu2 = MatPath(sp.grid, sp.m2, 1);
    eq.nodes.resize(sp.grid.nodes());
    for (int k = 0; k < sp.grid.nodes(); ++k) {
        const AugPoint& a = aug[k];
        const CoeffsAt& c = a.c;
        const LeaderPoint p = lsol.point_node(aug, k);
        const Mat& P2 = lsol.P2[k];
        NodeMaps& nm = eq.nodes[k];

        Mat shift2 = Mat::Zero(sp.m2, N);
        shift2.leftCols(n).setConstant(opts.leader_gain_shift);
        nm.U2 = p.Theta + shift2;
        const Mat CtP = a.cCt + a.cFt.transpose() * P2;
        const Mat Zmap = p.Wt * (CtP + a.cDt * nm.U2);
        const Mat Lt1 = c.w1.R21 + c.D1.transpose() * a.f.P1 * c.D2;
        const Mat Th1 = a.f.Theta1 + Mat::Constant(sp.m1, n, opts.follower_gain_shift);
        nm.U1 = Th1 * M1 - a.f.Sigma1_inv * (c.B1.transpose() * M2 * P2 + c.D1.transpose() * M2 * Zmap + Lt1 * nm.U2);

        nm.Ad.resize(N, N);
        nm.Ad.topRows(n) = c.A * M1 + c.B1 * nm.U1 + c.B2 * nm.U2;
        nm.Ad.bottomRows(n) = M2 * (a.cAt + a.cMt * P2 + a.cFt * Zmap + a.cBt * nm.U2);
        nm.Cd.resize(N, N);
        nm.Cd.topRows(n) = c.C * M1 + c.D1 * nm.U1 + c.D2 * nm.U2;
        nm.Cd.bottomRows(n) = M2 * (a.cCt + a.cFt.transpose() * P2 + a.cKt * Zmap + a.cDt * nm.U2);

        nm.EX = eq.EX[k].col(0);
        nm.Eu1 = p.Theta1hb * nm.EX + p.V1c;
        nm.Eu2 = p.ThetaHat * nm.EX + p.V2c;
        eq.Eu1[k] = nm.Eu1;
        eq.Eu2[k] = nm.Eu2;
        const Vec Ex = nm.EX.head(n);
        nm.d.resize(N);
        nm.d.head(n) = (c.C + c.Ch) * Ex + a.Dacute * nm.Eu1 + (c.D2 + c.D2h) * nm.Eu2 + c.sigma;
        nm.d.tail(n) = M2 * (p.CCc * nm.EX + p.DDc);

        nm.w1 = c.w1;
        nm.w2 = c.w2;
        nm.W1 = fluct_weight(c.w1);
        nm.W2 = fluct_weight(c.w2);
        nm.l1 = linear_weight(c.w1);
        nm.l2 = linear_weight(c.w2);
        Vec zeta(n + sp.m1 + sp.m2);
        zeta << Ex, nm.Eu1, nm.Eu2;
        nm.c1 = zeta.dot(mean_weight(c.w1) * zeta) + 2.0 * nm.l1.dot(zeta);
        nm.c2 = zeta.dot(mean_weight(c.w2) * zeta) + 2.0 * nm.l2.dot(zeta);
        nm.A = c.A;
        nm.C = c.C;
        nm.B1 = c.B1;
        nm.D1 = c.D1;
    }
    const Vec ExT = eq.nodes.back().EX.head(n);
    eq.cT1 = terminal_cost(sp.player1, ExT, ExT);
    eq.cT2 = terminal_cost(sp.player2, ExT, ExT);
    return eq;
}

// Linear response of the state to a family of perturbation directions. For each
// direction j the perturbed run is (x + εΔx, u₁ + εΔu₁, u₂ + εΔu₂) with
// Δu₁ − EΔu₁ = Gd(Δx − EΔx) + κ_j(x − Ex) and Δu₂ deterministic.
struct DirNode {
    Mat EDx, Dmu1, Dmu2;  // means (n×nd, m1×nd, m2×nd)
    Mat Dmean;            // mean-driven part of the diffusion of Δx (n×nd)
    Mat Gd;               // m1×n
};

struct DirData {
    int nd = 0;
    Mat Kstack;  // (nd·m1)×n, rows of κ_j stacked direction by direction
    std::vector<DirNode> nodes;
    // Deterministic mean-channel parts of the first and second order cost terms.
    Vec Lm1, Qm1, Lm2, Qm2;
};

DirData build_directions(const ValidatedProblem& prob, const FollowerSolution& fsol, const Equilibrium& eq,
                         const DirectionSet& dirs, const std::vector<int>& which)
{
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = sp.grid;
    const int n = sp.n, m1 = sp.m1, m2 = sp.m2;
    DirData dd;
    dd.nd = static_cast<int>(which.size());
    dd.nodes.resize(g.nodes());
    for (auto& dn : dd.nodes) {
        dn.EDx = Mat::Zero(n, dd.nd);
        dn.Dmu1 = Mat::Zero(m1, dd.nd);
        dn.Dmu2 = Mat::Zero(m2, dd.nd);
        dn.Dmean = Mat::Zero(n, dd.nd);
    }
    dd.Kstack = Mat::Zero(static_cast<Eigen::Index>(dd.nd) * m1, n);

    const bool leader = dirs.player == Player::leader;
    ValidatedProblem hom;
    if (leader) {
        ProblemSpec hs = sp;
        hs.b = MatPath::constant(g, Mat::Zero(n, 1));
        hs.sigma = MatPath::constant(g, Mat::Zero(n, 1));
        hs.player1.q = MatPath::constant(g, Mat::Zero(n, 1));
        hs.player1.rho1 = MatPath::constant(g, Mat::Zero(m1, 1));
        hs.player1.rho2 = MatPath::constant(g, Mat::Zero(m2, 1));
        hs.player1.g = Vec::Zero(n);
        hs.player1.gh = Vec::Zero(n);
        hs.xi_mean = Vec::Zero(n);
        hom = validate(hs);
    }

    for (int j = 0; j < dd.nd; ++j) {
        const MatPath& w = dirs.w.at(which[j]);
        MatPath Dv;  // mean of the follower's response, for the leader's directions
        OdeField rhs;
        if (leader) {
            Dv = solve_eta1(hom, fsol, w).vbar1;
            rhs = [&](double s, const Mat& m) -> Mat {
                const CoeffsAt c = coeffs_at(sp, s);
                const FollowerPoint f = follower_point_at(sp, fsol, s);
                const Mat Bb = c.B1 + c.B1h;
                return (c.A + c.Ah + Bb * f.Theta1hat) * m + Bb * Dv.at(s) + (c.B2 + c.B2h) * w.at(s);
            };
        } else {
            rhs = [&](double s, const Mat& m) -> Mat {
                const CoeffsAt c = coeffs_at(sp, s);
                return (c.A + c.Ah) * m + (c.B1 + c.B1h) * w.at(s);
            };
            dd.Kstack.middleRows(static_cast<Eigen::Index>(j) * m1, m1) = dirs.kappa.at(which[j]);
        }
        IntegrateOptions opts;
        opts.label = "mean of the perturbation response";
        const MatPath EDx = integrate_forward(rhs, Mat::Zero(n, 1), g, opts);
        for (int k = 0; k < g.nodes(); ++k) {
            DirNode& dn = dd.nodes[k];
            dn.EDx.col(j) = EDx[k].col(0);
            if (leader) {
                dn.Dmu1.col(j) = fsol.Theta1hat[k] * EDx[k].col(0) + Dv[k].col(0);
                dn.Dmu2.col(j) = w[k].col(0);
            } else {
                dn.Dmu1.col(j) = w[k].col(0);
            }
        }
    }

    dd.Lm1 = Vec::Zero(dd.nd);
    dd.Qm1 = Vec::Zero(dd.nd);
    dd.Lm2 = Vec::Zero(dd.nd);
    dd.Qm2 = Vec::Zero(dd.nd);
    const double h = g.dt();
    for (int k = 0; k < g.nodes(); ++k) {
        DirNode& dn = dd.nodes[k];
        const CoeffsAt c = coeffs_at(sp, g.time(k));
        dn.Gd = leader ? fsol.Theta1[k] : Mat::Zero(m1, n);
        dn.Dmean = (c.C + c.Ch) * dn.EDx + (c.D1 + c.D1h) * dn.Dmu1 + (c.D2 + c.D2h) * dn.Dmu2;

        const NodeMaps& nm = eq.nodes[k];
        const double wk = (k == 0 || k == g.n_steps) ? 0.5 * h : h;
        Vec zeta(n + m1 + m2);
        zeta << nm.EX.head(n), nm.Eu1, nm.Eu2;
        Mat Dz(n + m1 + m2, dd.nd);
        Dz << dn.EDx, dn.Dmu1, dn.Dmu2;
        for (int p = 1; p <= 2; ++p) {
            const WeightsAt& wt = p == 1 ? c.w1 : c.w2;
            const Mat Wm = mean_weight(wt);
            const Vec l = linear_weight(wt);
            const Vec Lk = 2.0 * Dz.transpose() * (Wm * zeta + l);
            const Vec Qk = Dz.cwiseProduct(Wm * Dz).colwise().sum().transpose();
            (p == 1 ? dd.Lm1 : dd.Lm2) += wk * Lk;
            (p == 1 ? dd.Qm1 : dd.Qm2) += wk * Qk;
        }
    }
    const NodeMaps& last = eq.nodes.back();
    const Vec ExT = last.EX.head(n);
    const Mat& EDT = dd.nodes.back().EDx;
    for (int p = 1; p <= 2; ++p) {
        const PlayerWeights& pw = sp.player(p);
        const Mat Gm = pw.G + pw.Gh;
        const Vec l = pw.g + pw.gh;
        (p == 1 ? dd.Lm1 : dd.Lm2) += 2.0 * EDT.transpose() * (Gm * ExT + l);
        (p == 1 ? dd.Qm1 : dd.Qm2) += EDT.cwiseProduct(Gm * EDT).colwise().sum().transpose();
    }
    return dd;
}

struct EngineOut {
    std::vector<double> X, U1, U2;
    std::vector<double> J1, J2;
    // Per path and direction: first and second order cost terms (fluctuation part).
    std::vector<double> L1, Q1, L2, Q2;
};

// One path of the equilibrium, with optional perturbation responses. The base
// path is computed by the same instructions whether or not directions are given.
void run_path(const Equilibrium& eq, const DirData* dd, bool store, double store_eps, std::uint64_t seed, int path,
              EngineOut& out)
{
    const ProblemSpec& sp = eq.prob.spec();
    const TimeGrid& g = sp.grid;
    const int n = sp.n, m1 = sp.m1, m2 = sp.m2, N = 2 * n, nodes = g.nodes(), nz = n + m1 + m2;
    const double h = g.dt(), sh = std::sqrt(h);
    const int nd = dd ? dd->nd : 0;

    std::mt19937_64 gen = path_generator(seed, static_cast<std::uint64_t>(path));
    std::normal_distribution<double> normal(0.0, 1.0);

    Vec z0(n);
    for (int i = 0; i < n; ++i)
        z0(i) = normal(gen);
    Vec dX = Vec::Zero(N), next(N), tmp(N);
    dX.head(n).noalias() = eq.L0 * z0;
    Vec du1(m1), du2(m2), z(nz), Wz(nz);

    Mat dD = Mat::Zero(n, nd), nextD(n, nd), tmpD(n, nd);
    Mat DU1(m1, nd), Dz = Mat::Zero(nz, nd), WDz(nz, nd);
    Vec kx(static_cast<Eigen::Index>(nd) * m1);
    Vec L1 = Vec::Zero(nd), Q1 = Vec::Zero(nd), L2 = Vec::Zero(nd), Q2 = Vec::Zero(nd), tl(nd);

    // Fluctuation part zᵀWz + 2lᵀz of one player's cost and its perturbation terms.
    auto accumulate = [&](const Mat& W, const Vec& l, double wk, double& J, Vec& L, Vec& Q) {
        Wz.noalias() = W * z;
        J += wk * (z.dot(Wz) + 2.0 * l.dot(z));
        if (dd) {
            Wz += l;
            tl.noalias() = Dz.transpose() * Wz;
            L += (2.0 * wk) * tl;
            WDz.noalias() = W * Dz;
            for (int j = 0; j < nd; ++j)
                Q(j) += wk * Dz.col(j).dot(WDz.col(j));
        }
    };

    double J1 = 0.0, J2 = 0.0;
    for (int k = 0; k < nodes; ++k) {
        const NodeMaps& nm = eq.nodes[k];
        du1.noalias() = nm.U1 * dX;
        du2.noalias() = nm.U2 * dX;
        if (!dX.allFinite() || !du1.allFinite() || !du2.allFinite())
            throw NonFiniteState("simulated path " + std::to_string(path), k);
        z.head(n) = dX.head(n);
        z.segment(n, m1) = du1;
        z.tail(m2) = du2;

        if (dd) {
            const DirNode& dn = dd->nodes[k];
            DU1.noalias() = dn.Gd * dD;
            if (dd->Kstack.size() > 0) {
                kx.noalias() = dd->Kstack * dX.head(n);
                DU1 += Eigen::Map<const Mat>(kx.data(), m1, nd);
            }
            Dz.topRows(n) = dD;
            Dz.middleRows(n, m1) = DU1;
        }

        if (store) {
            const std::size_t base = static_cast<std::size_t>(path) * nodes + k;
            Eigen::Map<Vec> Xs(out.X.data() + base * N, N);
            Eigen::Map<Vec> u1s(out.U1.data() + base * m1, m1);
            Eigen::Map<Vec> u2s(out.U2.data() + base * m2, m2);
            Xs = nm.EX + dX;
            u1s = nm.Eu1 + du1;
            u2s = nm.Eu2 + du2;
            if (dd && nd == 1) {
                const DirNode& dn = dd->nodes[k];
                Xs.head(n) += store_eps * (dD.col(0) + dn.EDx.col(0));
                u1s += store_eps * (DU1.col(0) + dn.Dmu1.col(0));
                u2s += store_eps * dn.Dmu2.col(0);
            }
        }

        const double wk = (k == 0 || k == g.n_steps) ? 0.5 * h : h;
        J1 += wk * nm.c1;
        J2 += wk * nm.c2;
        accumulate(nm.W1, nm.l1, wk, J1, L1, Q1);
        accumulate(nm.W2, nm.l2, wk, J2, L2, Q2);

        if (k == g.n_steps) {
            J1 += eq.cT1;
            J2 += eq.cT2;
            z.resize(n);
            z = dX.head(n);
            if (dd) {
                Dz.resize(n, nd);
                Dz = dD;
                WDz.resize(n, nd);
            }
            Wz.resize(n);
            accumulate(sp.player1.G, sp.player1.g, 1.0, J1, L1, Q1);
            accumulate(sp.player2.G, sp.player2.g, 1.0, J2, L2, Q2);
            break;
        }

        const double dw = sh * normal(gen);
        if (dd) {
            const DirNode& dn = dd->nodes[k];
            nextD.noalias() = nm.A * dD;
            nextD.noalias() += nm.B1 * DU1;
            nextD *= h;
            nextD += dD;
            tmpD.noalias() = nm.C * dD;
            tmpD.noalias() += nm.D1 * DU1;
            tmpD += dn.Dmean;
            nextD += dw * tmpD;
            dD.swap(nextD);
        }
        next.noalias() = nm.Ad * dX;
        next *= h;
        next += dX;
        tmp.noalias() = nm.Cd * dX;
        tmp += nm.d;
        next += dw * tmp;
        dX.swap(next);
    }
    out.J1[path] = J1;
    out.J2[path] = J2;
    for (int j = 0; j < nd; ++j) {
        const std::size_t idx = static_cast<std::size_t>(path) * nd + j;
        out.L1[idx] = L1(j);
        out.Q1[idx] = Q1(j);
        out.L2[idx] = L2(j);
        out.Q2[idx] = Q2(j);
    }
}

EngineOut run_engine(const Equilibrium& eq, const DirData* dd, bool store, double store_eps, int n_paths,
                     std::uint64_t seed, int threads)
{
    const ProblemSpec& sp = eq.prob.spec();
    const std::size_t nodes = sp.grid.nodes();
    const std::size_t P = n_paths;
    EngineOut out;
    if (store) {
        out.X.assign(P * nodes * 2 * sp.n, 0.0);
        out.U1.assign(P * nodes * sp.m1, 0.0);
        out.U2.assign(P * nodes * sp.m2, 0.0);
    }
    out.J1.assign(P, 0.0);
    out.J2.assign(P, 0.0);
    const std::size_t nd = dd ? dd->nd : 0;
    out.L1.assign(P * nd, 0.0);
    out.Q1.assign(P * nd, 0.0);
    out.L2.assign(P * nd, 0.0);
    out.Q2.assign(P * nd, 0.0);
    parallel_for(n_paths, threads, [&](int p) { run_path(eq, dd, store, store_eps, seed, p, out); });
    return out;
}

SimBatch make_batch(const Equilibrium& eq, EngineOut&& out, int n_paths, std::uint64_t seed, bool store)
{
    const ProblemSpec& sp = eq.prob.spec();
    SimBatch b;
    b.n_paths = n_paths;
    b.seed = seed;
    b.grid = sp.grid;
    b.n = sp.n;
    b.m1 = sp.m1;
    b.m2 = sp.m2;
    b.stored = store;
    b.X = std::move(out.X);
    b.U1 = std::move(out.U1);
    b.U2 = std::move(out.U2);
    b.J1 = std::move(out.J1);
    b.J2 = std::move(out.J2);
    b.EX = eq.EX;
    b.Eu1 = eq.Eu1;
    b.Eu2 = eq.Eu2;
    std::tie(b.costs.J1_mean, b.costs.J1_se) = mean_and_se(b.J1);
    std::tie(b.costs.J2_mean, b.costs.J2_se) = mean_and_se(b.J2);
    return b;
}

void check_paths(int n_paths)
{
    if (n_paths < 1)
        throw std::invalid_argument("n_paths must be at least 1");
}

} // namespace

SimBatch simulate_paths(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const FollowerSolution& fsol,
                        const LeaderSolution& lsol, int n_paths, std::uint64_t seed, const SimOptions& opts)
{
    (void)fsol;
    check_paths(n_paths);
    const Equilibrium eq = build_equilibrium(prob, aug, lsol, opts);
    EngineOut out = run_engine(eq, nullptr, opts.store_paths, 0.0, n_paths, seed, opts.threads);
    return make_batch(eq, std::move(out), n_paths, seed, opts.store_paths);
}

CostEstimate estimate_costs(const ValidatedProblem& prob, SimBatch& batch)
{
    if (!batch.stored)
        throw std::invalid_argument("estimate_costs needs stored paths");
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = batch.grid;
    const int n = sp.n;
    const double h = g.dt();
    std::vector<WeightsAt> w1(g.nodes()), w2(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) {
        const CoeffsAt c = coeffs_at(sp, g.time(k));
        w1[k] = c.w1;
        w2[k] = c.w2;
    }
    batch.J1.assign(batch.n_paths, 0.0);
    batch.J2.assign(batch.n_paths, 0.0);
    for (int p = 0; p < batch.n_paths; ++p) {
        double J1 = 0.0, J2 = 0.0;
        for (int k = 0; k < g.nodes(); ++k) {
            const Vec X = batch.state(p, k);
            const Vec x = X.head(n);
            const Vec u1 = batch.control1(p, k), u2 = batch.control2(p, k);
            const Vec Ex = batch.EX[k].col(0).head(n);
            const Vec Eu1 = batch.Eu1[k].col(0), Eu2 = batch.Eu2[k].col(0);
            const double wk = (k == 0 || k == g.n_steps) ? 0.5 * h : h;
            J1 += wk * running_cost(w1[k], x, u1, u2, Ex, Eu1, Eu2);
            J2 += wk * running_cost(w2[k], x, u1, u2, Ex, Eu1, Eu2);
            if (k == g.n_steps) {
                J1 += terminal_cost(sp.player1, x, Ex);
                J2 += terminal_cost(sp.player2, x, Ex);
            }
        }
        batch.J1[p] = J1;
        batch.J2[p] = J2;
    }
    std::tie(batch.costs.J1_mean, batch.costs.J1_se) = mean_and_se(batch.J1);
    std::tie(batch.costs.J2_mean, batch.costs.J2_se) = mean_and_se(batch.J2);
    return batch.costs;
}

DirectionSet random_directions(const ValidatedProblem& prob, Player player, int n_dirs, std::uint64_t seed)
{
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = sp.grid;
    const int m = player == Player::leader ? sp.m2 : sp.m1;
    const double pi = std::acos(-1.0);
    DirectionSet ds;
    ds.player = player;
    for (int j = 0; j < n_dirs; ++j) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(player), static_cast<std::uint32_t>(j)};
        std::mt19937_64 gen(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        constexpr int modes = 4;
        Mat a(m, modes);
        for (int r = 0; r < m; ++r)
            for (int i = 0; i < modes; ++i)
                a(r, i) = normal(gen) / (1.0 + i);
        MatPath w(g, m, 1);
        for (int k = 0; k < g.nodes(); ++k) {
            const double tau = (g.time(k) - g.t0) / (g.T - g.t0);
            Vec v = Vec::Zero(m);
            for (int i = 0; i < modes; ++i)
                v += a.col(i) * std::cos(i * pi * tau);
            w[k] = v;
        }
        ds.w.push_back(std::move(w));
        if (player == Player::follower) {
            Mat kap(sp.m1, sp.n);
            for (int r = 0; r < sp.m1; ++r)
                for (int c = 0; c < sp.n; ++c)
                    kap(r, c) = 0.5 * normal(gen);
            ds.kappa.push_back(std::move(kap));
        }
    }
    return ds;
}

PerturbationSweep perturbation_sweep(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                                     const FollowerSolution& fsol, const LeaderSolution& lsol,
                                     const DirectionSet& dirs, const std::vector<double>& eps, int n_paths,
                                     std::uint64_t seed, const SimOptions& opts)
{
    check_paths(n_paths);
    const Equilibrium eq = build_equilibrium(prob, aug, lsol, opts);
    std::vector<int> which(dirs.w.size());
    for (std::size_t j = 0; j < which.size(); ++j)
        which[j] = static_cast<int>(j);
    const DirData dd = build_directions(prob, fsol, eq, dirs, which);
    const EngineOut out = run_engine(eq, &dd, false, 0.0, n_paths, seed, opts.threads);

    const bool leader = dirs.player == Player::leader;
    const std::vector<double>& L = leader ? out.L2 : out.L1;
    const std::vector<double>& Q = leader ? out.Q2 : out.Q1;
    const Vec& Lm = leader ? dd.Lm2 : dd.Lm1;
    const Vec& Qm = leader ? dd.Qm2 : dd.Qm1;

    PerturbationSweep sw;
    sw.player = dirs.player;
    sw.eps = eps;
    std::tie(sw.J0_mean, sw.J0_se) = mean_and_se(leader ? out.J2 : out.J1);
    const int nd = dd.nd, ne = static_cast<int>(eps.size());
    sw.diff_mean.resize(nd, ne);
    sw.diff_se.resize(nd, ne);
    std::vector<double> diff(n_paths);
    for (int j = 0; j < nd; ++j) {
        for (int e = 0; e < ne; ++e) {
            const double ep = eps[e];
            for (int p = 0; p < n_paths; ++p) {
                const std::size_t idx = static_cast<std::size_t>(p) * nd + j;
                diff[p] = ep * (L[idx] + Lm(j)) + ep * ep * (Q[idx] + Qm(j));
            }
            const auto [m, se] = mean_and_se(diff);
            sw.diff_mean(j, e) = m;
            sw.diff_se(j, e) = se;
        }
    }
    return sw;
}

SimBatch simulate_with_control(const ValidatedProblem& prob, const AugmentedCoefficients& aug,
                               const FollowerSolution& fsol, const LeaderSolution& lsol, const DirectionSet& dirs,
                               int dir, double eps, int n_paths, std::uint64_t seed, const SimOptions& opts)
{
    check_paths(n_paths);
    const Equilibrium eq = build_equilibrium(prob, aug, lsol, opts);
    const DirData dd = build_directions(prob, fsol, eq, dirs, {dir});
    EngineOut out = run_engine(eq, &dd, opts.store_paths, eps, n_paths, seed, opts.threads);
    for (int p = 0; p < n_paths; ++p) {
        out.J1[p] = out.J1[p] + (eps * (out.L1[p] + dd.Lm1(0)) + eps * eps * (out.Q1[p] + dd.Qm1(0)));
        out.J2[p] = out.J2[p] + (eps * (out.L2[p] + dd.Lm2(0)) + eps * eps * (out.Q2[p] + dd.Qm2(0)));
    }
    return make_batch(eq, std::move(out), n_paths, seed, opts.store_paths);
}

} // namespace mflq
