#include "mflq/leader.hpp"

#include <cmath>
#include <sstream>

namespace mflq {

Mat select1(int n)
{
    Mat m = Mat::Zero(n, 2 * n);
    m.leftCols(n).setIdentity();
    return m;
}

Mat select2(int n)
{
    Mat m = Mat::Zero(n, 2 * n);
    m.rightCols(n).setIdentity();
    return m;
}

namespace {

Mat block2(const Mat& a11, const Mat& a12, const Mat& a21, const Mat& a22)
{
    Mat out(a11.rows() + a21.rows(), a11.cols() + a12.cols());
    out << a11, a12, a21, a22;
    return out;
}

Mat vstack(const Mat& top, const Mat& bottom)
{
    Mat out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

Mat spd_inverse_leader(const Mat& m, const char* monitor, const Tolerances& tol, double s)
{
    const double e = min_sym_eig(m);
    if (!(e > tol.eps_pd)) {
        std::ostringstream os;
        os << "smallest eigenvalue " << e << " not above " << tol.eps_pd;
        throw InvertibilityError(monitor, s, os.str());
    }
    return m.partialPivLu().inverse();
}

} // namespace

AugPoint aug_point(const CoeffsAt& c, const FollowerPoint& f)
{
    const WeightsAt& w1 = c.w1;
    const WeightsAt& w2 = c.w2;
    const int n = static_cast<int>(c.A.rows());
    const Mat& P1 = f.P1;
    const Mat& Pi1 = f.Pi1;
    const Mat& S1i = f.Sigma1_inv;
    const Mat& S1hi = f.Sigma1hat_inv;
    const Mat& Th = f.Theta1;
    const Mat& Thh = f.Theta1hat;
    const Mat B2b = c.B2 + c.B2h;
    const Mat D2b = c.D2 + c.D2h;

    AugPoint a;
    a.c = c;
    a.f = f;

    a.Bacute = c.B1 + c.B1h;
    a.Dacute = c.D1 + c.D1h;
    a.Racute = w2.R11 + w2.R11h;
    a.Sacute = w2.S1 + w2.S1h;
    a.Qacute = w2.Q + w2.Qh;
    a.Lacute = w1.R12 + c.D2.transpose() * P1 * c.D1;
    a.Rgrave = w2.R12 + w2.R12h;
    a.Sgrave = w2.S2 + w2.S2h;
    a.Rbreve = w2.R22 + w2.R22h;
    a.Jacute = w1.R12 + w1.R12h + D2b.transpose() * P1 * a.Dacute;
    const Mat& Bac = a.Bacute;
    const Mat& Dac = a.Dacute;
    // Follower couplings R₂₁¹ + D₁ᵀP₁D₂ and its mean counterpart (m1×m2).
    const Mat Lt1 = w1.R21 + c.D1.transpose() * P1 * c.D2;
    const Mat Jt1 = w1.R21 + w1.R21h + Dac.transpose() * P1 * D2b;

    a.At = c.A + c.B1 * Th;
    a.Ac = c.A + c.Ah + Bac * Thh;
    a.Ct = c.C + c.D1 * Th;
    a.Cc = c.C + c.Ch + Dac * Thh;
    a.Mt = -c.B1 * S1i * c.B1.transpose();
    a.Mc = -Bac * S1hi * Bac.transpose();
    a.Ft = -c.B1 * S1i * c.D1.transpose();
    a.Fc = -Bac * S1hi * Dac.transpose();
    a.Bt = c.B2 - c.B1 * S1i * Lt1;
    a.Bc = B2b - Bac * S1hi * Jt1;
    a.Kt = -c.D1 * S1i * c.D1.transpose();
    a.Kc = -Dac * S1hi * Dac.transpose();
    a.Dt = c.D2 - c.D1 * S1i * Lt1;
    a.Dc = D2b - Dac * S1hi * Jt1;
    a.Nt = P1 * c.B2 + c.C.transpose() * P1 * c.D2 + w1.S2.transpose() + Th.transpose() * Lt1;
    a.Nc = Pi1 * B2b + (c.C + c.Ch).transpose() * P1 * D2b + (w1.S2 + w1.S2h).transpose() + Thh.transpose() * Jt1;

    const Mat Et = w2.S1 + w2.R11 * Th;
    a.Q11t = w2.Q + w2.S1.transpose() * Th + Th.transpose() * w2.S1 + Th.transpose() * w2.R11 * Th;
    a.Q12t = -c.B1 * S1i * Et;
    a.Q13t = -c.D1 * S1i * Et;
    a.Q22t = c.B1 * S1i * w2.R11 * S1i * c.B1.transpose();
    a.Q23t = c.D1 * S1i * w2.R11 * S1i * c.B1.transpose();
    a.Q33t = c.D1 * S1i * w2.R11 * S1i * c.D1.transpose();
    a.S1t = w2.S2 + w2.R12 * Th - a.Lacute * S1i * Et;
    const Mat Gt = (a.Lacute * S1i * w2.R11 - w2.R12) * S1i;
    a.S2t = Gt * c.B1.transpose();
    a.S3t = Gt * c.D1.transpose();
    a.Rt = w2.R22 - a.Lacute * S1i * w2.R21 - w2.R12 * S1i * a.Lacute.transpose() +
           a.Lacute * S1i * w2.R11 * S1i * a.Lacute.transpose();

    const Mat Ec = a.Sacute + a.Racute * Thh;
    a.Q11c = a.Qacute + a.Sacute.transpose() * Thh + Thh.transpose() * a.Sacute + Thh.transpose() * a.Racute * Thh;
    a.Q12c = -Bac * S1hi * Ec;
    a.Q13c = -Dac * S1hi * Ec;
    a.Q22c = Bac * S1hi * a.Racute * S1hi * Bac.transpose();
    a.Q23c = Dac * S1hi * a.Racute * S1hi * Bac.transpose();
    a.Q33c = Dac * S1hi * a.Racute * S1hi * Dac.transpose();
    a.S1c = a.Sgrave + a.Rgrave * Thh - a.Jacute * S1hi * Ec;
    const Mat Gc = (a.Jacute * S1hi * a.Racute - a.Rgrave) * S1hi;
    a.S2c = Gc * Bac.transpose();
    a.S3c = Gc * Dac.transpose();
    a.Rc = a.Rbreve - a.Rgrave * S1hi * a.Jacute.transpose() - a.Jacute * S1hi * a.Rgrave.transpose() +
           a.Jacute * S1hi * a.Racute * S1hi * a.Jacute.transpose();

    // Vector blocks. The data are deterministic, so every (· − E·) term is zero
    // and the remaining parts are the mean parts.
    const Vec cv = Dac.transpose() * P1 * c.sigma + w1.rho1;  // D́ᵀP₁Eσ + Eρ₁¹
    const Vec sc = S1hi * cv;
    a.bt = c.b - Bac * sc;
    a.sigt = c.sigma - Dac * sc;
    a.ft = Pi1 * c.b + a.Cc.transpose() * P1 * c.sigma + Thh.transpose() * w1.rho1 + w1.q;
    a.q1t = w2.q;
    a.q2t = Vec::Zero(n);
    a.q3t = Vec::Zero(n);
    a.rhot = Vec::Zero(c.B2.cols());
    a.bc = a.bt;
    a.sigc = a.sigt;
    a.fc = a.ft;
    a.q1c = w2.q + Thh.transpose() * w2.rho1 - Ec.transpose() * sc;
    a.q2c = Bac * S1hi * (a.Racute * sc - w2.rho1);
    a.q3c = Dac * S1hi * (a.Racute * sc - w2.rho1);
    a.rhoc = Gc * cv + w2.rho2 - a.Jacute * S1hi * w2.rho1;
    a.Lint = -2.0 * w2.rho1.dot(sc) + sc.dot(a.Racute * sc);

    const Mat Z = Mat::Zero(n, n);
    a.cAt = block2(a.At, Z, a.Q12t, a.At);
    a.cAc = block2(a.Ac, Z, a.Q12c, a.Ac);
    a.cMt = block2(Z, a.Mt, a.Mt.transpose(), a.Q22t);
    a.cMc = block2(Z, a.Mc, a.Mc.transpose(), a.Q22c);
    a.cFt = block2(Z, a.Ft, a.Ft, a.Q23t.transpose());
    a.cFc = block2(Z, a.Fc, a.Fc, a.Q23c.transpose());
    a.cHt = block2(a.Q11t, Z, Z, Z);
    a.cHc = block2(a.Q11c, Z, Z, Z);
    a.cCt = block2(a.Ct, Z, a.Q13t, a.Ct);
    a.cCc = block2(a.Cc, Z, a.Q13c, a.Cc);
    a.cKt = block2(Z, a.Kt, a.Kt.transpose(), a.Q33t);
    a.cKc = block2(Z, a.Kc, a.Kc.transpose(), a.Q33c);
    a.cBt = vstack(a.Bt, a.S2t.transpose());
    a.cBc = vstack(a.Bc, a.S2c.transpose());
    a.cDt = vstack(a.Dt, a.S3t.transpose());
    a.cDc = vstack(a.Dc, a.S3c.transpose());
    a.cNt = vstack(a.S1t.transpose(), a.Nt);
    a.cNc = vstack(a.S1c.transpose(), a.Nc);

    // Fluctuation vectors (b̃ − Eb̃, …) vanish identically under deterministic data.
    a.vbt = Vec::Zero(2 * n);
    a.vsigt = Vec::Zero(2 * n);
    a.vft = Vec::Zero(2 * n);
    a.vbc = vstack(a.bc, a.q2c);
    a.vsigc = vstack(a.sigc, a.q3c);
    a.vfc = vstack(a.q1c, a.fc);
    return a;
}

AugPoint AugmentedCoefficients::at(double s) const
{
    int k;
    double th;
    locate(grid(), s, k, th);
    if (th == 0.0)
        return nodes[k];
    if (th == 1.0)
        return nodes[k + 1];
    return aug_point(coeffs_at(prob.spec(), s), follower_point_at(prob.spec(), fsol, s));
}

AugmentedCoefficients build_augmented(const ValidatedProblem& prob, const FollowerSolution& fsol)
{
    const ProblemSpec& sp = prob.spec();
    const int n = sp.n;
    AugmentedCoefficients aug;
    aug.prob = prob;
    aug.fsol = fsol;
    aug.nodes.reserve(sp.grid.nodes());
    for (int k = 0; k < sp.grid.nodes(); ++k) {
        const double s = sp.grid.time(k);
        const CoeffsAt c = coeffs_at(sp, s);
        aug.nodes.push_back(aug_point(c, follower_point(c, fsol.P1[k], fsol.Pi1[k], fsol.tol, s)));
    }
    const Mat Z = Mat::Zero(n, n);
    aug.Gt = block2(sp.player2.G, Z, Z, Z);
    aug.Gc = block2(sp.player2.Gh, Z, Z, Z);
    aug.gt = vstack(sp.player2.g, sp.player1.g);
    aug.gc = vstack(sp.player2.gh, sp.player1.gh);
    return aug;
}

Mat checked_inverse_IPK(const Mat& IPK, const char* monitor, const Tolerances& tol, double s)
{
    const double e = min_sym_eig(IPK);
    if (!(e > 0.0)) {
        std::ostringstream os;
        os << "symmetric part not positive definite (smallest eigenvalue " << e << ")";
        throw InvertibilityError(monitor, s, os.str());
    }
    Eigen::JacobiSVD<Mat> svd(IPK);
    const auto& sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    if (!(cond < tol.kappa_max)) {
        std::ostringstream os;
        os << "condition number " << cond << " exceeds " << tol.kappa_max;
        throw InvertibilityError(monitor, s, os.str());
    }
    return IPK.partialPivLu().inverse();
}

namespace {

// Pieces shared by the Riccati right-hand side, the η₂ equation and the gains.
struct RiccatiCore {
    Mat IKt_inv, IKc_inv, Wt, Wc;
    Mat Sig2t, Sig2c, Sig2t_inv, Sig2c_inv;
    Mat CtP, CcP;  // 𝒞̃ + ℱ̃ᵀP₂, 𝒞̌ + ℱ̌ᵀΠ₂
    Mat Lt, Lc;    // 𝒩 + Pℬ + (𝒞ᵀ + Pℱ)W𝒟
    Mat Rt, Rc;    // 𝒩ᵀ + ℬᵀP + 𝒟ᵀW(𝒞 + ℱᵀP)
};

RiccatiCore riccati_core(const AugPoint& a, const Mat& P2, const Mat& Pi2, const Tolerances& tol, double s)
{
    const int N = static_cast<int>(P2.rows());
    const Mat I = Mat::Identity(N, N);
    RiccatiCore r;
    r.IKt_inv = checked_inverse_IPK(I - P2 * a.cKt, "I - P2*Ktilde", tol, s);
    r.IKc_inv = checked_inverse_IPK(I - P2 * a.cKc, "I - P2*Kcheck", tol, s);
    r.Wt = r.IKt_inv * P2;
    r.Wc = r.IKc_inv * P2;
    r.Sig2t = a.Rt + a.cDt.transpose() * r.Wt * a.cDt;
    r.Sig2c = a.Rc + a.cDc.transpose() * r.Wc * a.cDc;
    r.Sig2t_inv = spd_inverse_leader(r.Sig2t, "Sigma2tilde", tol, s);
    r.Sig2c_inv = spd_inverse_leader(r.Sig2c, "Sigma2check", tol, s);
    r.CtP = a.cCt + a.cFt.transpose() * P2;
    r.CcP = a.cCc + a.cFc.transpose() * Pi2;
    r.Lt = a.cNt + P2 * a.cBt + (a.cCt.transpose() + P2 * a.cFt) * r.Wt * a.cDt;
    r.Lc = a.cNc + Pi2 * a.cBc + (a.cCc.transpose() + Pi2 * a.cFc) * r.Wc * a.cDc;
    r.Rt = a.cNt.transpose() + a.cBt.transpose() * P2 + a.cDt.transpose() * r.Wt * r.CtP;
    r.Rc = a.cNc.transpose() + a.cBc.transpose() * Pi2 + a.cDc.transpose() * r.Wc * r.CcP;
    return r;
}

Vec v2check(const AugPoint& a, const RiccatiCore& r, const Vec& eta2)
{
    return -r.Sig2c_inv * ((a.cBc.transpose() + a.cDc.transpose() * r.Wc * a.cFc.transpose()) * eta2 +
                           a.cDc.transpose() * r.Wc * a.vsigc + a.rhoc);
}

} // namespace

LeaderPoint leader_point(const AugPoint& a, const Mat& P2, const Mat& Pi2, const Vec& eta2, const Tolerances& tol,
                         double s)
{
    const RiccatiCore r = riccati_core(a, P2, Pi2, tol, s);
    const int N = static_cast<int>(P2.rows());
    const int n = N / 2;
    const Mat I = Mat::Identity(N, N);
    const Mat M1 = select1(n), M2 = select2(n);
    const CoeffsAt& c = a.c;

    LeaderPoint p;
    p.Wt = r.Wt;
    p.Wc = r.Wc;
    p.IKt_inv = r.IKt_inv;
    p.IKc_inv = r.IKc_inv;
    p.Sig2t = r.Sig2t;
    p.Sig2c = r.Sig2c;
    p.Sig2t_inv = r.Sig2t_inv;
    p.Sig2c_inv = r.Sig2c_inv;
    p.Theta = -r.Sig2t_inv * r.Rt;
    p.ThetaHat = -r.Sig2c_inv * r.Rc;

    // Ṽ₂ is driven only by fluctuation data, which is zero here.
    const Vec eta_dev = Vec::Zero(N);
    p.V2t = -r.Sig2t_inv * ((a.cBt.transpose() + a.cDt.transpose() * r.Wt * a.cFt.transpose()) * eta_dev +
                            a.cDt.transpose() * r.Wt * a.vsigt + a.rhot);
    p.V2c = v2check(a, r, eta2);

    p.AAt = a.cAt + a.cMt * P2 + a.cFt * r.Wt * r.CtP + (a.cBt + a.cFt * r.Wt * a.cDt) * p.Theta;
    p.AAc = a.cAc + a.cMc * Pi2 + a.cFc * r.Wc * r.CcP + (a.cBc + a.cFc * r.Wc * a.cDc) * p.ThetaHat;
    p.CCt = r.CtP + a.cKt * r.Wt * r.CtP + (a.cDt + a.cKt * r.Wt * a.cDt) * p.Theta;
    p.CCc = r.CcP + a.cKc * r.Wc * r.CcP + (a.cDc + a.cKc * r.Wc * a.cDc) * p.ThetaHat;
    p.BBt = (a.cMt + a.cFt * r.Wt * a.cFt.transpose()) * eta_dev + (a.cBt + a.cFt * r.Wt * a.cDt) * p.V2t + a.vbt +
            a.cFt * r.Wt * a.vsigt;
    p.BBc = (a.cMc + a.cFc * r.Wc * a.cFc.transpose()) * eta2 + (a.cBc + a.cFc * r.Wc * a.cDc) * p.V2c +
            a.cFc * r.Wc * a.vsigc + a.vbc;
    p.DDt = (a.cFt.transpose() + a.cKt * r.Wt * a.cFt.transpose()) * eta_dev + (a.cDt + a.cKt * r.Wt * a.cDt) * p.V2t +
            (I + a.cKt * r.Wt) * a.vsigt;
    p.DDc = (a.cFc.transpose() + a.cKc * r.Wc * a.cFc.transpose()) * eta2 + (a.cDc + a.cKc * r.Wc * a.cDc) * p.V2c +
            (I + a.cKc * r.Wc) * a.vsigc;

    p.Wxt = r.Wt * (r.CtP + a.cDt * p.Theta);
    p.Wxc = r.Wc * (r.CcP + a.cDc * p.ThetaHat);
    p.ez = r.Wc * (a.cFc.transpose() * eta2 + a.cDc * p.V2c + a.vsigc);

    const Mat& S1i = a.f.Sigma1_inv;
    const Mat& S1hi = a.f.Sigma1hat_inv;
    const Mat Lt1 = c.w1.R21 + c.D1.transpose() * a.f.P1 * c.D2;
    const Mat Jt1 = a.Jacute.transpose();
    p.Theta1b = a.f.Theta1 * M1 - S1i * (c.B1.transpose() * M2 * P2 + c.D1.transpose() * M2 * p.Wxt + Lt1 * p.Theta);
    p.Theta1hb = a.f.Theta1hat * M1 -
                 S1hi * (a.Bacute.transpose() * M2 * Pi2 + a.Dacute.transpose() * M2 * p.Wxc + Jt1 * p.ThetaHat);
    p.V1t = -S1i * (Lt1 * p.V2t);
    p.V1c = -S1hi * (a.Bacute.transpose() * M2 * eta2 + a.Dacute.transpose() * M2 * p.ez +
                     a.Dacute.transpose() * a.f.P1 * c.sigma + c.w1.rho1 + Jt1 * p.V2c);
    return p;
}

OdeField leader_riccati_field(const AugmentedCoefficients& aug, const Tolerances& tol)
{
    const int N = aug.n2();
    return [&aug, tol, N](double s, const Mat& y) -> Mat {
        const AugPoint a = aug.at(s);
        const Mat P2 = y.topRows(N);
        const Mat Pi2 = y.bottomRows(N);
        const RiccatiCore r = riccati_core(a, P2, Pi2, tol, s);
        Mat out(2 * N, N);
        out.topRows(N) = -(a.cAt.transpose() * P2 + P2 * a.cAt + a.cHt + P2 * a.cMt * P2 +
                           (a.cCt.transpose() + P2 * a.cFt) * r.Wt * r.CtP - r.Lt * r.Sig2t_inv * r.Rt);
        out.bottomRows(N) = -(a.cAc.transpose() * Pi2 + Pi2 * a.cAc + a.cHc + Pi2 * a.cMc * Pi2 +
                              (a.cCc.transpose() + Pi2 * a.cFc) * r.Wc * r.CcP - r.Lc * r.Sig2c_inv * r.Rc);
        return out;
    };
}

LeaderRiccati solve_leader_riccati(const AugmentedCoefficients& aug, const Tolerances& tol)
{
    const int N = aug.n2();
    const TimeGrid& g = aug.grid();
    const int m2 = aug.prob->m2;
    Mat terminal(2 * N, N);
    terminal.topRows(N) = aug.Gt;
    terminal.bottomRows(N) = aug.Gt + aug.Gc;
    IntegrateOptions opts;
    opts.label = "leader Riccati (P2, Pi2)";
    MatPath stacked = integrate_backward(leader_riccati_field(aug, tol), terminal, g, opts);

    LeaderRiccati ric;
    ric.P2 = row_block(stacked, 0, N);
    ric.Pi2 = row_block(stacked, N, N);
    ric.Sigma2tilde = MatPath(g, m2, m2);
    ric.Sigma2check = MatPath(g, m2, m2);
    ric.ThetaBold = MatPath(g, m2, N);
    ric.ThetaHatBold = MatPath(g, m2, N);
    for (int k = 0; k < g.nodes(); ++k) {
        const double s = g.time(k);
        const RiccatiCore r = riccati_core(aug[k], ric.P2[k], ric.Pi2[k], tol, s);
        ric.Sigma2tilde[k] = r.Sig2t;
        ric.Sigma2check[k] = r.Sig2c;
        ric.ThetaBold[k] = -r.Sig2t_inv * r.Rt;
        ric.ThetaHatBold[k] = -r.Sig2c_inv * r.Rc;
    }
    return ric;
}

LeaderOffsets solve_eta2(const AugmentedCoefficients& aug, const LeaderRiccati& ric, const Tolerances& tol)
{
    const TimeGrid& g = aug.grid();
    const int N = aug.n2();
    const int m2 = aug.prob->m2;
    // Only the mean channel is integrated: every driver of η₂ − Eη₂ is a
    // fluctuation quantity and vanishes under deterministic data.
    OdeField rhs = [&](double s, const Mat& e) -> Mat {
        const AugPoint a = aug.at(s);
        const Mat P2 = ric.P2.at(s);
        const Mat Pi2 = ric.Pi2.at(s);
        const RiccatiCore r = riccati_core(a, P2, Pi2, tol, s);
        const Vec eta = e.col(0);
        const Vec V = v2check(a, r, eta);
        const Mat CF = a.cCc.transpose() + Pi2 * a.cFc;
        return -((a.cAc.transpose() + CF * r.Wc * a.cFc.transpose() + Pi2 * a.cMc) * eta + r.Lc * V + Pi2 * a.vbc +
                 a.vfc + CF * r.Wc * a.vsigc);
    };
    IntegrateOptions opts;
    opts.label = "leader offset eta2";
    LeaderOffsets off;
    off.eta2 = integrate_backward(rhs, aug.gt + aug.gc, g, opts);
    off.V2tilde = MatPath(g, m2, 1);
    off.V2check = MatPath(g, m2, 1);
    for (int k = 0; k < g.nodes(); ++k) {
        const LeaderPoint p = leader_point(aug[k], ric.P2[k], ric.Pi2[k], off.eta2[k], tol, g.time(k));
        off.V2tilde[k] = p.V2t;
        off.V2check[k] = p.V2c;
    }
    (void)N;
    return off;
}

LeaderPoint LeaderSolution::point_at(const AugmentedCoefficients& aug, double s) const
{
    return leader_point(aug.at(s), P2.at(s), Pi2.at(s), eta2.at(s), tol, s);
}

LeaderPoint LeaderSolution::point_node(const AugmentedCoefficients& aug, int k) const
{
    return leader_point(aug[k], P2[k], Pi2[k], eta2[k], tol, aug.grid().time(k));
}

double compute_L(const ValidatedProblem& prob, const FollowerSolution& fsol)
{
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = sp.grid;
    std::vector<double> f(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) {
        const double s = g.time(k);
        const CoeffsAt c = coeffs_at(sp, s);
        f[k] = aug_point(c, follower_point(c, fsol.P1[k], fsol.Pi1[k], fsol.tol, s)).Lint;
    }
    return trapezoid(f, g.dt());
}

namespace {

// Cost weights of the leader on (x, η₁, ζ₁, u₂): fluctuation and mean versions.
Mat big_weight_t(const AugPoint& a)
{
    const int n = static_cast<int>(a.At.rows());
    const int m2 = static_cast<int>(a.Rt.rows());
    Mat W(3 * n + m2, 3 * n + m2);
    W << a.Q11t, a.Q12t.transpose(), a.Q13t.transpose(), a.S1t.transpose(), a.Q12t, a.Q22t, a.Q23t.transpose(),
        a.S2t.transpose(), a.Q13t, a.Q23t, a.Q33t, a.S3t.transpose(), a.S1t, a.S2t, a.S3t, a.Rt;
    return W;
}

Mat big_weight_c(const AugPoint& a)
{
    const int n = static_cast<int>(a.Ac.rows());
    const int m2 = static_cast<int>(a.Rc.rows());
    Mat W(3 * n + m2, 3 * n + m2);
    W << a.Q11c, a.Q12c.transpose(), a.Q13c.transpose(), a.S1c.transpose(), a.Q12c, a.Q22c, a.Q23c.transpose(),
        a.S2c.transpose(), a.Q13c, a.Q23c, a.Q33c, a.S3c.transpose(), a.S1c, a.S2c, a.S3c, a.Rc;
    return W;
}

struct ValueWeights {
    Mat Qt, Qc;  // ℚ̃, ℚ̌
    Vec Sc;      // 𝕊̌
    double Lc = 0.0;  // 𝕃̌
};

ValueWeights value_weights(const AugPoint& a, const LeaderPoint& p, const Mat& P2, const Mat& Pi2, const Vec& eta2)
{
    const int N = static_cast<int>(P2.rows());
    const int n = N / 2;
    const int m2 = static_cast<int>(a.Rt.rows());
    const Mat M1 = select1(n), M2 = select2(n);
    // (x, η₁, ζ₁, u₂) expressed through the augmented state.
    Mat Lt(3 * n + m2, N), Lc(3 * n + m2, N);
    Lt << M1, M2 * P2, M2 * p.Wxt, p.Theta;
    Lc << M1, M2 * Pi2, M2 * p.Wxc, p.ThetaHat;
    Vec lc(3 * n + m2);
    lc << Vec::Zero(n), M2 * eta2, M2 * p.ez, p.V2c;
    Vec qc(3 * n + m2);
    qc << a.q1c, a.q2c, a.q3c, a.rhoc;
    const Mat Wt = big_weight_t(a);
    const Mat Wc = big_weight_c(a);
    ValueWeights v;
    v.Qt = Lt.transpose() * Wt * Lt;
    v.Qc = Lc.transpose() * Wc * Lc;
    v.Sc = Lc.transpose() * (Wc * lc) + Lc.transpose() * qc;
    v.Lc = lc.dot(Wc * lc) + 2.0 * qc.dot(lc);
    return v;
}

} // namespace

LeaderValue leader_value(const ValidatedProblem& prob, const AugmentedCoefficients& aug, const LeaderSolution& lsol,
                         const FollowerSolution& fsol)
{
    const ProblemSpec& sp = prob.spec();
    const TimeGrid& g = sp.grid;
    const int n = sp.n;
    const int N = 2 * n;
    const Mat M1 = select1(n);
    const Tolerances& tol = lsol.tol;

    auto point = [&](double s, AugPoint& a) {
        a = aug.at(s);
        return leader_point(a, lsol.P2.at(s), lsol.Pi2.at(s), lsol.eta2.at(s), tol, s);
    };

    LeaderValue out;
    {
        OdeField rhs = [&](double s, const Mat& G1) -> Mat {
            AugPoint a;
            const LeaderPoint p = point(s, a);
            const ValueWeights w = value_weights(a, p, lsol.P2.at(s), lsol.Pi2.at(s), lsol.eta2.at(s));
            return -(p.AAt.transpose() * G1 + G1 * p.AAt + p.CCt.transpose() * G1 * p.CCt + w.Qt);
        };
        IntegrateOptions opts;
        opts.label = "Lyapunov Gamma1";
        opts.post_step = [](Mat& y) { symmetrize(y); };
        out.Gamma1 = integrate_backward(rhs, M1.transpose() * sp.player2.G * M1, g, opts);
    }
    {
        OdeField rhs = [&](double s, const Mat& a1) -> Mat {
            AugPoint a;
            const LeaderPoint p = point(s, a);
            // 𝕊̃, 𝔹̃ and 𝔻̃ vanish under deterministic data.
            return -(p.AAt.transpose() * a1);
        };
        IntegrateOptions opts;
        opts.label = "adjoint alpha1";
        out.alpha1 = integrate_backward(rhs, M1.transpose() * sp.player2.g, g, opts);
    }
    {
        // Γ₂ and α₂ integrated together as the columns of one 2n × (2n+1) state.
        OdeField rhs = [&](double s, const Mat& y) -> Mat {
            AugPoint a;
            const LeaderPoint p = point(s, a);
            const ValueWeights w = value_weights(a, p, lsol.P2.at(s), lsol.Pi2.at(s), lsol.eta2.at(s));
            const Mat G1 = out.Gamma1.at(s);
            const Mat G2 = y.leftCols(N);
            const Vec a2 = y.col(N);
            Mat d(N, N + 1);
            d.leftCols(N) = -(p.AAc.transpose() * G2 + G2 * p.AAc + p.CCc.transpose() * G1 * p.CCc + w.Qc);
            d.col(N) = -(p.AAc.transpose() * a2 + w.Sc + G2 * p.BBc + p.CCc.transpose() * G1 * p.DDc);
            return d;
        };
        Mat term(N, N + 1);
        term.leftCols(N) = M1.transpose() * (sp.player2.G + sp.player2.Gh) * M1;
        term.col(N) = M1.transpose() * (sp.player2.g + sp.player2.gh);
        IntegrateOptions opts;
        opts.label = "Lyapunov Gamma2 / adjoint alpha2";
        opts.post_step = [N](Mat& y) {
            Mat G2 = y.leftCols(N);
            symmetrize(G2);
            y.leftCols(N) = G2;
        };
        const MatPath st = integrate_backward(rhs, term, g, opts);
        out.Gamma2 = col_block(st, 0, N);
        out.alpha2 = col_block(st, N, 1);
    }

    out.Lscalar = compute_L(prob, fsol);
    out.integrand.resize(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) {
        const LeaderPoint p = lsol.point_node(aug, k);
        const ValueWeights w = value_weights(aug[k], p, lsol.P2[k], lsol.Pi2[k], lsol.eta2[k]);
        const Mat& G1 = out.Gamma1[k];
        const double Lt = 0.0;  // 𝕃̃ is built only from fluctuation data
        out.integrand[k] = p.DDt.dot(G1 * p.DDt) + p.DDc.dot(G1 * p.DDc) + 2.0 * p.BBt.dot(out.alpha1[k].col(0)) +
                           2.0 * p.BBc.dot(out.alpha2[k].col(0)) + Lt + w.Lc;
    }
    Mat cov0 = Mat::Zero(N, N);
    cov0.topLeftCorner(n, n) = sp.xi_cov;
    Vec m0 = Vec::Zero(N);
    m0.head(n) = sp.xi_mean;
    out.V2 = (out.Gamma1[0] * cov0).trace() + m0.dot(out.Gamma2[0] * m0) + 2.0 * out.alpha2[0].col(0).dot(m0) +
             out.Lscalar + trapezoid(out.integrand, g.dt());
    return out;
}

LeaderSolution solve_leader(const AugmentedCoefficients& aug, const Tolerances& tol)
{
    const LeaderRiccati ric = solve_leader_riccati(aug, tol);
    const LeaderOffsets off = solve_eta2(aug, ric, tol);
    LeaderSolution l;
    l.tol = tol;
    l.P2 = ric.P2;
    l.Pi2 = ric.Pi2;
    l.Sigma2tilde = ric.Sigma2tilde;
    l.Sigma2check = ric.Sigma2check;
    l.ThetaBold = ric.ThetaBold;
    l.ThetaHatBold = ric.ThetaHatBold;
    l.eta2 = off.eta2;
    l.V2tilde = off.V2tilde;
    l.V2check = off.V2check;
    const LeaderValue v = leader_value(aug.prob, aug, l, aug.fsol);
    l.Gamma1 = v.Gamma1;
    l.Gamma2 = v.Gamma2;
    l.alpha1 = v.alpha1;
    l.alpha2 = v.alpha2;
    l.Lscalar = v.Lscalar;
    l.V2 = v.V2;
    l.value_integrand = v.integrand;
    return l;
}

MatPath propagate_mean(const AugmentedCoefficients& aug, const LeaderSolution& lsol)
{
    const ProblemSpec& sp = aug.prob.spec();
    const int n = sp.n;
    OdeField rhs = [&](double s, const Mat& m) -> Mat {
        const LeaderPoint p = lsol.point_at(aug, s);
        return p.AAc * m + p.BBc;
    };
    Vec m0 = Vec::Zero(2 * n);
    m0.head(n) = sp.xi_mean;
    IntegrateOptions opts;
    opts.label = "mean of the augmented state";
    return integrate_forward(rhs, m0, sp.grid, opts);
}

MatPath propagate_covariance(const AugmentedCoefficients& aug, const LeaderSolution& lsol, const MatPath& mean)
{
    const ProblemSpec& sp = aug.prob.spec();
    const int n = sp.n;
    OdeField rhs = [&](double s, const Mat& S) -> Mat {
        const LeaderPoint p = lsol.point_at(aug, s);
        const Vec v = p.CCc * mean.at(s) + p.DDc;
        return p.AAt * S + S * p.AAt.transpose() + p.CCt * S * p.CCt.transpose() + v * v.transpose();
    };
    Mat S0 = Mat::Zero(2 * n, 2 * n);
    S0.topLeftCorner(n, n) = sp.xi_cov;
    IntegrateOptions opts;
    opts.label = "covariance of the augmented state";
    opts.post_step = [](Mat& y) { symmetrize(y); };
    return integrate_forward(rhs, S0, sp.grid, opts);
}

double follower_value_equilibrium(const AugmentedCoefficients& aug, const LeaderSolution& lsol)
{
    const ProblemSpec& sp = aug.prob.spec();
    const TimeGrid& g = sp.grid;
    const int n = sp.n;
    const Mat M1 = select1(n), M2 = select2(n);
    const MatPath mean = propagate_mean(aug, lsol);
    const MatPath cov = propagate_covariance(aug, lsol, mean);

    std::vector<double> f(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) {
        const AugPoint& a = aug[k];
        const CoeffsAt& c = a.c;
        const WeightsAt& w = c.w1;
        const LeaderPoint p = lsol.point_node(aug, k);
        const Mat& P1 = a.f.P1;
        const Mat& S = cov[k];
        const Vec EX = mean[k].col(0);
        const Mat B2b = c.B2 + c.B2h, D2b = c.D2 + c.D2h;
        const Mat Lt1 = w.R21 + c.D1.transpose() * P1 * c.D2;
        const Mat Jt1 = a.Jacute.transpose();

        // Fluctuations as linear maps of X̄ − EX̄.
        const Mat U = p.Theta;
        const Mat Eta = M2 * lsol.P2[k];
        const Mat Zm = M2 * p.Wxt;
        const Mat Kv = -a.f.Sigma1_inv * (c.B1.transpose() * Eta + c.D1.transpose() * Zm + Lt1 * U);
        // Means.
        const Vec Eu = p.ThetaHat * EX + p.V2c;
        const Vec Eeta = M2 * (lsol.Pi2[k] * EX + lsol.eta2[k].col(0));
        const Vec Ezeta = M2 * (p.Wxc * EX + p.ez);
        const Vec Ev = -a.f.Sigma1hat_inv * (a.Bacute.transpose() * Eeta + a.Dacute.transpose() * Ezeta +
                                             a.Dacute.transpose() * P1 * c.sigma + w.rho1 + Jt1 * Eu);

        double val = (U.transpose() * (w.R22 + c.D2.transpose() * P1 * c.D2) * U * S).trace();
        val += Eu.dot((w.R22 + w.R22h + D2b.transpose() * P1 * D2b) * Eu);
        val += 2.0 * (U.transpose() * (c.B2.transpose() * Eta + c.D2.transpose() * Zm) * S).trace();
        val += 2.0 * (B2b.transpose() * Eeta + D2b.transpose() * Ezeta + D2b.transpose() * P1 * c.sigma + w.rho2).dot(Eu);
        val += 2.0 * Eeta.dot(c.b) + 2.0 * Ezeta.dot(c.sigma) + c.sigma.dot(P1 * c.sigma);
        val -= (Kv.transpose() * a.f.Sigma1 * Kv * S).trace();
        val -= Ev.dot(a.f.Sigma1hat * Ev);
        f[k] = val;
    }
    const Vec& m = sp.xi_mean;
    const Mat& P1_0 = aug.fsol.P1[0];
    const Mat& Pi1_0 = aug.fsol.Pi1[0];
    const Vec Eeta0 = M2 * (lsol.Pi2[0] * mean[0].col(0) + lsol.eta2[0].col(0));
    Mat S0 = Mat::Zero(2 * n, 2 * n);
    S0.topLeftCorner(n, n) = sp.xi_cov;
    const double init = (P1_0 * sp.xi_cov).trace() + m.dot(Pi1_0 * m) +
                        2.0 * ((M2 * lsol.P2[0]).transpose() * M1 * S0).trace() + 2.0 * Eeta0.dot(m);
    return init + trapezoid(f, g.dt());
}

MatPath follower_mean_path(const ValidatedProblem& prob, const FollowerSolution& fsol)
{
    const ProblemSpec& sp = prob.spec();
    OdeField rhs = [&](double s, const Mat& m) -> Mat {
        const CoeffsAt c = coeffs_at(sp, s);
        const FollowerPoint f = follower_point_at(sp, fsol, s);
        return (c.A + c.Ah + (c.B1 + c.B1h) * f.Theta1hat) * m;
    };
    IntegrateOptions opts;
    opts.label = "follower mean";
    return integrate_forward(rhs, sp.xi_mean, sp.grid, opts);
}

} // namespace mflq
