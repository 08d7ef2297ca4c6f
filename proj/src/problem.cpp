#include "mflq/problem.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mflq {

using json = nlohmann::json;

void TimeGrid::check() const
{
    if (!std::isfinite(t0) || !std::isfinite(T))
        throw BadGrid("non-finite end points");
    if (!(t0 < T))
        throw BadGrid("t0 must be smaller than T");
    if (n_steps < 2)
        throw BadGrid("n_steps must be at least 2, got " + std::to_string(n_steps));
}

MatPath::MatPath(const TimeGrid& grid, int rows, int cols)
    : values(grid.nodes(), Mat::Zero(rows, cols)), grid_(grid), rows_(rows), cols_(cols)
{
}

MatPath MatPath::constant(const TimeGrid& grid, const Mat& m)
{
    MatPath p(grid, static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (auto& v : p.values)
        v = m;
    return p;
}

void locate(const TimeGrid& grid, double s, int& k, double& theta)
{
    const double dt = grid.dt();
    if (s < grid.t0 - 1e-9 * dt || s > grid.T + 1e-9 * dt)
        throw OutOfRange(s);
    double u = (s - grid.t0) / dt;
    double r = std::round(u);
    if (std::abs(u - r) < 1e-9)
        u = r;
    k = static_cast<int>(std::floor(u));
    if (k >= grid.n_steps)
        k = grid.n_steps - 1;
    if (k < 0)
        k = 0;
    theta = u - k;
}

Mat MatPath::at(double s) const
{
    int k;
    double th;
    locate(grid_, s, k, th);
    if (th == 0.0)
        return values[k];
    if (th == 1.0)
        return values[k + 1];
    const Mat& a = values[k];
    const Mat& b = values[k + 1];
    if (derivs.empty())
        return a + th * (b - a);
    const double h = grid_.dt();
    const double t2 = th * th, t3 = t2 * th;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + th;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    return h00 * a + (h10 * h) * derivs[k] + h01 * b + (h11 * h) * derivs[k + 1];
}

bool MatPath::is_constant() const
{
    for (const auto& v : values)
        if (!(v.array() == values.front().array()).all())
            return false;
    return true;
}

double MatPath::max_abs() const
{
    double m = 0.0;
    for (const auto& v : values)
        if (v.size() > 0)
            m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
}

namespace {

void zero_weights(PlayerWeights& w, int n, int m1, int m2, const TimeGrid& g)
{
    w.Q = MatPath(g, n, n);
    w.Qh = MatPath(g, n, n);
    w.S1 = MatPath(g, m1, n);
    w.S1h = MatPath(g, m1, n);
    w.S2 = MatPath(g, m2, n);
    w.S2h = MatPath(g, m2, n);
    w.R11 = MatPath(g, m1, m1);
    w.R11h = MatPath(g, m1, m1);
    w.R12 = MatPath(g, m2, m1);
    w.R12h = MatPath(g, m2, m1);
    w.R21 = MatPath(g, m1, m2);
    w.R21h = MatPath(g, m1, m2);
    w.R22 = MatPath(g, m2, m2);
    w.R22h = MatPath(g, m2, m2);
    w.q = MatPath(g, n, 1);
    w.rho1 = MatPath(g, m1, 1);
    w.rho2 = MatPath(g, m2, 1);
    w.G = Mat::Zero(n, n);
    w.Gh = Mat::Zero(n, n);
    w.g = Vec::Zero(n);
    w.gh = Vec::Zero(n);
}

void check_path(const MatPath& p, int rows, int cols, const TimeGrid& g, const std::string& name)
{
    if (p.size() != g.nodes())
        throw DimensionMismatch(name + " (node count)");
    for (const auto& v : p.values)
        if (v.rows() != rows || v.cols() != cols)
            throw DimensionMismatch(name);
}

void check_mat(const Mat& m, int rows, int cols, const std::string& name)
{
    if (m.rows() != rows || m.cols() != cols)
        throw DimensionMismatch(name);
}

void check_symmetric(const Mat& m, const std::string& name, int node)
{
    double dev = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (m.size() > 0 && dev > 1e-12)
        throw AsymmetricWeight(name, node, dev);
}

void check_symmetric_path(const MatPath& p, const std::string& name)
{
    for (int k = 0; k < p.size(); ++k)
        check_symmetric(p[k], name, k);
}

void check_transpose_pair(const MatPath& a, const MatPath& b, const std::string& name)
{
    for (int k = 0; k < a.size(); ++k) {
        double dev = (a[k].transpose() - b[k]).cwiseAbs().maxCoeff();
        if (a[k].size() > 0 && dev > 1e-12)
            throw AsymmetricWeight(name, k, dev);
    }
}

void check_weights(const PlayerWeights& w, int n, int m1, int m2, const TimeGrid& g, const std::string& who)
{
    check_path(w.Q, n, n, g, who + ".Q");
    check_path(w.Qh, n, n, g, who + ".Qhat");
    check_path(w.S1, m1, n, g, who + ".S1");
    check_path(w.S1h, m1, n, g, who + ".S1hat");
    check_path(w.S2, m2, n, g, who + ".S2");
    check_path(w.S2h, m2, n, g, who + ".S2hat");
    check_path(w.R11, m1, m1, g, who + ".R11");
    check_path(w.R11h, m1, m1, g, who + ".R11hat");
    check_path(w.R12, m2, m1, g, who + ".R12");
    check_path(w.R12h, m2, m1, g, who + ".R12hat");
    check_path(w.R21, m1, m2, g, who + ".R21");
    check_path(w.R21h, m1, m2, g, who + ".R21hat");
    check_path(w.R22, m2, m2, g, who + ".R22");
    check_path(w.R22h, m2, m2, g, who + ".R22hat");
    check_path(w.q, n, 1, g, who + ".q");
    check_path(w.rho1, m1, 1, g, who + ".rho1");
    check_path(w.rho2, m2, 1, g, who + ".rho2");
    check_mat(w.G, n, n, who + ".G");
    check_mat(w.Gh, n, n, who + ".Ghat");
    check_mat(w.g, n, 1, who + ".g");
    check_mat(w.gh, n, 1, who + ".ghat");

    check_symmetric_path(w.Q, who + ".Q");
    check_symmetric_path(w.Qh, who + ".Qhat");
    check_symmetric_path(w.R11, who + ".R11");
    check_symmetric_path(w.R11h, who + ".R11hat");
    check_symmetric_path(w.R22, who + ".R22");
    check_symmetric_path(w.R22h, who + ".R22hat");
    check_symmetric(w.G, who + ".G", g.n_steps);
    check_symmetric(w.Gh, who + ".Ghat", g.n_steps);
    check_transpose_pair(w.R12, w.R21, who + ".R12/R21");
    check_transpose_pair(w.R12h, w.R21h, who + ".R12hat/R21hat");
}

} // namespace

ProblemSpec zero_spec(int n, int m1, int m2, const TimeGrid& grid)
{
    ProblemSpec s;
    s.n = n;
    s.m1 = m1;
    s.m2 = m2;
    s.grid = grid;
    s.A = MatPath(grid, n, n);
    s.Ah = MatPath(grid, n, n);
    s.B1 = MatPath(grid, n, m1);
    s.B1h = MatPath(grid, n, m1);
    s.B2 = MatPath(grid, n, m2);
    s.B2h = MatPath(grid, n, m2);
    s.C = MatPath(grid, n, n);
    s.Ch = MatPath(grid, n, n);
    s.D1 = MatPath(grid, n, m1);
    s.D1h = MatPath(grid, n, m1);
    s.D2 = MatPath(grid, n, m2);
    s.D2h = MatPath(grid, n, m2);
    s.b = MatPath(grid, n, 1);
    s.sigma = MatPath(grid, n, 1);
    zero_weights(s.player1, n, m1, m2, grid);
    zero_weights(s.player2, n, m1, m2, grid);
    s.xi_mean = Vec::Zero(n);
    s.xi_cov = Mat::Zero(n, n);
    return s;
}

ValidatedProblem validate(const ProblemSpec& spec)
{
    const int n = spec.n, m1 = spec.m1, m2 = spec.m2;
    if (n < 1 || m1 < 1 || m2 < 1)
        throw DimensionMismatch("n/m1/m2 must be positive");
    const TimeGrid& g = spec.grid;
    g.check();
    check_path(spec.A, n, n, g, "A");
    check_path(spec.Ah, n, n, g, "Ahat");
    check_path(spec.B1, n, m1, g, "B1");
    check_path(spec.B1h, n, m1, g, "B1hat");
    check_path(spec.B2, n, m2, g, "B2");
    check_path(spec.B2h, n, m2, g, "B2hat");
    check_path(spec.C, n, n, g, "C");
    check_path(spec.Ch, n, n, g, "Chat");
    check_path(spec.D1, n, m1, g, "D1");
    check_path(spec.D1h, n, m1, g, "D1hat");
    check_path(spec.D2, n, m2, g, "D2");
    check_path(spec.D2h, n, m2, g, "D2hat");
    check_path(spec.b, n, 1, g, "b");
    check_path(spec.sigma, n, 1, g, "sigma");
    check_weights(spec.player1, n, m1, m2, g, "player1");
    check_weights(spec.player2, n, m1, m2, g, "player2");
    check_mat(spec.xi_mean, n, 1, "initial.mean");
    check_mat(spec.xi_cov, n, n, "initial.cov");
    check_symmetric(spec.xi_cov, "initial.cov", 0);
    Eigen::SelfAdjointEigenSolver<Mat> es(spec.xi_cov, Eigen::EigenvaluesOnly);
    double emin = es.eigenvalues().minCoeff();
    if (emin < -1e-10)
        throw BadCovariance(emin);
    for (const MatPath* p : {&spec.A, &spec.Ah, &spec.B1, &spec.B1h, &spec.B2, &spec.B2h, &spec.C, &spec.Ch,
                             &spec.D1, &spec.D1h, &spec.D2, &spec.D2h, &spec.b, &spec.sigma})
        for (const auto& v : p->values)
            if (!v.allFinite())
                throw ParseError("non-finite coefficient value");

    ValidatedProblem vp;
    vp.spec_ = std::make_shared<const ProblemSpec>(spec);
    return vp;
}

ValidatedProblem validate(const ValidatedProblem& prob) { return prob; }

// ---------------------------------------------------------------------------
// JSON reading and writing

namespace {

bool is_number_list(const json& j)
{
    if (!j.is_array())
        return false;
    for (const auto& e : j)
        if (!e.is_number())
            return false;
    return true;
}

bool is_matrix_literal(const json& j)
{
    if (!j.is_array() || j.empty())
        return false;
    for (const auto& r : j)
        if (!is_number_list(r))
            return false;
    return true;
}

Mat read_matrix(const json& j, const std::string& field)
{
    if (j.is_number())
        return Mat::Constant(1, 1, j.get<double>());
    if (!is_matrix_literal(j))
        throw ParseError("field '" + field + "' is not a row-major matrix");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw ParseError("field '" + field + "' has ragged rows");
        for (int c = 0; c < cols; ++c)
            m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Vec read_vector(const json& j, const std::string& field)
{
    if (j.is_number())
        return Vec::Constant(1, j.get<double>());
    if (!is_number_list(j) || j.empty())
        throw ParseError("field '" + field + "' is not a vector");
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i)
        v(i) = j[i].get<double>();
    return v;
}

void read_matrix_path(const json& obj, const char* key, MatPath& out, const TimeGrid& g, const std::string& prefix)
{
    if (!obj.contains(key))
        return;
    const json& j = obj.at(key);
    const std::string field = prefix + key;
    if (j.is_number() || is_matrix_literal(j)) {
        out = MatPath::constant(g, read_matrix(j, field));
        return;
    }
    if (!j.is_array())
        throw ParseError("field '" + field + "' is neither a matrix nor a list of node matrices");
    if (static_cast<int>(j.size()) != g.nodes())
        throw DimensionMismatch(field + " (expected " + std::to_string(g.nodes()) + " node matrices)");
    Mat first = read_matrix(j[0], field);
    MatPath p(g, static_cast<int>(first.rows()), static_cast<int>(first.cols()));
    for (int k = 0; k < g.nodes(); ++k) {
        p[k] = read_matrix(j[k], field);
        if (p[k].rows() != first.rows() || p[k].cols() != first.cols())
            throw DimensionMismatch(field + " (node " + std::to_string(k) + ")");
    }
    out = std::move(p);
}

void read_vector_path(const json& obj, const char* key, MatPath& out, const TimeGrid& g, const std::string& prefix)
{
    if (!obj.contains(key))
        return;
    const json& j = obj.at(key);
    const std::string field = prefix + key;
    if (j.is_number() || is_number_list(j)) {
        out = MatPath::constant(g, read_vector(j, field));
        return;
    }
    if (!j.is_array())
        throw ParseError("field '" + field + "' is neither a vector nor a list of node vectors");
    if (static_cast<int>(j.size()) != g.nodes())
        throw DimensionMismatch(field + " (expected " + std::to_string(g.nodes()) + " node vectors)");
    Vec first = read_vector(j[0], field);
    MatPath p(g, static_cast<int>(first.size()), 1);
    for (int k = 0; k < g.nodes(); ++k) {
        p[k] = read_vector(j[k], field);
        if (p[k].rows() != first.size())
            throw DimensionMismatch(field + " (node " + std::to_string(k) + ")");
    }
    out = std::move(p);
}

const json& require(const json& obj, const char* key, const std::string& prefix = "")
{
    if (!obj.is_object() || !obj.contains(key))
        throw MissingField(prefix + key);
    return obj.at(key);
}

void read_weights(const json& j, PlayerWeights& w, const TimeGrid& g, const std::string& prefix)
{
    if (!j.is_object())
        throw ParseError("field '" + prefix + "' must be an object");
    const bool has12 = j.contains("R12"), has21 = j.contains("R21");
    const bool has12h = j.contains("R12hat"), has21h = j.contains("R21hat");
    read_matrix_path(j, "Q", w.Q, g, prefix);
    read_matrix_path(j, "Qhat", w.Qh, g, prefix);
    read_matrix_path(j, "S1", w.S1, g, prefix);
    read_matrix_path(j, "S1hat", w.S1h, g, prefix);
    read_matrix_path(j, "S2", w.S2, g, prefix);
    read_matrix_path(j, "S2hat", w.S2h, g, prefix);
    read_matrix_path(j, "R11", w.R11, g, prefix);
    read_matrix_path(j, "R11hat", w.R11h, g, prefix);
    read_matrix_path(j, "R12", w.R12, g, prefix);
    read_matrix_path(j, "R12hat", w.R12h, g, prefix);
    read_matrix_path(j, "R21", w.R21, g, prefix);
    read_matrix_path(j, "R21hat", w.R21h, g, prefix);
    read_matrix_path(j, "R22", w.R22, g, prefix);
    read_matrix_path(j, "R22hat", w.R22h, g, prefix);
    read_vector_path(j, "q", w.q, g, prefix);
    read_vector_path(j, "rho1", w.rho1, g, prefix);
    read_vector_path(j, "rho2", w.rho2, g, prefix);
    if (j.contains("G"))
        w.G = read_matrix(j.at("G"), prefix + "G");
    if (j.contains("Ghat"))
        w.Gh = read_matrix(j.at("Ghat"), prefix + "Ghat");
    if (j.contains("g"))
        w.g = read_vector(j.at("g"), prefix + "g");
    if (j.contains("ghat"))
        w.gh = read_vector(j.at("ghat"), prefix + "ghat");

    // The cross weights come in transposed pairs; one of them suffices.
    auto transpose_path = [&](const MatPath& src) {
        MatPath p(g, src.cols(), src.rows());
        for (int k = 0; k < g.nodes(); ++k)
            p[k] = src[k].transpose();
        return p;
    };
    if (has12 && !has21)
        w.R21 = transpose_path(w.R12);
    if (has21 && !has12)
        w.R12 = transpose_path(w.R21);
    if (has12h && !has21h)
        w.R21h = transpose_path(w.R12h);
    if (has21h && !has12h)
        w.R12h = transpose_path(w.R21h);
}

json matrix_json(const Mat& m)
{
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

json vector_json(const Mat& v)
{
    json out = json::array();
    for (int i = 0; i < v.rows(); ++i)
        out.push_back(v(i, 0));
    return out;
}

json matrix_path_json(const MatPath& p)
{
    if (p.is_constant())
        return matrix_json(p[0]);
    json out = json::array();
    for (const auto& v : p.values)
        out.push_back(matrix_json(v));
    return out;
}

json vector_path_json(const MatPath& p)
{
    if (p.is_constant())
        return vector_json(p[0]);
    json out = json::array();
    for (const auto& v : p.values)
        out.push_back(vector_json(v));
    return out;
}

json weights_json(const PlayerWeights& w)
{
    json j;
    j["Q"] = matrix_path_json(w.Q);
    j["Qhat"] = matrix_path_json(w.Qh);
    j["S1"] = matrix_path_json(w.S1);
    j["S1hat"] = matrix_path_json(w.S1h);
    j["S2"] = matrix_path_json(w.S2);
    j["S2hat"] = matrix_path_json(w.S2h);
    j["R11"] = matrix_path_json(w.R11);
    j["R11hat"] = matrix_path_json(w.R11h);
    j["R12"] = matrix_path_json(w.R12);
    j["R12hat"] = matrix_path_json(w.R12h);
    j["R21"] = matrix_path_json(w.R21);
    j["R21hat"] = matrix_path_json(w.R21h);
    j["R22"] = matrix_path_json(w.R22);
    j["R22hat"] = matrix_path_json(w.R22h);
    j["q"] = vector_path_json(w.q);
    j["rho1"] = vector_path_json(w.rho1);
    j["rho2"] = vector_path_json(w.rho2);
    j["G"] = matrix_json(w.G);
    j["Ghat"] = matrix_json(w.Gh);
    j["g"] = vector_json(w.g);
    j["ghat"] = vector_json(w.gh);
    return j;
}

bool paths_identical(const MatPath& a, const MatPath& b)
{
    if (a.size() != b.size() || a.rows() != b.rows() || a.cols() != b.cols())
        return false;
    for (int k = 0; k < a.size(); ++k)
        if (a[k].rows() != b[k].rows() || a[k].cols() != b[k].cols() || !(a[k].array() == b[k].array()).all())
            return false;
    return true;
}

bool mats_identical(const Mat& a, const Mat& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool weights_identical(const PlayerWeights& a, const PlayerWeights& b)
{
    return paths_identical(a.Q, b.Q) && paths_identical(a.Qh, b.Qh) && paths_identical(a.S1, b.S1) &&
           paths_identical(a.S1h, b.S1h) && paths_identical(a.S2, b.S2) && paths_identical(a.S2h, b.S2h) &&
           paths_identical(a.R11, b.R11) && paths_identical(a.R11h, b.R11h) && paths_identical(a.R12, b.R12) &&
           paths_identical(a.R12h, b.R12h) && paths_identical(a.R21, b.R21) && paths_identical(a.R21h, b.R21h) &&
           paths_identical(a.R22, b.R22) && paths_identical(a.R22h, b.R22h) && paths_identical(a.q, b.q) &&
           paths_identical(a.rho1, b.rho1) && paths_identical(a.rho2, b.rho2) && mats_identical(a.G, b.G) &&
           mats_identical(a.Gh, b.Gh) && mats_identical(a.g, b.g) && mats_identical(a.gh, b.gh);
}

} // namespace

ProblemSpec parse_spec(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());
    }
    if (!j.is_object())
        throw ParseError("top level must be an object");
    try {
        const int n = require(j, "n").get<int>();
        const int m1 = require(j, "m1").get<int>();
        const int m2 = require(j, "m2").get<int>();
        TimeGrid g;
        g.t0 = require(j, "t0").get<double>();
        g.T = require(j, "T").get<double>();
        g.n_steps = require(j, "n_steps").get<int>();
        g.check();
        if (n < 1 || m1 < 1 || m2 < 1)
            throw DimensionMismatch("n/m1/m2 must be positive");

        ProblemSpec s = zero_spec(n, m1, m2, g);
        const json& co = require(j, "coeffs");
        if (!co.is_object())
            throw ParseError("field 'coeffs' must be an object");
        read_matrix_path(co, "A", s.A, g, "coeffs.");
        read_matrix_path(co, "Ahat", s.Ah, g, "coeffs.");
        read_matrix_path(co, "B1", s.B1, g, "coeffs.");
        read_matrix_path(co, "B1hat", s.B1h, g, "coeffs.");
        read_matrix_path(co, "B2", s.B2, g, "coeffs.");
        read_matrix_path(co, "B2hat", s.B2h, g, "coeffs.");
        read_matrix_path(co, "C", s.C, g, "coeffs.");
        read_matrix_path(co, "Chat", s.Ch, g, "coeffs.");
        read_matrix_path(co, "D1", s.D1, g, "coeffs.");
        read_matrix_path(co, "D1hat", s.D1h, g, "coeffs.");
        read_matrix_path(co, "D2", s.D2, g, "coeffs.");
        read_matrix_path(co, "D2hat", s.D2h, g, "coeffs.");

        if (j.contains("inhomog")) {
            const json& in = j.at("inhomog");
            if (!in.is_object())
                throw ParseError("field 'inhomog' must be an object");
            read_vector_path(in, "b", s.b, g, "inhomog.");
            read_vector_path(in, "sigma", s.sigma, g, "inhomog.");
        }

        const json& w = require(j, "weights");
        read_weights(require(w, "player1", "weights."), s.player1, g, "weights.player1.");
        read_weights(require(w, "player2", "weights."), s.player2, g, "weights.player2.");

        const json& init = require(j, "initial");
        s.xi_mean = read_vector(require(init, "mean", "initial."), "initial.mean");
        if (init.contains("cov"))
            s.xi_cov = read_matrix(init.at("cov"), "initial.cov");
        return s;
    } catch (const json::exception& e) {
        throw ParseError(e.what());
    }
}

ProblemSpec load_spec(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_spec(ss.str());
}

std::string dump_spec(const ProblemSpec& s)
{
    json j;
    j["n"] = s.n;
    j["m1"] = s.m1;
    j["m2"] = s.m2;
    j["t0"] = s.grid.t0;
    j["T"] = s.grid.T;
    j["n_steps"] = s.grid.n_steps;
    json co;
    co["A"] = matrix_path_json(s.A);
    co["Ahat"] = matrix_path_json(s.Ah);
    co["B1"] = matrix_path_json(s.B1);
    co["B1hat"] = matrix_path_json(s.B1h);
    co["B2"] = matrix_path_json(s.B2);
    co["B2hat"] = matrix_path_json(s.B2h);
    co["C"] = matrix_path_json(s.C);
    co["Chat"] = matrix_path_json(s.Ch);
    co["D1"] = matrix_path_json(s.D1);
    co["D1hat"] = matrix_path_json(s.D1h);
    co["D2"] = matrix_path_json(s.D2);
    co["D2hat"] = matrix_path_json(s.D2h);
    j["coeffs"] = co;
    j["inhomog"] = {{"b", vector_path_json(s.b)}, {"sigma", vector_path_json(s.sigma)}};
    j["weights"] = {{"player1", weights_json(s.player1)}, {"player2", weights_json(s.player2)}};
    j["initial"] = {{"mean", vector_json(s.xi_mean)}, {"cov", matrix_json(s.xi_cov)}};
    return j.dump(2);
}

void save_spec(const ProblemSpec& spec, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot write '" + path + "'");
    out << dump_spec(spec) << "\n";
}

bool specs_identical(const ProblemSpec& a, const ProblemSpec& b)
{
    if (a.n != b.n || a.m1 != b.m1 || a.m2 != b.m2)
        return false;
    if (a.grid.t0 != b.grid.t0 || a.grid.T != b.grid.T || a.grid.n_steps != b.grid.n_steps)
        return false;
    const MatPath* pa[] = {&a.A, &a.Ah, &a.B1, &a.B1h, &a.B2, &a.B2h, &a.C, &a.Ch,
                           &a.D1, &a.D1h, &a.D2, &a.D2h, &a.b, &a.sigma};
    const MatPath* pb[] = {&b.A, &b.Ah, &b.B1, &b.B1h, &b.B2, &b.B2h, &b.C, &b.Ch,
                           &b.D1, &b.D1h, &b.D2, &b.D2h, &b.b, &b.sigma};
    for (size_t i = 0; i < std::size(pa); ++i)
        if (!paths_identical(*pa[i], *pb[i]))
            return false;
    return weights_identical(a.player1, b.player1) && weights_identical(a.player2, b.player2) &&
           mats_identical(a.xi_mean, b.xi_mean) && mats_identical(a.xi_cov, b.xi_cov);
}

namespace {

WeightsAt weights_at(const PlayerWeights& w, double s)
{
    WeightsAt o;
    o.Q = w.Q.at(s);
    o.Qh = w.Qh.at(s);
    o.S1 = w.S1.at(s);
    o.S1h = w.S1h.at(s);
    o.S2 = w.S2.at(s);
    o.S2h = w.S2h.at(s);
    o.R11 = w.R11.at(s);
    o.R11h = w.R11h.at(s);
    o.R12 = w.R12.at(s);
    o.R12h = w.R12h.at(s);
    o.R21 = w.R21.at(s);
    o.R21h = w.R21h.at(s);
    o.R22 = w.R22.at(s);
    o.R22h = w.R22h.at(s);
    o.q = w.q.at(s);
    o.rho1 = w.rho1.at(s);
    o.rho2 = w.rho2.at(s);
    return o;
}

} // namespace

CoeffsAt coeffs_at(const ProblemSpec& spec, double s)
{
    CoeffsAt c;
    c.A = spec.A.at(s);
    c.Ah = spec.Ah.at(s);
    c.B1 = spec.B1.at(s);
    c.B1h = spec.B1h.at(s);
    c.B2 = spec.B2.at(s);
    c.B2h = spec.B2h.at(s);
    c.C = spec.C.at(s);
    c.Ch = spec.Ch.at(s);
    c.D1 = spec.D1.at(s);
    c.D1h = spec.D1h.at(s);
    c.D2 = spec.D2.at(s);
    c.D2h = spec.D2h.at(s);
    c.b = spec.b.at(s);
    c.sigma = spec.sigma.at(s);
    c.w1 = weights_at(spec.player1, s);
    c.w2 = weights_at(spec.player2, s);
    return c;
}

namespace {

MatPath resample(const MatPath& p, const TimeGrid& g)
{
    if (p.is_constant())
        return MatPath::constant(g, p[0]);
    MatPath out(g, p.rows(), p.cols());
    for (int k = 0; k < g.nodes(); ++k)
        out[k] = p.at(g.time(k));
    return out;
}

void resample_weights(PlayerWeights& w, const TimeGrid& g)
{
    for (MatPath* p : {&w.Q, &w.Qh, &w.S1, &w.S1h, &w.S2, &w.S2h, &w.R11, &w.R11h, &w.R12, &w.R12h, &w.R21,
                       &w.R21h, &w.R22, &w.R22h, &w.q, &w.rho1, &w.rho2})
        *p = resample(*p, g);
}

} // namespace

ProblemSpec refine_spec(const ProblemSpec& spec, int factor)
{
    if (factor < 1)
        throw BadGrid("refinement factor must be at least 1, got " + std::to_string(factor));
    ProblemSpec out = spec;
    out.grid.n_steps = spec.grid.n_steps * factor;
    const TimeGrid& g = out.grid;
    for (MatPath* p : {&out.A, &out.Ah, &out.B1, &out.B1h, &out.B2, &out.B2h, &out.C, &out.Ch, &out.D1, &out.D1h,
                       &out.D2, &out.D2h, &out.b, &out.sigma})
        *p = resample(*p, g);
    resample_weights(out.player1, g);
    resample_weights(out.player2, g);
    return out;
}

} // namespace mflq
