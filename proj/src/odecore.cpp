#include "mflq/odecore.hpp"

#include <cmath>

namespace mflq {

namespace {

void check_finite(const Mat& m, const std::string& label, int node)
{
    if (!m.allFinite())
        throw NonFiniteState(label, node);
}

Mat rk4_step(const OdeField& f, double s, double s_half, double s_next, double h, const Mat& y)
{
    // h is the signed step s_next − s.
    Mat k1 = f(s, y);
    Mat k2 = f(s_half, y + (0.5 * h) * k1);
    Mat k3 = f(s_half, y + (0.5 * h) * k2);
    Mat k4 = f(s_next, y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void attach_derivatives(MatPath& p, const OdeField& rhs, const TimeGrid& grid)
{
    p.derivs.resize(p.values.size());
    for (int k = 0; k < grid.nodes(); ++k)
        p.derivs[k] = rhs(grid.time(k), p.values[k]);
}

} // namespace

MatPath integrate_backward(const OdeField& rhs, const Mat& terminal, const TimeGrid& grid,
                           const IntegrateOptions& opts)
{
    MatPath path(grid, static_cast<int>(terminal.rows()), static_cast<int>(terminal.cols()));
    const int N = grid.n_steps;
    check_finite(terminal, opts.label, N);
    path[N] = terminal;
    // Time reversal τ = T − s turns the terminal-value problem into a forward one;
    // with the signed step −dt the RK4 stages are evaluated at s, s − dt/2, s − dt.
    Mat y = terminal;
    for (int k = N; k > 0; --k) {
        const double s = grid.time(k);
        const double s_prev = grid.time(k - 1);
        const double h = s_prev - s;
        y = rk4_step(rhs, s, 0.5 * (s + s_prev), s_prev, h, y);
        if (opts.post_step)
            opts.post_step(y);
        check_finite(y, opts.label, k - 1);
        path[k - 1] = y;
    }
    if (opts.store_derivatives)
        attach_derivatives(path, rhs, grid);
    return path;
}

MatPath integrate_forward(const OdeField& rhs, const Mat& initial, const TimeGrid& grid, const IntegrateOptions& opts)
{
    MatPath path(grid, static_cast<int>(initial.rows()), static_cast<int>(initial.cols()));
    const int N = grid.n_steps;
    check_finite(initial, opts.label, 0);
    path[0] = initial;
    Mat y = initial;
    for (int k = 0; k < N; ++k) {
        const double s = grid.time(k);
        const double s_next = grid.time(k + 1);
        y = rk4_step(rhs, s, 0.5 * (s + s_next), s_next, s_next - s, y);
        if (opts.post_step)
            opts.post_step(y);
        check_finite(y, opts.label, k + 1);
        path[k + 1] = y;
    }
    if (opts.store_derivatives)
        attach_derivatives(path, rhs, grid);
    return path;
}

double ode_residual(const MatPath& path, const OdeField& rhs)
{
    const TimeGrid& g = path.grid();
    double worst = 0.0;
    for (int k = 1; k < g.n_steps; ++k) {
        Mat cd = (path[k + 1] - path[k - 1]) / (g.time(k + 1) - g.time(k - 1));
        Mat diff = cd - rhs(g.time(k), path[k]);
        worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
    return worst;
}

Mat stack_rows(const std::vector<Mat>& blocks)
{
    int rows = 0;
    for (const auto& b : blocks)
        rows += static_cast<int>(b.rows());
    Mat out(rows, blocks.front().cols());
    int r = 0;
    for (const auto& b : blocks) {
        out.middleRows(r, b.rows()) = b;
        r += static_cast<int>(b.rows());
    }
    return out;
}

std::vector<Mat> split_rows(const Mat& m, const std::vector<int>& rows)
{
    std::vector<Mat> out;
    int r = 0;
    for (int n : rows) {
        out.push_back(m.middleRows(r, n));
        r += n;
    }
    return out;
}

MatPath row_block(const MatPath& p, int row0, int rows)
{
    MatPath out(p.grid(), rows, p.cols());
    for (int k = 0; k < p.size(); ++k)
        out[k] = p[k].middleRows(row0, rows);
    if (p.has_derivatives()) {
        out.derivs.resize(p.derivs.size());
        for (int k = 0; k < p.size(); ++k)
            out.derivs[k] = p.derivs[k].middleRows(row0, rows);
    }
    return out;
}

MatPath col_block(const MatPath& p, int col0, int cols)
{
    MatPath out(p.grid(), p.rows(), cols);
    for (int k = 0; k < p.size(); ++k)
        out[k] = p[k].middleCols(col0, cols);
    if (p.has_derivatives()) {
        out.derivs.resize(p.derivs.size());
        for (int k = 0; k < p.size(); ++k)
            out.derivs[k] = p.derivs[k].middleCols(col0, cols);
    }
    return out;
}

void symmetrize(Mat& m) { m = 0.5 * (m + m.transpose()).eval(); }

} // namespace mflq
