#pragma once

#include <functional>
#include <string>

#include "mflq/problem.hpp"

namespace mflq {

// Right-hand side (s, M) -> dM/ds. Output has the shape of M.
using OdeField = std::function<Mat(double, const Mat&)>;

struct IntegrateOptions {
    std::string label = "ode";
    // Applied to the state after every completed step (e.g. symmetrization).
    std::function<void(Mat&)> post_step;
    // Store dM/ds at every node so the path can be Hermite-interpolated.
    bool store_derivatives = true;
};

// Classical RK4 from T down to t0. The last sample equals the terminal value exactly.
MatPath integrate_backward(const OdeField& rhs, const Mat& terminal, const TimeGrid& grid,
                           const IntegrateOptions& opts = {});

// Classical RK4 from t0 up to T. The first sample equals the initial value exactly.
MatPath integrate_forward(const OdeField& rhs, const Mat& initial, const TimeGrid& grid,
                          const IntegrateOptions& opts = {});

// Max over interior nodes of the sup-norm of (central difference − rhs).
double ode_residual(const MatPath& path, const OdeField& rhs);

// Stack / split helpers for integrating several blocks as one state.
Mat stack_rows(const std::vector<Mat>& blocks);
std::vector<Mat> split_rows(const Mat& m, const std::vector<int>& rows);

// Restrict a stacked path to a row block.
MatPath row_block(const MatPath& p, int row0, int rows);
MatPath col_block(const MatPath& p, int col0, int cols);

void symmetrize(Mat& m);

} // namespace mflq
