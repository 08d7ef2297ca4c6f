#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "mflq/errors.hpp"

namespace mflq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Tolerances {
    double eps_pd = 1e-8;        // smallest admissible eigenvalue of Σ₁, Σ̂₁, Σ̃₂, Σ̌₂
    double kappa_max = 1e10;     // largest admissible condition number of I − P₂𝒦
    double tol_residual = 1e-8;  // relative tolerance of stationarity residuals
};

struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int n_steps = 2;

    double dt() const { return (T - t0) / n_steps; }
    int nodes() const { return n_steps + 1; }
    double time(int k) const { return k == n_steps ? T : t0 + k * dt(); }
    void check() const;
};

// One matrix per grid node. When derivative samples are attached the path is
// evaluated between nodes by cubic Hermite interpolation, otherwise linearly.
class MatPath {
public:
    MatPath() = default;
    MatPath(const TimeGrid& grid, int rows, int cols);
    static MatPath constant(const TimeGrid& grid, const Mat& m);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return static_cast<int>(values.size()); }
    const TimeGrid& grid() const { return grid_; }

    const Mat& operator[](int k) const { return values[k]; }
    Mat& operator[](int k) { return values[k]; }

    Mat at(double s) const;
    bool has_derivatives() const { return !derivs.empty(); }
    bool is_constant() const;
    double max_abs() const;

    std::vector<Mat> values;
    std::vector<Mat> derivs;

private:
    TimeGrid grid_;
    int rows_ = 0;
    int cols_ = 0;
};

// Locate s on the grid: node index k and fraction θ ∈ [0,1] of the step [t_k, t_{k+1}].
// Times within 1e-9 steps of a node snap onto it.
void locate(const TimeGrid& grid, double s, int& k, double& theta);

struct PlayerWeights {
    MatPath Q, Qh, S1, S1h, S2, S2h;
    MatPath R11, R11h, R12, R12h, R21, R21h, R22, R22h;
    MatPath q, rho1, rho2;
    Mat G, Gh;
    Vec g, gh;
};

struct ProblemSpec {
    int n = 1;
    int m1 = 1;
    int m2 = 1;
    TimeGrid grid;
    MatPath A, Ah, B1, B1h, B2, B2h, C, Ch, D1, D1h, D2, D2h;
    MatPath b, sigma;
    PlayerWeights player1, player2;
    Vec xi_mean;
    Mat xi_cov;

    const PlayerWeights& player(int i) const { return i == 1 ? player1 : player2; }
};

// A spec with every invariant checked. Shares the underlying data read-only.
class ValidatedProblem {
public:
    const ProblemSpec& spec() const { return *spec_; }
    const ProblemSpec* operator->() const { return spec_.get(); }
    bool same_as(const ValidatedProblem& other) const { return spec_ == other.spec_; }

private:
    friend ValidatedProblem validate(const ProblemSpec& spec);
    std::shared_ptr<const ProblemSpec> spec_;
};

// Zero-filled spec with every path allocated at the right shape.
ProblemSpec zero_spec(int n, int m1, int m2, const TimeGrid& grid);

ValidatedProblem validate(const ProblemSpec& spec);
ValidatedProblem validate(const ValidatedProblem& prob);

ProblemSpec parse_spec(const std::string& text);
ProblemSpec load_spec(const std::string& path);
std::string dump_spec(const ProblemSpec& spec);
void save_spec(const ProblemSpec& spec, const std::string& path);

bool specs_identical(const ProblemSpec& a, const ProblemSpec& b);

// Same problem on a grid with factor× as many steps; coefficient paths are
// resampled by their own interpolation.
ProblemSpec refine_spec(const ProblemSpec& spec, int factor);

// Weights of one player sampled at a time.
struct WeightsAt {
    Mat Q, Qh, S1, S1h, S2, S2h, R11, R11h, R12, R12h, R21, R21h, R22, R22h;
    Vec q, rho1, rho2;
};

// All coefficient paths sampled at a time (linear interpolation between nodes).
struct CoeffsAt {
    Mat A, Ah, B1, B1h, B2, B2h, C, Ch, D1, D1h, D2, D2h;
    Vec b, sigma;
    WeightsAt w1, w2;
};

CoeffsAt coeffs_at(const ProblemSpec& spec, double s);

} // namespace mflq
