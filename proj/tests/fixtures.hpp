#pragma once

#include <string>

#include "mflq/problem.hpp"

namespace fixtures {

using mflq::Mat;
using mflq::MatPath;
using mflq::ProblemSpec;
using mflq::TimeGrid;

inline std::string data_path(const std::string& name)
{
    return std::string(MFLQ_DATA_DIR) + "/" + name;
}

inline ProblemSpec scalar_example()
{
    return mflq::load_spec(data_path("scalar_example.json"));
}

inline void set(MatPath& p, double v)
{
    p = MatPath::constant(p.grid(), Mat::Constant(p.rows(), p.cols(), v));
}

inline void set(MatPath& p, const Mat& m)
{
    p = MatPath::constant(p.grid(), m);
}

// Cross weight between u₁ and u₂, written consistently in both storage orders.
inline void set_cross(mflq::PlayerWeights& w, double v, double vhat = 0.0)
{
    set(w.R12, v);
    set(w.R21, v);
    set(w.R12h, vhat);
    set(w.R21h, vhat);
}

// Scalar problem whose only nonzero data are unit control weights, so both
// players' Hessians are positive definite and everything else can be set freely.
inline ProblemSpec scalar_base(double T = 1.0, int n_steps = 200)
{
    ProblemSpec s = mflq::zero_spec(1, 1, 1, TimeGrid{0.0, T, n_steps});
    set(s.player1.R11, 1.0);
    set(s.player2.R22, 1.0);
    return s;
}

} // namespace fixtures
