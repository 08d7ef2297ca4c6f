#include <doctest.h>

#include <cmath>

#include "mflq/odecore.hpp"

using namespace mflq;

namespace {

Mat scalar(double v)
{
    return Mat::Constant(1, 1, v);
}

} // namespace

TEST_CASE("zero field keeps the terminal value")
{
    const TimeGrid g{0.0, 1.0, 50};
    const MatPath p = integrate_backward([](double, const Mat& m) -> Mat { return Mat::Zero(m.rows(), m.cols()); },
                                         Mat::Identity(3, 3), g);
    for (int k = 0; k < g.nodes(); ++k)
        CHECK((p[k] - Mat::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("linear solution is integrated exactly")
{
    const TimeGrid g{0.0, 1.0, 200};
    const MatPath p = integrate_backward([](double, const Mat&) -> Mat { return scalar(-1.0); }, scalar(0.0), g);
    CHECK(std::abs(p[0](0, 0) - 1.0) <= 1e-12);
    CHECK(p[g.n_steps](0, 0) == 0.0);
}

TEST_CASE("Riccati step halving shows fourth order")
{
    const OdeField f = [](double, const Mat& p) -> Mat {
        const double v = p(0, 0);
        return scalar(-2.0 * v - 1.0 + v * v);
    };
    auto endpoint = [&](int steps) {
        return integrate_backward(f, scalar(1.0), TimeGrid{0.0, 1.0, steps})[0](0, 0);
    };
    const double p200 = endpoint(200), p400 = endpoint(400), p800 = endpoint(800);
    const double ratio = std::abs(p200 - p400) / std::abs(p400 - p800);
    CHECK(ratio >= 8.0);
    CHECK(ratio <= 32.0);
}

TEST_CASE("forward exponential growth")
{
    const TimeGrid g{0.0, 1.0, 200};
    const double a = 0.7;
    const MatPath m = integrate_forward([&](double, const Mat& x) -> Mat { return a * x; }, scalar(2.0), g);
    CHECK(std::abs(m[g.n_steps](0, 0) - 2.0 * std::exp(a)) <= 1e-10);

    const MatPath c = integrate_forward([](double, const Mat& x) -> Mat { return Mat::Zero(x.rows(), x.cols()); },
                                        scalar(1.5), g);
    CHECK(c[g.n_steps](0, 0) == 1.5);
}

TEST_CASE("diagonal matrix system decouples into exponentials")
{
    const TimeGrid g{0.0, 1.0, 200};
    Mat A = Mat::Zero(3, 3);
    A.diagonal() << -1.0, 0.3, 0.5;
    Mat M0(3, 2);
    M0 << 1, 2, 3, 4, 5, 6;
    const MatPath m = integrate_forward([&](double, const Mat& x) -> Mat { return A * x; }, M0, g);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(std::abs(m[g.n_steps](i, j) - M0(i, j) * std::exp(A(i, i))) <= 1e-10);
}

TEST_CASE("ode residual of exact and wrong paths")
{
    const TimeGrid g{0.0, 1.0, 100};
    const OdeField minus_one = [](double, const Mat&) -> Mat { return scalar(-1.0); };
    const MatPath p = integrate_backward(minus_one, scalar(0.0), g);
    CHECK(ode_residual(p, minus_one) <= 1e-12);

    const MatPath c = MatPath::constant(g, scalar(4.0));
    CHECK(ode_residual(c, [](double, const Mat&) -> Mat { return scalar(1.0); }) ==
          doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ode residual of a Riccati path shrinks at second order")
{
    const OdeField f = [](double s, const Mat& p) -> Mat {
        const double v = p(0, 0);
        return scalar(-2.0 * v - 1.0 - std::sin(3.0 * s) + v * v);
    };
    const double r1 = ode_residual(integrate_backward(f, scalar(1.0), TimeGrid{0.0, 1.0, 100}), f);
    const double r2 = ode_residual(integrate_backward(f, scalar(1.0), TimeGrid{0.0, 1.0, 200}), f);
    CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("stacking and splitting are inverse")
{
    Mat a = Mat::Random(2, 3), b = Mat::Random(4, 3);
    const Mat s = stack_rows({a, b});
    const auto parts = split_rows(s, {2, 4});
    CHECK(parts[0] == a);
    CHECK(parts[1] == b);
}
