#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"

using namespace mflq;
using fixtures::set;

namespace {

nlohmann::json example_json()
{
    std::ifstream in(fixtures::data_path("scalar_example.json"));
    std::stringstream ss;
    ss << in.rdbuf();
    return nlohmann::json::parse(ss.str());
}

} // namespace

TEST_CASE("zero scalar problem with a terminal weight is valid")
{
    ProblemSpec s = zero_spec(1, 1, 1, TimeGrid{0.0, 1.0, 10});
    s.player1.G = Mat::Ones(1, 1);
    CHECK_NOTHROW(validate(s));
}

TEST_CASE("asymmetric running weight is rejected")
{
    ProblemSpec s = zero_spec(2, 1, 1, TimeGrid{0.0, 1.0, 10});
    Mat Q(2, 2);
    Q << 0, 1, 0, 0;
    s.player1.Q[3] = Q;
    CHECK_THROWS_AS(validate(s), AsymmetricWeight);
}

TEST_CASE("control matrix with the wrong shape is rejected")
{
    ProblemSpec s = zero_spec(2, 1, 1, TimeGrid{0.0, 1.0, 10});
    s.B1 = MatPath(s.grid, 2, 2);
    CHECK_THROWS_AS(validate(s), DimensionMismatch);
}

TEST_CASE("omitted inhomogeneous drift defaults to zero")
{
    nlohmann::json j = example_json();
    j["inhomog"].erase("b");
    const ProblemSpec s = parse_spec(j.dump());
    CHECK(s.b.max_abs() == 0.0);
    CHECK(s.sigma.max_abs() == doctest::Approx(0.3));
}

TEST_CASE("zero steps is a bad grid")
{
    nlohmann::json j = example_json();
    j["n_steps"] = 0;
    CHECK_THROWS_AS(validate(parse_spec(j.dump())), BadGrid);
}

TEST_CASE("unreadable input and malformed text are parse errors")
{
    CHECK_THROWS_AS(load_spec("/nonexistent/problem.json"), ParseError);
    CHECK_THROWS_AS(parse_spec("{ not json"), ParseError);
    nlohmann::json j = example_json();
    j.erase("n");
    CHECK_THROWS(parse_spec(j.dump()));
}

TEST_CASE("save then load reproduces the problem bit for bit")
{
    const ProblemSpec s = fixtures::scalar_example();
    const std::string path = "roundtrip_problem.json";
    save_spec(s, path);
    CHECK(specs_identical(s, load_spec(path)));

    // Time-varying paths survive too.
    ProblemSpec v = zero_spec(2, 1, 1, TimeGrid{0.0, 1.0, 7});
    for (int k = 0; k < v.grid.nodes(); ++k)
        v.A[k] = Mat::Constant(2, 2, 0.1 * k + 1.0 / 3.0);
    save_spec(v, path);
    CHECK(specs_identical(v, load_spec(path)));
}

TEST_CASE("validating twice shares the same data")
{
    const ValidatedProblem a = validate(fixtures::scalar_example());
    const ValidatedProblem b = validate(a);
    CHECK(a.same_as(b));
}

TEST_CASE("refinement multiplies the steps and keeps constant paths")
{
    const ProblemSpec s = fixtures::scalar_example();
    const ProblemSpec r = refine_spec(s, 3);
    CHECK(r.grid.n_steps == 600);
    CHECK(r.A.size() == 601);
    CHECK(r.A[600](0, 0) == s.A[0](0, 0));
    CHECK_THROWS_AS(refine_spec(s, 0), BadGrid);

    ProblemSpec v = zero_spec(1, 1, 1, TimeGrid{0.0, 1.0, 4});
    for (int k = 0; k < 5; ++k)
        v.A[k](0, 0) = 0.25 * k;  // linear in t, so any interpolation is exact
    const ProblemSpec rv = refine_spec(v, 2);
    for (int k = 0; k < 9; ++k)
        CHECK(rv.A[k](0, 0) == doctest::Approx(rv.grid.time(k)).epsilon(1e-14));
}
