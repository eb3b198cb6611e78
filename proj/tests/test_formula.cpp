#include <doctest.h>

#include "fusioniv/error.hpp"
#include "fusioniv/formula.hpp"

using namespace fusioniv;

TEST_SUITE("formula") {

TEST_CASE("main effects parse and canonicalize") {
  const Formula f = Formula::parse("1 + z + x1 + x2 + x3");
  REQUIRE(f.size() == 5);
  CHECK(f.to_string() == "1 + z + x1 + x2 + x3");
  CHECK(f.has_z());
  CHECK(f.max_x_index() == 3);
}

TEST_CASE("quadratic source-score formula keeps written order within degrees") {
  const Formula f = Formula::parse("1 + z + x1 + x2 + x3 + x1^2 + x2^2 + x3^2");
  REQUIRE(f.size() == 8);
  CHECK(f.to_string() == "1 + z + x1 + x2 + x3 + x1^2 + x2^2 + x3^2");
}

TEST_CASE("intercept sorts first regardless of position") {
  const Formula f = Formula::parse("x1 + 1 + z");
  CHECK(f.to_string() == "1 + x1 + z");  // stable within degree one
}

TEST_CASE("empty term is a syntax error") {
  CHECK_THROWS_WITH_AS(Formula::parse("1 + + z"), doctest::Contains("empty term"), Error);
  CHECK_THROWS_AS(Formula::parse(""), Error);
  CHECK_THROWS_AS(Formula::parse("+ z"), Error);
}

TEST_CASE("bad tokens rejected") {
  CHECK_THROWS_AS(Formula::parse("1 + y"), Error);
  CHECK_THROWS_AS(Formula::parse("x0"), Error);
  CHECK_THROWS_AS(Formula::parse("x1^0"), Error);
  CHECK_THROWS_AS(Formula::parse("1^2"), Error);
  CHECK_THROWS_AS(Formula::parse("x"), Error);
}

TEST_CASE("duplicate terms rejected, including disguised ones") {
  try {
    Formula::parse("z + z");
    FAIL("expected DuplicateTerm");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateTerm);
  }
  CHECK_THROWS_AS(Formula::parse("x1*x1 + x1^2"), Error);
}

TEST_CASE("products of powers evaluate factor-wise") {
  const Formula f = Formula::parse("x1*x3 + x1^2");
  REQUIRE(f.size() == 2);
  const double x[3] = {0.5, 0.1, 0.2};
  CHECK(f.terms()[0].eval(0.0, x, 3) == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(f.terms()[1].eval(0.0, x, 3) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("round trip through to_string") {
  for (const char* text : {"1", "1 + z + x1", "z*x2 + x1^3", "1 + x1*x2*x3 + z^2"}) {
    const Formula f = Formula::parse(text);
    CHECK(Formula::parse(f.to_string()) == f);
  }
}

TEST_CASE("index bound enforced lazily at evaluation") {
  const Formula f = Formula::parse("x7");
  const double x[3] = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(f.terms()[0].eval(0.0, x, 3), Error);
}

}  // TEST_SUITE
