#include <doctest.h>

#include <cmath>

#include "sfit/gradcheck.hpp"

using namespace sfit;

TEST_CASE("full suite including networks passes") {
  GradCheckOptions o;
  o.seed = 5;
  const auto report = run_gradcheck(o);
  CHECK(report.cases.size() >= 100);
  for (const auto& c : report.cases) {
    INFO(c.name << " error " << c.max_error << " skips " << c.kink_skips);
    CHECK(c.passed);
  }
  CHECK(report.passed());
}

TEST_CASE("a wrong gradient is caught") {
  std::vector<double> x{0.3, -0.7};
  GradProblem p;
  p.slots = {std::span<double>(x)};
  p.evaluate = [&] { return x[0] * x[0] + std::sin(x[1]); };
  p.gradient = [&] { return std::vector<std::vector<double>>{{2 * x[0], std::cos(x[1]) * 1.01}}; };
  const auto bad = check_problem("bad", p, 1e-4, 1e-4, 1e-3);
  CHECK_FALSE(bad.passed);
  p.gradient = [&] { return std::vector<std::vector<double>>{{2 * x[0], std::cos(x[1])}}; };
  const auto good = check_problem("good", p, 1e-4, 1e-4, 1e-3);
  CHECK(good.passed);
  CHECK(good.max_error < 1e-8);
  // Buffers are restored after perturbation.
  CHECK(x[0] == 0.3);
  CHECK(x[1] == -0.7);
}

TEST_CASE("kinks are not skipped for single ops") {
  std::vector<double> x{0.0};
  GradProblem p;
  p.slots = {std::span<double>(x)};
  p.evaluate = [&] { return std::abs(x[0]); };
  p.gradient = [&] { return std::vector<std::vector<double>>{{1.0}}; };
  CHECK_FALSE(check_problem("abs", p, 1e-4, 1e-4, 1e-3).passed);
  p.allow_kinks = true;
  const auto c = check_problem("abs", p, 1e-4, 1e-4, 1e-3, 1.0);
  CHECK(c.kink_skips == 1);
  CHECK(c.passed);
}
