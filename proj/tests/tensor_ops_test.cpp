#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "sfit/errors.hpp"
#include "sfit/gradcheck.hpp"
#include "sfit/ops.hpp"

using namespace sfit;
using sfit::test::random_tensor;

namespace {

Tensor<double> mat2(double a, double b, double c, double d, bool grad = false) {
  return Tensor<double>({2, 2}, {a, b, c, d}, grad);
}

// Central difference of a scalar function of one buffer.
template <typename F>
std::vector<double> central_diff(std::vector<double>& x, F f, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("matmul by identity and orthogonal supports") {
  Tape<double> tape;
  auto id = matmul(tape, mat2(1, 2, 3, 4), mat2(1, 0, 0, 1));
  CHECK(std::vector<double>(id.values().begin(), id.values().end()) == std::vector<double>{1, 2, 3, 4});
  auto zero = matmul(tape, mat2(1, 0, 0, 0), mat2(0, 0, 0, 1));
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("gradient of sum(A x B) against a finite-difference oracle") {
  // Oracle computed here with h = 1e-5, then compared to the frozen all-ones matrix.
  std::vector<double> a{1, 1, 1, 1};
  const std::vector<double> b{1, 0, 0, 1};
  auto f = [&] {
    double s = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) s += a[i * 2 + k] * b[k * 2 + j];
    return s;
  };
  const auto fd = central_diff(a, f, 1e-5);
  for (double g : fd) CHECK(g == doctest::Approx(1.0).epsilon(1e-9));

  Tape<double> tape;
  auto A = mat2(1, 1, 1, 1, true);
  auto loss = sum(tape, matmul(tape, A, mat2(1, 0, 0, 1)));
  tape.backward(loss);
  for (double g : A.grad()) CHECK(g == 1.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape<double> tape;
  CHECK_THROWS_AS(matmul(tape, Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST_CASE("conv2d counts overlaps and passes through an identity kernel") {
  Tape<double> tape;
  auto ones = Tensor<double>::filled({1, 1, 3, 3}, 1.0);
  auto y = conv2d(tape, ones, Tensor<double>::filled({1, 1, 3, 3}, 1.0), Tensor<double>(), {1, 1});
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at(4) == 9.0);
  CHECK(y.at(0) == 4.0);
  CHECK(y.at(2) == 4.0);
  CHECK(y.at(6) == 4.0);
  CHECK(y.at(8) == 4.0);
  CHECK(y.at(1) == 6.0);

  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({2, 1, 5, 4}, rng);
  auto k = Tensor<double>::zeros({1, 1, 3, 3});
  k.mutable_values()[4] = 1.0;
  auto same = conv2d(tape, x, k, Tensor<double>(), {1, 1});
  CHECK(sfit::test::bit_equal(same.values(), x.values()));
}

TEST_CASE("conv2d with non-integral output size is a dimension error") {
  Tape<double> tape;
  CHECK_THROWS_AS(conv2d(tape, Tensor<double>::zeros({1, 1, 4, 4}), Tensor<double>::zeros({1, 1, 3, 3}),
                         Tensor<double>(), {2, 0}),
                  DimensionError);
}

TEST_CASE("maxpool picks the maximum and routes ties to the lowest index") {
  Tape<double> tape;
  auto y = maxpool2d(tape, Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(y.item() == 4.0);

  auto c = Tensor<double>::filled({1, 1, 4, 4}, 0.5, true);
  auto p = maxpool2d(tape, c);
  for (double v : p.values()) CHECK(v == 0.5);
  tape.backward(sum(tape, p));
  const std::vector<double> expect{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  CHECK(std::vector<double>(c.grad().begin(), c.grad().end()) == expect);

  Tape<double> t2;
  CHECK_THROWS_AS(maxpool2d(t2, Tensor<double>::zeros({1, 1, 1, 1})), DimensionError);
}

TEST_CASE("maxpool output never exceeds the window and equals one of its entries") {
  std::mt19937_64 rng(11);
  Tape<float> tape;
  auto x = random_tensor<float>({3, 2, 6, 6}, rng);
  auto y = maxpool2d(tape, x);
  for (std::size_t b = 0; b < 6; ++b)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const float* plane = x.values().data() + b * 36;
        const float m = y.at(b * 9 + i * 3 + j);
        bool found = false;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const float v = plane[(2 * i + di) * 6 + 2 * j + dj];
            CHECK(v <= m);
            found = found || v == m;
          }
        CHECK(found);
      }
}

TEST_CASE("batchnorm normalizes and gamma zero yields beta") {
  Tape<double> tape;
  // Per-channel mean 0 and biased variance 1.
  auto x = Tensor<double>({2, 1, 1, 2}, {1, -1, -1, 1});
  auto out = batchnorm(tape, x, Tensor<double>::filled({1}, 1.0), Tensor<double>::zeros({1}), static_cast<BatchNormStats<double>*>(nullptr), true);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.at(i) == doctest::Approx(x.at(i)).epsilon(1e-5));

  auto beta = Tensor<double>({2}, {0.25, -3.0});
  std::mt19937_64 rng(5);
  auto y = random_tensor<double>({3, 2, 2, 2}, rng);
  auto b = batchnorm(tape, y, Tensor<double>::zeros({2}), beta, static_cast<BatchNormStats<double>*>(nullptr), true);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < 4; ++k) CHECK(b.at(n * 8 + c * 4 + k) == beta.at(c));
}

TEST_CASE("batchnorm in training mode needs two examples") {
  Tape<double> tape;
  CHECK_THROWS_AS(batchnorm(tape, Tensor<double>::zeros({1, 1, 2, 2}), Tensor<double>::filled({1}, 1.0),
                            Tensor<double>::zeros({1}), static_cast<BatchNormStats<double>*>(nullptr), true),
                  StatisticsError);
}

TEST_CASE("batchnorm updates running statistics with momentum") {
  Tape<double> tape;
  BatchNormStats<double> stats{Tensor<double>::zeros({1}), Tensor<double>::filled({1}, 1.0)};
  auto x = Tensor<double>({2, 1, 1, 1}, {1.0, 3.0});
  batchnorm(tape, x, Tensor<double>::filled({1}, 1.0), Tensor<double>::zeros({1}), &stats, true);
  CHECK(stats.running_mean.item() == doctest::Approx(0.2));
  // Running variance uses the unbiased batch variance (2).
  CHECK(stats.running_var.item() == doctest::Approx(0.9 + 0.1 * 2.0));
}

TEST_CASE("leaky relu values and kink-side gradient") {
  Tape<double> tape;
  CHECK(leaky_relu(tape, Tensor<double>::scalar(5.0), 0.01).item() == 5.0);
  CHECK(leaky_relu(tape, Tensor<double>::scalar(-2.0), 0.1).item() == doctest::Approx(-0.2));
  auto x = Tensor<double>::scalar(-1.0, true);
  tape.backward(sum(tape, leaky_relu(tape, x, 0.1)));
  CHECK(x.grad()[0] == 0.1);
}

TEST_CASE("log_sum_exp small cases and shift invariance") {
  Tape<double> tape;
  CHECK(log_sum_exp(tape, Tensor<double>({1, 2}, {0, 0})).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tape<float> tf;
  CHECK(log_sum_exp(tf, Tensor<float>({1, 2}, {1000.0f, 0.0f})).item() == 1000.0f);
  // Oracle: direct evaluation in long double.
  const long double direct = std::log(std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L));
  CHECK(log_sum_exp(tape, Tensor<double>({1, 3}, {1, 2, 3})).item() ==
        doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));
  CHECK(static_cast<double>(direct) == doctest::Approx(3.407606).epsilon(1e-6));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-500, 500);
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_tensor<double>({1, 5}, rng, -20, 20);
    const double c = shift(rng);
    auto zc = z.clone();
    for (auto& v : zc.mutable_values()) v += c;
    const double a = log_sum_exp(tape, z).item() + c;
    const double b = log_sum_exp(tape, zc).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("backward on x * x and on an unused input") {
  Tape<double> tape;
  auto x = Tensor<double>::scalar(3.0, true);
  tape.backward(mul(tape, x, x));
  CHECK(x.grad()[0] == 6.0);

  Tape<double> t2;
  auto unused = Tensor<double>::scalar(2.0, true);
  auto c = Tensor<double>::scalar(4.0);
  t2.backward(sum(t2, c));
  CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("backward needs a scalar and rejects a second replay") {
  Tape<double> tape;
  auto x = Tensor<double>({2}, {1, 2}, true);
  auto y = scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
  auto s = sum(tape, y);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), UsageError);
  tape.reset();
  auto s2 = sum(tape, scale(tape, x, 2.0));
  x.zero_grad();
  tape.backward(s2);
  CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("detach and clone do not carry gradients") {
  Tape<double> tape;
  auto x = Tensor<double>({2}, {1, 2}, true);
  auto d = x.detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.values().data() == x.values().data());
  auto c = x.clone();
  c.mutable_values()[0] = 9;
  CHECK(x.at(0) == 1.0);
  auto s = sum(tape, mul(tape, d, x));
  tape.backward(s);
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("forward overflow raises a numeric error") {
  Tape<float> tape;
  auto big = Tensor<float>({1}, {std::numeric_limits<float>::max()});
  CHECK_THROWS_AS(scale(tape, big, 4.0f), NumericError);
}

TEST_CASE("every op passes the finite-difference suite") {
  GradCheckOptions o;
  o.include_networks = false;
  o.seed = 99;
  const auto report = run_gradcheck(o);
  for (const auto& c : report.cases) {
    INFO(c.name << " error " << c.max_error);
    CHECK(c.passed);
    CHECK(c.kink_skips == 0);
  }
}
