#include "sfit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "sfit/losses.hpp"
#include "sfit/model.hpp"
#include "sfit/ops.hpp"

namespace sfit {

bool GradCheckReport::passed() const {
  return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

std::string GradCheckReport::to_text() const {
  std::ostringstream out;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    char line[200];
    std::snprintf(line, sizeof line, "%-4s %-28s elements %6zu  kinks %3zu  max err %.3e  tol %.0e\n",
                  c.passed ? "ok" : "FAIL", c.name.c_str(), c.elements, c.kink_skips, c.max_error, c.tolerance);
    out << line;
    failed += c.passed ? 0 : 1;
  }
  out << cases.size() << " cases, " << failed << " failed\n";
  return out.str();
}

GradCheckCase check_problem(const std::string& name, const GradProblem& problem, double h, double tolerance,
                            double floor, double max_kink_fraction) {
  GradCheckCase result;
  result.name = name;
  result.tolerance = tolerance;
  const auto ad = problem.gradient();
  const double f0 = problem.evaluate();
  bool ok = true;
  for (std::size_t s = 0; s < problem.slots.size(); ++s) {
    auto slot = problem.slots[s];
    for (std::size_t i = 0; i < slot.size(); ++i) {
      const double saved = slot[i];
      slot[i] = saved + h;
      const double fp = problem.evaluate();
      slot[i] = saved - h;
      const double fm = problem.evaluate();
      slot[i] = saved;
      const double fd = (fp - fm) / (2 * h);
      const double a = ad[s][i];
      const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      ++result.elements;
      if (err > tolerance && problem.allow_kinks) {
        // A kink inside [x - h, x + h] shows up as disagreeing one-sided
        // slopes; a wrong adjoint does not.
        const double forward = (fp - f0) / h, backward = (f0 - fm) / h;
        if (std::abs(forward - backward) > 0.5 * std::abs(a - fd)) {
          ++result.kink_skips;
          continue;
        }
      }
      result.max_error = std::max(result.max_error, err);
      ok = ok && err <= tolerance;
    }
  }
  const double kink_share =
      result.elements ? static_cast<double>(result.kink_skips) / static_cast<double>(result.elements) : 0.0;
  result.passed = ok && kink_share <= max_kink_fraction;
  return result;
}

namespace {

using Rng = std::mt19937_64;
using TensorD = Tensor<double>;
using OpFn = std::function<TensorD(Tape<double>&, const std::vector<TensorD>&)>;

std::vector<double> uniform(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Magnitudes in [0.05, 1], random sign: keeps LeakyReLU inputs off the kink.
std::vector<double> away_from_zero(Rng& rng, std::size_t n) {
  auto v = uniform(rng, n, 0.05, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (auto& x : v) x = coin(rng) ? x : -x;
  return v;
}

// Distinct values spaced at least 1/n apart, so max-pool windows have no ties.
std::vector<double> distinct(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  for (std::size_t i = 0; i < n; ++i) v[i] = (2.0 * (static_cast<double>(i) + 0.5 + jitter(rng))) / static_cast<double>(n) - 1.0;
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

TensorD input(Shape shape, std::vector<double> values) { return TensorD(std::move(shape), std::move(values), true); }

// Reduces the op's output to a scalar with fixed random weights, so every
// output element's adjoint is exercised.
GradProblem op_problem(std::vector<TensorD> inputs, OpFn op, Rng& rng) {
  auto held = std::make_shared<std::vector<TensorD>>(std::move(inputs));
  TensorD weights;
  {
    Tape<double> probe;
    const auto out = op(probe, *held);
    weights = TensorD(out.shape(), uniform(rng, out.numel()));
  }
  GradProblem p;
  for (auto& t : *held) p.slots.push_back(t.mutable_values());
  p.evaluate = [held, op, weights] {
    Tape<double> tape;
    return weighted_sum(tape, op(tape, *held), weights).item();
  };
  p.gradient = [held, op, weights] {
    for (auto& t : *held) t.zero_grad();
    Tape<double> tape;
    tape.backward(weighted_sum(tape, op(tape, *held), weights));
    std::vector<std::vector<double>> g;
    for (const auto& t : *held) g.emplace_back(t.grad().begin(), t.grad().end());
    return g;
  };
  return p;
}

GradProblem model_problem(std::shared_ptr<Model<double>> model, TensorD x, std::vector<int> labels, Mode mode) {
  GradProblem p;
  p.allow_kinks = true;
  p.slots.push_back(x.mutable_values());
  for (const auto& param : model->parameters()) {
    auto t = param.tensor;
    p.slots.push_back(t.mutable_values());
  }
  p.evaluate = [model, x, labels, mode] {
    Tape<double> tape;
    const auto z = model->forward(tape, x, mode);
    return ce_loss(tape, LogitsBatch<double>(z, labels)).item();
  };
  p.gradient = [model, x, labels, mode] {
    model->zero_grad();
    auto xm = x;
    xm.zero_grad();
    Tape<double> tape;
    const auto z = model->forward(tape, x, mode);
    tape.backward(ce_loss(tape, LogitsBatch<double>(z, labels)));
    std::vector<std::vector<double>> g;
    g.emplace_back(x.grad().begin(), x.grad().end());
    for (const auto& param : model->parameters()) g.emplace_back(param.tensor.grad().begin(), param.tensor.grad().end());
    return g;
  };
  return p;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(pick(rng, 0, k - 1));
  return y;
}

struct OpCase {
  std::string name;
  std::function<GradProblem(Rng&)> make;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"matmul", [](Rng& r) {
                     const auto m = pick(r, 1, 5), k = pick(r, 1, 5), n = pick(r, 1, 5);
                     return op_problem({input({m, k}, uniform(r, m * k)), input({k, n}, uniform(r, k * n))},
                                       [](Tape<double>& t, const auto& in) { return matmul(t, in[0], in[1]); }, r);
                   }});
  cases.push_back({"add_bias", [](Rng& r) {
                     const auto b = pick(r, 1, 4), n = pick(r, 1, 6);
                     return op_problem({input({b, n}, uniform(r, b * n)), input({n}, uniform(r, n))},
                                       [](Tape<double>& t, const auto& in) { return add_bias(t, in[0], in[1]); }, r);
                   }});
  cases.push_back({"add", [](Rng& r) {
                     const auto a = pick(r, 1, 4), b = pick(r, 1, 4);
                     return op_problem({input({a, b}, uniform(r, a * b)), input({a, b}, uniform(r, a * b))},
                                       [](Tape<double>& t, const auto& in) { return add(t, in[0], in[1]); }, r);
                   }});
  cases.push_back({"mul", [](Rng& r) {
                     const auto a = pick(r, 1, 4), b = pick(r, 1, 4);
                     return op_problem({input({a, b}, uniform(r, a * b)), input({a, b}, uniform(r, a * b))},
                                       [](Tape<double>& t, const auto& in) { return mul(t, in[0], in[1]); }, r);
                   }});
  cases.push_back({"scale", [](Rng& r) {
                     const auto n = pick(r, 1, 8);
                     const double f = uniform(r, 1, -3.0, 3.0)[0];
                     return op_problem({input({n}, uniform(r, n))},
                                       [f](Tape<double>& t, const auto& in) { return scale(t, in[0], f); }, r);
                   }});
  cases.push_back({"sum", [](Rng& r) {
                     const auto a = pick(r, 1, 4), b = pick(r, 1, 4);
                     return op_problem({input({a, b}, uniform(r, a * b))},
                                       [](Tape<double>& t, const auto& in) { return sum(t, in[0]); }, r);
                   }});
  cases.push_back({"reshape+flatten", [](Rng& r) {
                     const auto b = pick(r, 1, 3), c = pick(r, 1, 3), h = pick(r, 1, 3);
                     return op_problem({input({b, c, h, 2}, uniform(r, b * c * h * 2))},
                                       [b, c, h](Tape<double>& t, const auto& in) {
                                         return flatten(t, reshape(t, in[0], Shape{b, c * h, 2, 1}));
                                       },
                                       r);
                   }});
  cases.push_back({"conv2d", [](Rng& r) {
                     const auto b = pick(r, 1, 2), c = pick(r, 1, 3), f = pick(r, 1, 3);
                     const auto k = pick(r, 1, 3), s = pick(r, 1, 2), p = pick(r, 0, 1);
                     auto o = pick(r, 1, 3);
                     while (k + s * (o - 1) < 2 * p + 1) ++o;
                     const auto side = k + s * (o - 1) - 2 * p;
                     return op_problem({input({b, c, side, side}, uniform(r, b * c * side * side)),
                                        input({f, c, k, k}, uniform(r, f * c * k * k)), input({f}, uniform(r, f))},
                                       [s, p](Tape<double>& t, const auto& in) {
                                         return conv2d(t, in[0], in[1], in[2], Conv2dParams{s, p});
                                       },
                                       r);
                   }});
  cases.push_back({"maxpool2d", [](Rng& r) {
                     const auto b = pick(r, 1, 2), c = pick(r, 1, 2), h = 2 * pick(r, 1, 3), w = 2 * pick(r, 1, 3);
                     return op_problem({input({b, c, h, w}, distinct(r, b * c * h * w))},
                                       [](Tape<double>& t, const auto& in) { return maxpool2d(t, in[0]); }, r);
                   }});
  cases.push_back({"pad2d", [](Rng& r) {
                     const auto c = pick(r, 1, 2), h = pick(r, 1, 4), p = pick(r, 1, 2);
                     return op_problem({input({1, c, h, h}, uniform(r, c * h * h))},
                                       [p](Tape<double>& t, const auto& in) { return pad2d(t, in[0], p); }, r);
                   }});
  cases.push_back({"batchnorm.train", [](Rng& r) {
                     const auto b = pick(r, 2, 4), c = pick(r, 1, 3), h = pick(r, 1, 3);
                     return op_problem({input({b, c, h, h}, uniform(r, b * c * h * h, -2.0, 2.0)),
                                        input({c}, uniform(r, c, 0.5, 1.5)), input({c}, uniform(r, c))},
                                       [](Tape<double>& t, const auto& in) {
                                         return batchnorm<double>(t, in[0], in[1], in[2], nullptr, true);
                                       },
                                       r);
                   }});
  cases.push_back({"batchnorm.eval", [](Rng& r) {
                     const auto b = pick(r, 1, 3), c = pick(r, 1, 3), h = pick(r, 1, 3);
                     BatchNormStats<double> stats{TensorD({c}, uniform(r, c)), TensorD({c}, uniform(r, c, 0.2, 2.0))};
                     return op_problem({input({b, c, h, h}, uniform(r, b * c * h * h)),
                                        input({c}, uniform(r, c, 0.5, 1.5)), input({c}, uniform(r, c))},
                                       [stats](Tape<double>& t, const auto& in) {
                                         return batchnorm_eval<double>(t, in[0], in[1], in[2], stats);
                                       },
                                       r);
                   }});
  cases.push_back({"leaky_relu", [](Rng& r) {
                     const auto n = pick(r, 2, 12);
                     const double slope = std::array{0.01, 0.1, 0.2}[pick(r, 0, 2)];
                     return op_problem({input({n}, away_from_zero(r, n))},
                                       [slope](Tape<double>& t, const auto& in) { return leaky_relu(t, in[0], slope); },
                                       r);
                   }});
  cases.push_back({"log_sum_exp", [](Rng& r) {
                     const auto b = pick(r, 1, 4), k = pick(r, 1, 6);
                     return op_problem({input({b, k}, uniform(r, b * k, -5.0, 5.0))},
                                       [](Tape<double>& t, const auto& in) { return log_sum_exp(t, in[0]); }, r);
                   }});
  auto loss_case = [](std::string name, auto fn) {
    return OpCase{std::move(name), [fn](Rng& r) {
                    const auto b = pick(r, 1, 4), k = pick(r, 2, 6);
                    const auto y = random_labels(r, b, k);
                    return op_problem({input({b, k}, distinct(r, b * k))},
                                      [fn, y](Tape<double>& t, const auto& in) { return fn(t, LogitsBatch<double>(in[0], y)); },
                                      r);
                  }};
  };
  cases.push_back(loss_case("ce_loss", [](Tape<double>& t, const LogitsBatch<double>& z) { return ce_loss(t, z); }));
  cases.push_back(loss_case("ce_loss.sum",
                            [](Tape<double>& t, const LogitsBatch<double>& z) { return ce_loss(t, z, Reduction::kSum); }));
  cases.push_back(loss_case("mucs_loss", [](Tape<double>& t, const LogitsBatch<double>& z) { return mucs_loss(t, z); }));
  cases.push_back(
      loss_case("combined_loss", [](Tape<double>& t, const LogitsBatch<double>& z) { return combined_loss(t, z); }));
  cases.push_back({"soft_label_ce", [](Rng& r) {
                     const auto b = pick(r, 1, 4), k = pick(r, 2, 5);
                     auto p = uniform(r, b * k, 0.05, 1.0);
                     for (std::size_t i = 0; i < b; ++i) {
                       const double s = std::accumulate(p.begin() + i * k, p.begin() + (i + 1) * k, 0.0);
                       for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= s;
                     }
                     const TensorD targets({b, k}, p);
                     const double temp = std::array{1.0, 2.5, 10.0}[pick(r, 0, 2)];
                     return op_problem({input({b, k}, uniform(r, b * k, -3.0, 3.0))},
                                       [targets, temp](Tape<double>& t, const auto& in) {
                                         return soft_label_ce(t, in[0], targets, temp);
                                       },
                                       r);
                   }});
  return cases;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& o) {
  GradCheckReport report;
  std::size_t index = 0;
  for (const auto& op : op_cases()) {
    for (std::size_t c = 0; c < o.cases_per_op; ++c) {
      Rng rng(o.seed * 1000003 + index++);
      report.cases.push_back(check_problem(op.name + "#" + std::to_string(c), op.make(rng), o.h, o.op_tolerance,
                                           o.floor));
    }
  }
  if (!o.include_networks) return report;

  for (std::size_t c = 0; c < o.cases_per_op; ++c) {
    Rng rng(o.seed * 1000003 + index++);
    const auto d = pick(rng, 2, 6), hidden = pick(rng, 3, 8), k = pick(rng, 2, 4), b = pick(rng, 1, 4);
    auto model = std::make_shared<Model<double>>(build_tinymlp<double>(d, hidden, k, rng()));
    auto p = model_problem(model, input({b, d}, uniform(rng, b * d, 0.0, 1.0)), random_labels(rng, b, k), Mode::kEval);
    report.cases.push_back(check_problem("tinymlp#" + std::to_string(c), p, o.h, o.mlp_tolerance, o.floor,
                                         o.max_kink_fraction));
  }

  // The MiddleCNN topology with narrow layers, so every parameter can be
  // perturbed: two examples, batch statistics in the BN layers.
  for (std::size_t c = 0; c < 2; ++c) {
    Rng rng(o.seed * 1000003 + index++);
    MiddleCnnSpec spec;
    spec.in_channels = 2;
    spec.image_size = 16;
    spec.num_classes = 3;
    spec.conv_widths[0] = 2;
    spec.conv_widths[1] = 3;
    spec.conv_widths[2] = 4;
    spec.hidden = 6;
    auto model = std::make_shared<Model<double>>(build_middlecnn<double>(spec, rng()));
    const Mode mode = c == 0 ? Mode::kTrain : Mode::kEval;
    if (mode == Mode::kEval) {
      // Non-trivial running statistics.
      for (auto& layer : model->layers()) {
        if (auto* bn = std::get_if<Model<double>::BatchNorm>(&layer)) {
          auto mean = bn->stats.running_mean.mutable_values();
          auto var = bn->stats.running_var.mutable_values();
          for (auto& v : mean) v = uniform(rng, 1, -0.2, 0.2)[0];
          for (auto& v : var) v = uniform(rng, 1, 0.5, 2.0)[0];
        }
      }
    }
    const std::size_t numel = 2 * 2 * 16 * 16;
    auto p = model_problem(model, input({2, 2, 16, 16}, uniform(rng, numel, 0.0, 1.0)), random_labels(rng, 2, 3), mode);
    report.cases.push_back(check_problem(std::string("middlecnn.") + (mode == Mode::kTrain ? "train" : "eval"), p, o.h,
                                         o.network_tolerance, o.floor, o.max_kink_fraction));
  }
  return report;
}

}  // namespace sfit
