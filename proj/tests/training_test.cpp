#include <doctest.h>

#include <cmath>
#include <limits>

#include "sfit/checkpoint.hpp"
#include "sfit/errors.hpp"
#include "sfit/evaluation.hpp"
#include "sfit/training.hpp"

using namespace sfit;

namespace {

DatasetSplit small_blobs(std::size_t n = 120, std::size_t k = 3, std::size_t d = 8, std::uint64_t seed = 1) {
  return make_blobs(n, k, d, seed, {0.6, 0.06});
}

// Adam in long double, written from the update rule directly.
struct AdamOracle {
  long double m = 0, v = 0;
  std::uint64_t t = 0;
  long double step(long double p, long double g, const AdamOptions& o) {
    ++t;
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const long double mh = m / (1 - std::pow(static_cast<long double>(o.beta1), t));
    const long double vh = v / (1 - std::pow(static_cast<long double>(o.beta2), t));
    return p - o.learning_rate * mh / (std::sqrt(vh) + o.eps);
  }
};

}  // namespace

TEST_CASE("adam with zero gradient from a fresh state is a no-op") {
  std::vector<double> p{1.5, -2.0, 0.0}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
  const auto before = p;
  adam_update<double>(p, g, m, v, 1, AdamOptions{});
  CHECK(p == before);
}

TEST_CASE("adam matches the update rule over many steps") {
  AdamOptions o;
  o.learning_rate = 0.01;
  std::vector<double> p{0.3}, m(1, 0.0), v(1, 0.0);
  AdamOracle oracle;
  long double q = 0.3;
  for (std::uint64_t t = 1; t <= 50; ++t) {
    const double g = std::sin(0.37 * static_cast<double>(t)) * 2.0 + 0.1;
    adam_update<double>(p, std::vector<double>{g}, m, v, t, o);
    q = oracle.step(q, g, o);
    CHECK(p[0] == doctest::Approx(static_cast<double>(q)).epsilon(1e-12));
  }
  // First step moves by lr in the direction opposite the gradient.
  std::vector<float> a{1.0f}, ma(1, 0.0f), va(1, 0.0f);
  adam_update<float>(a, std::vector<float>{3.0f}, ma, va, 1, AdamOptions{});
  CHECK(a[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam rejects mismatched buffers") {
  std::vector<double> p(3), g(2), m(3), v(3);
  CHECK_THROWS_AS(adam_update<double>(p, g, m, v, 1, AdamOptions{}), UsageError);
  std::vector<double> g3(3);
  CHECK_THROWS_AS(adam_update<double>(p, g3, m, v, 0, AdamOptions{}), UsageError);
  auto model = build_tinymlp<float>(2, 3, 2, 0);
  AdamState<float> wrong;
  CHECK_THROWS_AS(adam_step<float>(model.parameters(), wrong, AdamOptions{}), UsageError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.adam.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.objective = Objective::kDistill;
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(objective_from_string("ce+mucs") == Objective::kCeMucs);
  CHECK(to_string(Objective::kDistill) == "distill");
  CHECK_THROWS(objective_from_string("trades"));
}

TEST_CASE("one iteration produces one log record") {
  TrainConfig c;
  c.max_iterations = 1;
  auto r = train(build_tinymlp<float>(8, 16, 3, 0), small_blobs(), c);
  CHECK(r.iterations == 1);
  REQUIRE(r.log.records.size() == 1);
  CHECK(r.log.records[0].iteration == 1);
  CHECK(r.optimizer.step == 1);
}

TEST_CASE("log records every eval_every iterations and at the end") {
  TrainConfig c;
  c.objective = Objective::kCe;
  c.max_iterations = 23;
  c.eval_every = 5;
  c.batch_size = 32;
  auto r = train(build_tinymlp<float>(8, 16, 3, 0), small_blobs(), c);
  std::vector<std::size_t> its;
  for (const auto& rec : r.log.records) its.push_back(rec.iteration);
  CHECK(its == std::vector<std::size_t>{5, 10, 15, 20, 23});
}

TEST_CASE("training is byte-reproducible") {
  TrainConfig c;
  c.max_iterations = 30;
  c.batch_size = 32;
  c.seed = 4;
  auto data = small_blobs();
  auto a = train(build_tinymlp<float>(8, 16, 3, 2), data, c);
  auto b = train(build_tinymlp<float>(8, 16, 3, 2), data, c);
  CHECK(serialize_checkpoint(a.model, a.iterations, &a.optimizer) ==
        serialize_checkpoint(b.model, b.iterations, &b.optimizer));
  CHECK(a.log.to_jsonl() == b.log.to_jsonl());
  c.seed = 5;
  auto other = train(build_tinymlp<float>(8, 16, 3, 2), data, c);
  CHECK(serialize_checkpoint(a.model) != serialize_checkpoint(other.model));
}

TEST_CASE("CE training fits separable blobs") {
  TrainConfig c;
  c.objective = Objective::kCe;
  c.max_iterations = 150;
  c.batch_size = 32;
  c.adam.learning_rate = 1e-2;
  auto r = train(build_tinymlp<float>(8, 16, 3, 0), small_blobs(), c);
  CHECK(r.log.records.back().clean_accuracy == 1.0);
  CHECK(r.log.records.back().loss < r.log.records.front().loss);
}

TEST_CASE("MUCS widens margins far beyond CE for the same budget") {
  double ce_total = 0, sf_total = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = make_blobs(400, 2, 2048, seed, {0.04, 0.03});
    TrainConfig c;
    c.max_iterations = 200;
    c.objective = Objective::kCe;
    auto ce = train(build_tinymlp<float>(2048, 32, 2, seed), data, c);
    c.objective = Objective::kCeMucs;
    auto sf = train(build_tinymlp<float>(2048, 32, 2, seed), data, c);
    ce_total += logits_stats(ce.model, data).min_diagonal_margin();
    sf_total += logits_stats(sf.model, data).min_diagonal_margin();
  }
  CHECK(sf_total > 3 * ce_total);
}

TEST_CASE("non-finite loss aborts with a divergence error") {
  TrainConfig c;
  c.objective = Objective::kMucs;
  c.adam.learning_rate = 1e36;
  c.max_iterations = 5;
  c.batch_size = 32;
  CHECK_THROWS_AS(train(build_tinymlp<float>(8, 16, 3, 0), small_blobs(), c), DivergenceError);
}

TEST_CASE("model and data must agree") {
  TrainConfig c;
  CHECK_THROWS_AS(train(build_tinymlp<float>(9, 16, 3, 0), small_blobs(), c), UsageError);
  CHECK_THROWS_AS(train(build_tinymlp<float>(8, 16, 4, 0), small_blobs(), c), UsageError);
}

TEST_CASE("train log jsonl round trip") {
  TrainLog log;
  log.records.push_back({25, -1.25, 0.5, std::nullopt, "", 0.125});
  log.records.push_back({50, -3.0000000000000004, 1.0, 0.75, "PGD-10", 0.99});
  const auto back = TrainLog::from_jsonl(log.to_jsonl());
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[1].loss == log.records[1].loss);
  CHECK(back.records[1].robust_accuracy == 0.75);
  CHECK(back.records[1].attack == "PGD-10");
  CHECK_FALSE(back.records[0].robust_accuracy.has_value());
  CHECK(back.to_jsonl() == log.to_jsonl());
  CHECK_THROWS_AS(TrainLog::from_jsonl("{\"iteration\":5,\"loss\":0,\"clean_accuracy\":0,\"vanished_fraction\":0}\n"
                                       "{\"iteration\":5,\"loss\":0,\"clean_accuracy\":0,\"vanished_fraction\":0}\n"),
                  FormatError);
}

TEST_CASE("log_attack records robust accuracy") {
  TrainConfig c;
  c.objective = Objective::kCe;
  c.max_iterations = 10;
  c.eval_every = 5;
  c.batch_size = 32;
  c.log_attack = AttackConfig::pgd(8.0 / 255.0, 2.0 / 255.0, 3);
  c.log_attack_examples = 20;
  auto r = train(build_tinymlp<float>(8, 16, 3, 0), small_blobs(), c);
  for (const auto& rec : r.log.records) {
    REQUIRE(rec.robust_accuracy.has_value());
    CHECK(*rec.robust_accuracy >= 0.0);
    CHECK(*rec.robust_accuracy <= 1.0);
    CHECK(rec.attack == "PGD-3");
  }
}

TEST_CASE("adversarial training runs its inner attack") {
  TrainConfig c;
  c.objective = Objective::kAdv;
  c.max_iterations = 4;
  c.batch_size = 16;
  c.adv_attack = AttackConfig::pgd(0.05, 0.0125, 3);
  auto r = train(build_tinymlp<float>(8, 16, 3, 0), small_blobs(), c);
  CHECK(r.iterations == 4);
}

TEST_CASE("superfit_fraction of fresh and constructed models") {
  const auto data = small_blobs(60, 3, 8, 2);
  CHECK(superfit_fraction(build_tinymlp<float>(8, 16, 3, 0), data) == 0.0);

  // A constant-output toy: zero weights, one-class data, bias pushing the
  // other logits to -1e4.
  auto one_class = data;
  for (auto& y : one_class.labels) y = 1;
  auto m = build_tinymlp<float>(8, 16, 3, 0);
  auto& fc2 = std::get<Model<float>::Dense>(m.layers().back());
  for (auto& w : fc2.weight.mutable_values()) w = 0.0f;
  auto b = fc2.bias.mutable_values();
  b[0] = -1e4f;
  b[1] = 0.0f;
  b[2] = -1e4f;
  CHECK(superfit_fraction(m, one_class) == 1.0);
}

TEST_CASE("distillation at T=1 with one-hot targets is CE training") {
  const auto data = small_blobs(64, 3, 8, 5);
  std::vector<double> onehot(data.size() * 3, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) onehot[i * 3 + static_cast<std::size_t>(data.labels[i])] = 1.0;
  TrainConfig c;
  c.max_iterations = 20;
  c.batch_size = 16;
  c.objective = Objective::kDistill;
  c.temperature = 1.0;
  auto distilled = train(build_tinymlp<double>(8, 16, 3, 1), data, c, &onehot);
  c.objective = Objective::kCe;
  auto ce = train(build_tinymlp<double>(8, 16, 3, 1), data, c);
  const auto a = distilled.model.parameters(), b = ce.model.parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].tensor.numel(); ++j) CHECK(a[i].tensor.at(j) == doctest::Approx(b[i].tensor.at(j)).epsilon(1e-9));
}

TEST_CASE("train_distill returns a trained student") {
  const auto data = small_blobs(64, 3, 8, 6);
  TrainConfig c;
  c.max_iterations = 30;
  c.batch_size = 16;
  auto r = train_distill(build_tinymlp<float>(8, 16, 3, 1), build_tinymlp<float>(8, 16, 3, 2), data, c, c, 100.0);
  CHECK(r.teacher.iterations == 30);
  CHECK(r.student.iterations == 30);
  CHECK_THROWS_AS(train_distill(build_tinymlp<float>(8, 16, 3, 1), build_tinymlp<float>(8, 16, 3, 2), data, c, c, 0.0),
                  ParameterError);
}
