#include "sfit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfit/errors.hpp"
#include "sfit/losses.hpp"
#include "sfit/numeric.hpp"

namespace sfit {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kBim: return "bim";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kApgd: return "apgd";
    case AttackKind::kA3: return "a3";
  }
  return "unknown";
}

AttackKind attack_kind_from_string(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (n == "fgsm") return AttackKind::kFgsm;
  if (n == "bim") return AttackKind::kBim;
  if (n == "pgd") return AttackKind::kPgd;
  if (n == "apgd") return AttackKind::kApgd;
  if (n == "a3") return AttackKind::kA3;
  throw ConfigError("unknown attack '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must lie in [0, 1]");
  if (iterations == 0) throw ParameterError("attack iterations must be >= 1");
  if (restarts == 0) throw ParameterError("attack restarts must be >= 1");
  auto check_step = [&](double step, const char* what) {
    if (step > epsilon || step < 0.0 || (epsilon > 0.0 && step == 0.0)) {
      throw ParameterError(std::string(what) + " must satisfy 0 < step <= epsilon");
    }
  };
  if (kind == AttackKind::kBim || kind == AttackKind::kPgd || kind == AttackKind::kApgd) check_step(step_size, "step size");
  if (kind == AttackKind::kA3 && init_iterations > 0) check_step(init_step_size, "A3 init step size");
  if (kind == AttackKind::kApgd && !(apgd.rho > 0.0 && apgd.rho <= 1.0)) throw ParameterError("APGD rho must be in (0, 1]");
}

std::string AttackConfig::name() const {
  switch (kind) {
    case AttackKind::kFgsm: return "FGSM";
    case AttackKind::kBim: return "BIM-" + std::to_string(iterations);
    case AttackKind::kPgd: return "PGD-" + std::to_string(iterations);
    case AttackKind::kApgd: return "APGD-" + std::to_string(iterations);
    case AttackKind::kA3: return "A3-" + std::to_string(iterations);
  }
  return "unknown";
}

AttackConfig AttackConfig::fgsm(double epsilon) {
  AttackConfig c;
  c.kind = AttackKind::kFgsm;
  c.epsilon = epsilon;
  c.step_size = epsilon;
  c.iterations = 1;
  c.random_init = false;
  return c;
}

AttackConfig AttackConfig::bim(double epsilon, double step_size, std::size_t iterations) {
  AttackConfig c;
  c.kind = AttackKind::kBim;
  c.epsilon = epsilon;
  c.step_size = step_size;
  c.iterations = iterations;
  c.random_init = false;
  return c;
}

AttackConfig AttackConfig::pgd(double epsilon, double step_size, std::size_t iterations, std::uint64_t seed) {
  AttackConfig c;
  c.kind = AttackKind::kPgd;
  c.epsilon = epsilon;
  c.step_size = step_size;
  c.iterations = iterations;
  c.seed = seed;
  return c;
}

AttackConfig AttackConfig::apgd_attack(double epsilon, double step_size, std::size_t iterations, std::uint64_t seed) {
  AttackConfig c = pgd(epsilon, step_size, iterations, seed);
  c.kind = AttackKind::kApgd;
  return c;
}

AttackConfig AttackConfig::a3(double epsilon, std::size_t iterations, std::uint64_t seed) {
  AttackConfig c;
  c.kind = AttackKind::kA3;
  c.epsilon = epsilon;
  c.step_size = epsilon / 10.0;
  c.iterations = iterations;
  c.random_init = false;
  c.init_step_size = epsilon / 4.0;
  c.seed = seed;
  return c;
}

std::mt19937_64 example_rng(std::uint64_t seed, std::size_t restart, std::size_t example, StreamPurpose purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart), static_cast<std::uint32_t>(example),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(example) >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

double a3_step_size(std::size_t n, std::size_t total, double epsilon) {
  if (total == 0) throw ParameterError("A3 schedule needs N >= 1");
  const double phase = static_cast<double>(n % total) / static_cast<double>(total);
  return 0.5 * epsilon * (1.0 + std::cos(phase * std::numbers::pi));
}

namespace {

template <typename T>
void check_batch(const Tensor<T>& x, std::span<const int> labels) {
  if (x.rank() < 2 || x.dim(0) != labels.size()) throw UsageError("attack needs one label per example");
}

template <typename T>
int argmax_row(std::span<const T> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Loss and prediction at x without a gradient.
template <typename T>
void evaluate_points(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, std::vector<T>& loss,
                     std::vector<bool>& success) {
  const auto z = model.predict(x);
  const std::size_t k = z.dim(1);
  LogitsBatch<T> batch(z, std::vector<int>(labels.begin(), labels.end()));
  loss = ce_per_example(batch);
  success.assign(labels.size(), false);
  for (std::size_t b = 0; b < labels.size(); ++b) success[b] = argmax_row(z.values().subspan(b * k, k)) != labels[b];
}

// x + step_b * sign(g), row-wise step.
template <typename T>
Tensor<T> signed_step(const Tensor<T>& x, const Tensor<T>& g, std::span<const T> step) {
  std::vector<T> out(x.values().begin(), x.values().end());
  const std::size_t per = x.numel() / x.dim(0);
  auto gv = g.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += step[i / per] * sign(gv[i]);
  return Tensor<T>(x.shape(), std::move(out));
}

template <typename T>
Tensor<T> signed_step(const Tensor<T>& x, const Tensor<T>& g, T step) {
  std::vector<T> steps(x.dim(0), step);
  return signed_step(x, g, std::span<const T>(steps));
}

template <typename T>
Tensor<T> uniform_start(const Tensor<T>& x, const AttackConfig& cfg, std::size_t restart, std::size_t first_index) {
  if (!cfg.random_init || cfg.epsilon == 0.0) return x.detach();
  std::vector<T> out(x.values().begin(), x.values().end());
  const std::size_t per = x.numel() / x.dim(0);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    auto rng = example_rng(cfg.seed, restart, first_index + b, StreamPurpose::kUniformStart);
    std::uniform_real_distribution<double> dist(-cfg.epsilon, cfg.epsilon);
    for (std::size_t i = 0; i < per; ++i) out[b * per + i] += static_cast<T>(dist(rng));
  }
  return project_linf(Tensor<T>(x.shape(), std::move(out)), x, cfg.epsilon);
}

template <typename T>
void copy_row(const Tensor<T>& from, Tensor<T>& to, std::size_t row) {
  const std::size_t per = from.numel() / from.dim(0);
  auto src = from.values().subspan(row * per, per);
  std::copy(src.begin(), src.end(), to.mutable_values().begin() + static_cast<std::ptrdiff_t>(row * per));
}

// Folds one restart's result into the running worst case: a successful
// example beats an unsuccessful one, otherwise the higher loss wins.
template <typename T>
void keep_worst(AdversarialBatch<T>& acc, const AdversarialBatch<T>& next) {
  if (!acc.x_adv.defined()) {
    acc = next;
    return;
  }
  for (std::size_t b = 0; b < acc.success.size(); ++b) {
    const bool better = (next.success[b] && !acc.success[b]) ||
                        (next.success[b] == acc.success[b] && next.loss[b] > acc.loss[b]);
    if (better) {
      copy_row(next.x_adv, acc.x_adv, b);
      acc.success[b] = next.success[b];
      acc.loss[b] = next.loss[b];
    }
  }
}

template <typename T>
AdversarialBatch<T> finish(const Model<T>& model, const Tensor<T>& x, Tensor<T> x_adv, std::span<const int> labels) {
  AdversarialBatch<T> out{x.detach(), std::move(x_adv), {}, {}};
  evaluate_points(model, out.x_adv, labels, out.loss, out.success);
  return out;
}

// Tracks the best-loss iterate and the first misclassified iterate per example.
template <typename T>
struct BestIterate {
  Tensor<T> best_x;
  std::vector<T> best_loss;
  Tensor<T> fooled_x;
  std::vector<bool> fooled;

  BestIterate(const Tensor<T>& x0, const std::vector<T>& loss0, const std::vector<bool>& success0)
      : best_x(x0.clone()), best_loss(loss0), fooled_x(x0.clone()), fooled(success0) {}

  // Returns the number of rows whose best loss improved.
  std::vector<bool> update(const Tensor<T>& x, const std::vector<T>& loss, const std::vector<bool>& success) {
    std::vector<bool> improved(loss.size(), false);
    for (std::size_t b = 0; b < loss.size(); ++b) {
      if (loss[b] > best_loss[b]) {
        best_loss[b] = loss[b];
        copy_row(x, best_x, b);
        improved[b] = true;
      }
      if (success[b] && !fooled[b]) {
        fooled[b] = true;
        copy_row(x, fooled_x, b);
      }
    }
    return improved;
  }

  AdversarialBatch<T> result(const Tensor<T>& x_orig) const {
    AdversarialBatch<T> out{x_orig.detach(), best_x.clone(), fooled, best_loss};
    for (std::size_t b = 0; b < fooled.size(); ++b) {
      if (fooled[b]) copy_row(fooled_x, out.x_adv, b);
    }
    return out;
  }
};

}  // namespace

template <typename T>
Tensor<T> project_linf(const Tensor<T>& x_adv, const Tensor<T>& x_orig, double epsilon) {
  if (x_adv.shape() != x_orig.shape()) throw DimensionError("project_linf: shapes differ");
  const T eps = static_cast<T>(epsilon);
  std::vector<T> out(x_adv.numel());
  auto a = x_adv.values();
  auto o = x_orig.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T lo = std::max(o[i] - eps, T(0));
    const T hi = std::min(o[i] + eps, T(1));
    out[i] = std::clamp(a[i], lo, hi);
  }
  return Tensor<T>(x_adv.shape(), std::move(out));
}

template <typename T>
InputGradient<T> ce_input_gradient(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels) {
  check_batch(x, labels);
  Tape<T> tape;
  Tensor<T> input(x.shape(), std::vector<T>(x.values().begin(), x.values().end()), true);
  auto z = model.forward_frozen(tape, input);
  LogitsBatch<T> batch(z, std::vector<int>(labels.begin(), labels.end()));
  auto loss = ce_loss(tape, batch, Reduction::kSum);
  tape.backward(loss);

  InputGradient<T> out;
  out.grad = Tensor<T>(x.shape(), std::vector<T>(input.grad().begin(), input.grad().end()));
  out.loss = ce_per_example(batch);
  const std::size_t k = z.dim(1);
  for (std::size_t b = 0; b < labels.size(); ++b) out.prediction.push_back(argmax_row(z.values().subspan(b * k, k)));
  return out;
}

template <typename T>
AdversarialBatch<T> fgsm(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  check_batch(x, labels);
  const auto g = ce_input_gradient(model, x, labels);
  auto x_adv = project_linf(signed_step(x, g.grad, static_cast<T>(cfg.epsilon)), x, cfg.epsilon);
  return finish(model, x, std::move(x_adv), labels);
}

template <typename T>
AdversarialBatch<T> bim(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  check_batch(x, labels);
  Tensor<T> current = x.detach();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto g = ce_input_gradient(model, current, labels);
    current = project_linf(signed_step(current, g.grad, static_cast<T>(cfg.step_size)), x, cfg.epsilon);
  }
  return finish(model, x, std::move(current), labels);
}

template <typename T>
AdversarialBatch<T> pgd(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& cfg,
                        std::size_t first_index) {
  cfg.validate();
  check_batch(x, labels);
  AdversarialBatch<T> worst;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Tensor<T> current = uniform_start(x, cfg, r, first_index);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      const auto g = ce_input_gradient(model, current, labels);
      current = project_linf(signed_step(current, g.grad, static_cast<T>(cfg.step_size)), x, cfg.epsilon);
    }
    keep_worst(worst, finish(model, x, std::move(current), labels));
  }
  return worst;
}

namespace {

// Iterations at which the APGD step size is reconsidered.
std::vector<std::size_t> apgd_checkpoints(std::size_t total, const ApgdSchedule& s) {
  std::vector<double> fractions{0.0, s.first_checkpoint};
  while (true) {
    const double prev = fractions[fractions.size() - 2];
    const double cur = fractions.back();
    const double next = cur + std::max(cur - prev - s.interval_decrement, s.min_interval);
    if (next > 1.0) break;
    fractions.push_back(next);
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    const auto w = static_cast<std::size_t>(std::ceil(fractions[i] * static_cast<double>(total)));
    if (w >= 1 && w <= total && (out.empty() || w > out.back())) out.push_back(w);
  }
  return out;
}

}  // namespace

template <typename T>
AdversarialBatch<T> apgd(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& cfg,
                         std::size_t first_index) {
  cfg.validate();
  check_batch(x, labels);
  const std::size_t n = labels.size();
  const auto checkpoints = apgd_checkpoints(cfg.iterations, cfg.apgd);
  AdversarialBatch<T> worst;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Tensor<T> current = uniform_start(x, cfg, r, first_index);
    auto g = ce_input_gradient(model, current, labels);
    std::vector<bool> success0(n);
    for (std::size_t b = 0; b < n; ++b) success0[b] = g.prediction[b] != labels[b];
    BestIterate<T> best(current, g.loss, success0);

    std::vector<T> step(n, static_cast<T>(cfg.step_size));
    std::vector<T> step_at_checkpoint = step;
    std::vector<T> best_at_checkpoint = best.best_loss;
    std::vector<std::size_t> improvements(n, 0);
    std::size_t last_checkpoint = 0, next_checkpoint = 0;

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      current = project_linf(signed_step(current, g.grad, std::span<const T>(step)), x, cfg.epsilon);
      g = ce_input_gradient(model, current, labels);
      std::vector<bool> success(n);
      for (std::size_t b = 0; b < n; ++b) success[b] = g.prediction[b] != labels[b];
      const auto improved = best.update(current, g.loss, success);
      for (std::size_t b = 0; b < n; ++b) improvements[b] += improved[b] ? 1 : 0;

      if (next_checkpoint < checkpoints.size() && it + 1 == checkpoints[next_checkpoint]) {
        const double interval = static_cast<double>(checkpoints[next_checkpoint] - last_checkpoint);
        bool restarted = false;
        for (std::size_t b = 0; b < n; ++b) {
          const bool stalled = static_cast<double>(improvements[b]) < cfg.apgd.rho * interval;
          const bool unchanged = step[b] == step_at_checkpoint[b] && best.best_loss[b] == best_at_checkpoint[b];
          if (stalled || unchanged) {
            step[b] /= T(2);
            copy_row(best.best_x, current, b);
            restarted = true;
          }
          step_at_checkpoint[b] = step[b];
          best_at_checkpoint[b] = best.best_loss[b];
          improvements[b] = 0;
        }
        if (restarted) g = ce_input_gradient(model, current, labels);
        last_checkpoint = checkpoints[next_checkpoint++];
      }
    }
    keep_worst(worst, best.result(x));
  }
  return worst;
}

template <typename T>
Tensor<T> a3_direction(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& weights, DirectionResult* info) {
  if (x.rank() < 2) throw UsageError("a3_direction needs a batch axis");
  const std::size_t n = x.dim(0);
  if (weights.rank() != 2 || weights.dim(0) != n || weights.dim(1) != model.num_classes()) {
    throw DimensionError("a3_direction: weights must be [B x K]");
  }
  Tape<T> tape;
  Tensor<T> input(x.shape(), std::vector<T>(x.values().begin(), x.values().end()), true);
  auto z = model.forward_frozen(tape, input);
  tape.backward(weighted_sum(tape, z, weights));

  std::vector<T> v(input.grad().begin(), input.grad().end());
  const std::size_t per = x.numel() / n;
  if (info) info->zero_gradient.assign(n, false);
  for (std::size_t b = 0; b < n; ++b) {
    T* row = v.data() + b * per;
    T sq = 0;
    for (std::size_t i = 0; i < per; ++i) sq += row[i] * row[i];
    const T norm = std::sqrt(sq);
    if (norm == T(0)) {
      std::fill(row, row + per, T(0));
      if (info) info->zero_gradient[b] = true;
      continue;
    }
    for (std::size_t i = 0; i < per; ++i) row[i] /= norm;
  }
  return Tensor<T>(x.shape(), std::move(v));
}

template <typename T>
Tensor<T> a3_init(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& weights, const AttackConfig& cfg) {
  Tensor<T> current = x.detach();
  for (std::size_t t = 0; t < cfg.init_iterations; ++t) {
    const auto v = a3_direction(model, current, weights);
    current = project_linf(signed_step(current, v, static_cast<T>(cfg.init_step_size)), x, cfg.epsilon);
  }
  return current;
}

template <typename T>
Tensor<T> a3_sample_directions(std::size_t batch, std::size_t classes, const AttackConfig& cfg, std::size_t restart,
                               std::size_t first_index) {
  std::vector<T> w(batch * classes);
  for (std::size_t b = 0; b < batch; ++b) {
    auto rng = example_rng(cfg.seed, restart, first_index + b, StreamPurpose::kDirection);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t k = 0; k < classes; ++k) w[b * classes + k] = static_cast<T>(dist(rng));
  }
  return Tensor<T>({batch, classes}, std::move(w));
}

template <typename T>
AdversarialBatch<T> a3_attack(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                              const AttackConfig& cfg, std::size_t first_index) {
  cfg.validate();
  check_batch(x, labels);
  const std::size_t n = labels.size();
  AdversarialBatch<T> worst;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    const auto weights = a3_sample_directions<T>(n, model.num_classes(), cfg, r, first_index);
    Tensor<T> current = a3_init(model, x, weights, cfg);
    auto g = ce_input_gradient(model, current, labels);
    std::vector<bool> success(n);
    for (std::size_t b = 0; b < n; ++b) success[b] = g.prediction[b] != labels[b];
    BestIterate<T> best(current, g.loss, success);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      const auto alpha = static_cast<T>(a3_step_size(it, cfg.iterations, cfg.epsilon));
      current = project_linf(signed_step(current, g.grad, alpha), x, cfg.epsilon);
      g = ce_input_gradient(model, current, labels);
      for (std::size_t b = 0; b < n; ++b) success[b] = g.prediction[b] != labels[b];
      best.update(current, g.loss, success);
    }
    keep_worst(worst, best.result(x));
  }
  return worst;
}

template <typename T>
AdversarialBatch<T> run_attack(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                               const AttackConfig& cfg, std::size_t first_index) {
  switch (cfg.kind) {
    case AttackKind::kFgsm: return fgsm(model, x, labels, cfg);
    case AttackKind::kBim: return bim(model, x, labels, cfg);
    case AttackKind::kPgd: return pgd(model, x, labels, cfg, first_index);
    case AttackKind::kApgd: return apgd(model, x, labels, cfg, first_index);
    case AttackKind::kA3: return a3_attack(model, x, labels, cfg, first_index);
  }
  throw ConfigError("unknown attack kind");
}

#define SFIT_INSTANTIATE_ATTACKS(T)                                                                                 \
  template Tensor<T> project_linf(const Tensor<T>&, const Tensor<T>&, double);                                      \
  template InputGradient<T> ce_input_gradient(const Model<T>&, const Tensor<T>&, std::span<const int>);             \
  template AdversarialBatch<T> fgsm(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&);  \
  template AdversarialBatch<T> bim(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&);   \
  template AdversarialBatch<T> pgd(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&,    \
                                   std::size_t);                                                                    \
  template AdversarialBatch<T> apgd(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&,   \
                                    std::size_t);                                                                   \
  template Tensor<T> a3_direction(const Model<T>&, const Tensor<T>&, const Tensor<T>&, DirectionResult*);           \
  template Tensor<T> a3_init(const Model<T>&, const Tensor<T>&, const Tensor<T>&, const AttackConfig&);             \
  template Tensor<T> a3_sample_directions<T>(std::size_t, std::size_t, const AttackConfig&, std::size_t,            \
                                             std::size_t);                                                          \
  template AdversarialBatch<T> a3_attack(const Model<T>&, const Tensor<T>&, std::span<const int>,                   \
                                         const AttackConfig&, std::size_t);                                         \
  template AdversarialBatch<T> run_attack(const Model<T>&, const Tensor<T>&, std::span<const int>,                  \
                                          const AttackConfig&, std::size_t);

SFIT_INSTANTIATE_ATTACKS(float)
SFIT_INSTANTIATE_ATTACKS(double)

#undef SFIT_INSTANTIATE_ATTACKS

}  // namespace sfit
