#include "sfit/training.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sfit/errors.hpp"
#include "sfit/losses.hpp"
#include "sfit/ops.hpp"

namespace sfit {

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::kCe: return "ce";
    case Objective::kMucs: return "mucs";
    case Objective::kCeMucs: return "ce+mucs";
    case Objective::kDistill: return "distill";
    case Objective::kAdv: return "adv";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& name) {
  if (name == "ce") return Objective::kCe;
  if (name == "mucs") return Objective::kMucs;
  if (name == "ce+mucs" || name == "superfit") return Objective::kCeMucs;
  if (name == "distill") return Objective::kDistill;
  if (name == "adv") return Objective::kAdv;
  throw ConfigError("unknown objective '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("Adam eps must be positive");
  if (max_iterations == 0) throw ConfigError("max_iterations must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (objective == Objective::kDistill && !(temperature > 0.0)) throw ConfigError("distillation needs T > 0");
  if (objective == Objective::kAdv) adv_attack.validate();
  if (log_attack) log_attack->validate();
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"iteration", r.iteration},
                     {"loss", r.loss},
                     {"clean_accuracy", r.clean_accuracy},
                     {"vanished_fraction", r.vanished_fraction}};
    if (r.robust_accuracy) {
      j["robust_accuracy"] = *r.robust_accuracy;
      j["attack"] = r.attack;
    }
    out += j.dump() + "\n";
  }
  return out;
}

TrainLog TrainLog::from_jsonl(const std::string& text) {
  TrainLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TrainRecord r;
    r.iteration = j.at("iteration").get<std::size_t>();
    r.loss = j.at("loss").get<double>();
    r.clean_accuracy = j.at("clean_accuracy").get<double>();
    r.vanished_fraction = j.at("vanished_fraction").get<double>();
    if (j.contains("robust_accuracy")) {
      r.robust_accuracy = j.at("robust_accuracy").get<double>();
      r.attack = j.value("attack", "");
    }
    if (!log.records.empty() && r.iteration <= log.records.back().iteration) {
      throw FormatError("train log iterations must be strictly increasing");
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

namespace {

struct Scan {
  std::size_t correct = 0;
  std::size_t vanished = 0;
};

template <typename T>
Scan scan(const Model<T>& model, const DatasetSplit& data, std::size_t batch_size) {
  const std::size_t n = data.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<Scan> parts(batches);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * batch_size, hi = std::min(n, lo + batch_size);
    const auto z = model.predict(data.images<T>(lo, hi));
    std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(lo),
                            data.labels.begin() + static_cast<std::ptrdiff_t>(hi));
    LogitsBatch<T> batch(z, labels);
    const auto vanished = is_gradient_vanished(batch);
    const std::size_t k = z.dim(1);
    for (std::size_t i = 0; i < hi - lo; ++i) {
      auto row = z.values().subspan(i * k, k);
      const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
      parts[b].correct += pred == labels[i] ? 1 : 0;
      parts[b].vanished += vanished[i] ? 1 : 0;
    }
  }
  Scan total;
  for (const auto& p : parts) {
    total.correct += p.correct;
    total.vanished += p.vanished;
  }
  return total;
}

template <typename T>
double robust_accuracy(const Model<T>& model, const DatasetSplit& data, const AttackConfig& attack, std::size_t limit) {
  const std::size_t n = std::min(limit, data.size());
  const auto x = data.images<T>(0, n);
  std::vector<int> labels(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(n));
  const auto adv = run_attack(model, x, labels, attack);
  std::size_t correct = 0;
  for (bool s : adv.success) correct += s ? 0 : 1;
  return static_cast<double>(correct) / static_cast<double>(n);
}

template <typename T>
Tensor<T> objective_loss(Tape<T>& tape, const Tensor<T>& z, const std::vector<int>& labels, const TrainConfig& cfg,
                         const std::vector<T>* soft_targets, std::span<const std::size_t> rows) {
  switch (cfg.objective) {
    case Objective::kCe:
    case Objective::kAdv:
      return ce_loss(tape, LogitsBatch<T>(z, labels));
    case Objective::kMucs:
      return mucs_loss(tape, LogitsBatch<T>(z, labels));
    case Objective::kCeMucs:
      return combined_loss(tape, LogitsBatch<T>(z, labels), static_cast<T>(cfg.mucs_weight));
    case Objective::kDistill: {
      const T temperature = static_cast<T>(cfg.temperature);
      if (!soft_targets) return ce_loss(tape, LogitsBatch<T>(scale(tape, z, T(1) / temperature), labels));
      const std::size_t k = z.dim(1);
      std::vector<T> targets;
      targets.reserve(rows.size() * k);
      for (auto r : rows) {
        targets.insert(targets.end(), soft_targets->begin() + static_cast<std::ptrdiff_t>(r * k),
                       soft_targets->begin() + static_cast<std::ptrdiff_t>((r + 1) * k));
      }
      return soft_label_ce(tape, z, Tensor<T>({rows.size(), k}, std::move(targets)), temperature);
    }
  }
  throw ConfigError("unknown objective");
}

}  // namespace

template <typename T>
TrainResult<T> train(Model<T> model, const DatasetSplit& data, const TrainConfig& cfg,
                     const std::vector<T>* soft_targets) {
  cfg.validate();
  data.validate();
  if (data.example_shape != model.input_shape()) {
    throw UsageError("dataset example shape " + shape_to_string(data.example_shape) + " does not match model input " +
                     shape_to_string(model.input_shape()));
  }
  if (data.num_classes != model.num_classes()) throw UsageError("dataset and model disagree on the class count");
  if (soft_targets && soft_targets->size() != data.size() * model.num_classes()) {
    throw UsageError("soft targets must be N x K");
  }

  const std::size_t n = data.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  TrainResult<T> result{std::move(model), {}, {}, 0};
  auto& m = result.model;
  const auto live_params = m.parameters();
  result.optimizer = AdamState<T>::for_parameters(live_params);

  double loss_sum = 0;
  std::size_t loss_count = 0;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    if (cursor + batch > n) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::span<const std::size_t> rows(order.data() + cursor, batch);
    cursor += batch;

    Tensor<T> x = data.gather<T>(rows);
    const auto labels = data.gather_labels(rows);
    if (cfg.objective == Objective::kAdv) {
      AttackConfig attack = cfg.adv_attack;
      attack.seed = cfg.seed ^ (0x9E3779B97F4A7C15ULL * it);
      x = run_attack(m, x, labels, attack).x_adv;
    }

    T loss_value;
    try {
      m.zero_grad();
      Tape<T> tape;
      const auto z = m.forward(tape, x, Mode::kTrain);
      const auto loss = objective_loss(tape, z, labels, cfg, soft_targets, rows);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    adam_step<T>(live_params, result.optimizer, cfg.adam);
    loss_sum += static_cast<double>(loss_value);
    ++loss_count;
    result.iterations = it;

    if (it % cfg.eval_every == 0 || it == cfg.max_iterations) {
      const auto s = scan(m, data, 128);
      TrainRecord rec;
      rec.iteration = it;
      rec.loss = loss_sum / static_cast<double>(loss_count);
      rec.clean_accuracy = static_cast<double>(s.correct) / static_cast<double>(n);
      rec.vanished_fraction = static_cast<double>(s.vanished) / static_cast<double>(n);
      if (cfg.log_attack) {
        rec.robust_accuracy = robust_accuracy(m, data, *cfg.log_attack, cfg.log_attack_examples);
        rec.attack = cfg.log_attack->name();
      }
      result.log.records.push_back(rec);
      loss_sum = 0;
      loss_count = 0;
      const bool superfit = cfg.objective == Objective::kMucs || cfg.objective == Objective::kCeMucs;
      if (superfit && rec.vanished_fraction >= cfg.vanished_target) break;
    }
  }
  return result;
}

template <typename T>
DistillResult<T> train_distill(Model<T> teacher, Model<T> student, const DatasetSplit& data, TrainConfig teacher_cfg,
                               TrainConfig student_cfg, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("distillation temperature must be positive");
  teacher_cfg.objective = Objective::kDistill;
  teacher_cfg.temperature = temperature;
  student_cfg.objective = Objective::kDistill;
  student_cfg.temperature = temperature;

  auto t = train(std::move(teacher), data, teacher_cfg);
  std::vector<T> soft;
  soft.reserve(data.size() * t.model.num_classes());
  for (std::size_t lo = 0; lo < data.size(); lo += 128) {
    const std::size_t hi = std::min(data.size(), lo + 128);
    const auto p = softmax_temperature(t.model.predict(data.images<T>(lo, hi)), static_cast<T>(temperature));
    soft.insert(soft.end(), p.values().begin(), p.values().end());
  }
  auto s = train(std::move(student), data, student_cfg, &soft);
  return {std::move(t), std::move(s)};
}

template <typename T>
double superfit_fraction(const Model<T>& model, const DatasetSplit& data, std::size_t batch_size) {
  if (data.size() == 0) throw UsageError("superfit_fraction needs a nonempty dataset");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  return static_cast<double>(scan(model, data, batch_size).vanished) / static_cast<double>(data.size());
}

#define SFIT_INSTANTIATE_TRAINING(T)                                                                          \
  template TrainResult<T> train<T>(Model<T>, const DatasetSplit&, const TrainConfig&, const std::vector<T>*); \
  template DistillResult<T> train_distill<T>(Model<T>, Model<T>, const DatasetSplit&, TrainConfig,            \
                                             TrainConfig, double);                                            \
  template double superfit_fraction<T>(const Model<T>&, const DatasetSplit&, std::size_t);

SFIT_INSTANTIATE_TRAINING(float)
SFIT_INSTANTIATE_TRAINING(double)

#undef SFIT_INSTANTIATE_TRAINING

}  // namespace sfit
