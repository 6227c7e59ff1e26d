#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfit/attacks.hpp"
#include "sfit/dataset.hpp"
#include "sfit/model.hpp"
#include "sfit/optimizer.hpp"

namespace sfit {

enum class Objective { kCe, kMucs, kCeMucs, kDistill, kAdv };

std::string to_string(Objective objective);
Objective objective_from_string(const std::string& name);  // "ce", "mucs", "ce+mucs", "distill", "adv"

struct TrainConfig {
  Objective objective = Objective::kCeMucs;
  AdamOptions adam;
  std::size_t batch_size = 128;
  std::size_t max_iterations = 500;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  double mucs_weight = 1.0;
  double temperature = 100.0;  // distill only
  // Inner maximization for kAdv.
  AttackConfig adv_attack = AttackConfig::pgd(8.0 / 255.0, 2.0 / 255.0, 10);
  // MUCS objectives stop once the vanished fraction on the training set
  // reaches this value at an evaluation point. Values above 1 disable it.
  double vanished_target = 0.995;
  // Optional attack whose robust accuracy is logged at each evaluation point,
  // measured on the first log_attack_examples training examples.
  std::optional<AttackConfig> log_attack;
  std::size_t log_attack_examples = 256;

  void validate() const;
};

struct TrainRecord {
  std::size_t iteration = 0;
  double loss = 0;  // mean over the steps since the previous record
  double clean_accuracy = 0;
  std::optional<double> robust_accuracy;
  std::string attack;
  double vanished_fraction = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  std::string to_jsonl() const;
  static TrainLog from_jsonl(const std::string& text);
};

template <typename T>
struct TrainResult {
  Model<T> model;
  TrainLog log;
  AdamState<T> optimizer;
  std::size_t iterations = 0;
};

// Trains `model` on `data`. soft_targets (N x K, row-aligned with data) are
// used by kDistill; without them kDistill is hard-label CE on z / T.
// Non-finite losses raise DivergenceError.
template <typename T>
TrainResult<T> train(Model<T> model, const DatasetSplit& data, const TrainConfig& cfg,
                     const std::vector<T>* soft_targets = nullptr);

template <typename T>
struct DistillResult {
  TrainResult<T> teacher;
  TrainResult<T> student;
};

// Teacher on hard labels at temperature T, then student on the teacher's
// softmax(z / T). Both configs are forced to kDistill with the given T.
template <typename T>
DistillResult<T> train_distill(Model<T> teacher, Model<T> student, const DatasetSplit& data,
                               TrainConfig teacher_cfg, TrainConfig student_cfg, double temperature);

// Fraction of examples whose logits gradient is exactly zero.
template <typename T>
double superfit_fraction(const Model<T>& model, const DatasetSplit& data, std::size_t batch_size = 128);

}  // namespace sfit
