#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfit/attacks.hpp"
#include "sfit/dataset.hpp"
#include "sfit/model.hpp"

namespace sfit {

/// Per-class mean logits: row c averages z over examples whose label is c.
struct LogitsStats {
  std::vector<std::vector<double>> means;  // K x K
  std::vector<std::size_t> counts;         // examples per true class
  std::vector<bool> missing;               // class absent from the split; its row is all zero

  std::string to_csv() const;
  // min over present classes of (diagonal - max off-diagonal in that row)
  double min_diagonal_margin() const;
};

struct AttackOutcome {
  std::string name;
  std::size_t correct = 0;
  double robust_accuracy = 0;
  // Examples correct on clean input and among them, the ones still correct
  // after the attack, restricted to examples whose gradient has vanished.
  std::size_t vanished_correct_clean = 0;
  std::size_t vanished_correct_adv = 0;
};

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::size_t n_examples = 0;
  std::size_t clean_correct = 0;
  double clean_accuracy = 0;
  std::vector<AttackOutcome> attacks;
  std::size_t vanished = 0;
  double vanished_fraction = 0;
  LogitsStats logits;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  // Two-column field,value rows; numbers printed with 17 significant digits.
  std::string to_csv() const;
  static EvalReport from_csv(const std::string& text);
  std::string to_table() const;
};

struct EvalOptions {
  std::size_t batch_size = 128;
  std::string model_id;
  std::uint64_t seed = 0;  // replaces every attack's seed
};

// Clean accuracy, robust accuracy for each attack on the same examples,
// vanished fraction and per-class logits means. Batches run in parallel;
// attack randomness is keyed by example index so the result does not depend
// on the thread count.
template <typename T>
EvalReport evaluate(const Model<T>& model, const DatasetSplit& split, std::span<const AttackConfig> attacks,
                    const EvalOptions& options = {});

template <typename T>
LogitsStats logits_stats(const Model<T>& model, const DatasetSplit& split, std::size_t batch_size = 128);

// Default protocol: PGD-100, APGD-100 and A3-100 at eps 8/255, step eps/10.
std::vector<AttackConfig> default_protocol(double epsilon = 8.0 / 255.0, std::uint64_t seed = 0);

nlohmann::json attack_to_json(const AttackConfig& cfg);
AttackConfig attack_from_json(const nlohmann::json& j);

// Short content hash of a model's serialized state.
template <typename T>
std::string model_fingerprint(const Model<T>& model);

}  // namespace sfit
