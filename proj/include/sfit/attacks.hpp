#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfit/model.hpp"
#include "sfit/tensor.hpp"

// L-infinity white-box attacks driven by the cross-entropy input gradient.
// Every attack is read-only with respect to the model. Randomness comes from
// per-example streams keyed by (seed, restart, first_index + row), so splitting
// a batch differently does not change any example's result.
namespace sfit {

enum class AttackKind { kFgsm, kBim, kPgd, kApgd, kA3 };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct ApgdSchedule {
  double first_checkpoint = 0.22;
  double interval_decrement = 0.03;
  double min_interval = 0.06;
  double rho = 0.75;
};

struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 8.0 / 255.0;
  double step_size = 8.0 / 255.0 / 10.0;
  std::size_t iterations = 100;
  bool random_init = true;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  // A3 starting-point search.
  std::size_t init_iterations = 7;
  double init_step_size = 8.0 / 255.0 / 4.0;
  ApgdSchedule apgd;

  void validate() const;
  std::string name() const;  // e.g. "PGD-100"

  static AttackConfig fgsm(double epsilon);
  static AttackConfig bim(double epsilon, double step_size, std::size_t iterations);
  static AttackConfig pgd(double epsilon, double step_size, std::size_t iterations, std::uint64_t seed = 0);
  static AttackConfig apgd_attack(double epsilon, double step_size, std::size_t iterations, std::uint64_t seed = 0);
  static AttackConfig a3(double epsilon, std::size_t iterations, std::uint64_t seed = 0);
};

template <typename T>
struct AdversarialBatch {
  Tensor<T> x_orig;
  Tensor<T> x_adv;
  std::vector<bool> success;   // prediction on x_adv differs from the label
  // Per-example CE loss: at x_adv for FGSM/BIM/PGD, the best loss reached
  // for APGD and A3.
  std::vector<T> loss;
};

template <typename T>
struct InputGradient {
  Tensor<T> grad;              // d(sum of per-example CE)/dx
  std::vector<T> loss;         // CE per example
  std::vector<int> prediction;
};

// Elementwise clamp of x_adv into [x_orig - eps, x_orig + eps] intersected with [0, 1].
template <typename T>
Tensor<T> project_linf(const Tensor<T>& x_adv, const Tensor<T>& x_orig, double epsilon);

template <typename T>
InputGradient<T> ce_input_gradient(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels);

template <typename T>
AdversarialBatch<T> fgsm(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                         const AttackConfig& cfg);

template <typename T>
AdversarialBatch<T> bim(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                        const AttackConfig& cfg);

template <typename T>
AdversarialBatch<T> pgd(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                        const AttackConfig& cfg, std::size_t first_index = 0);

template <typename T>
AdversarialBatch<T> apgd(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                         const AttackConfig& cfg, std::size_t first_index = 0);

struct DirectionResult {
  std::vector<bool> zero_gradient;  // rows where grad(w_d^T z) was exactly zero
};

// v = grad_x(w_d^T f(x)) / ||grad_x(w_d^T f(x))||_2 per example. weights is
// [B x K]; rows whose gradient is zero yield a zero direction and are flagged.
template <typename T>
Tensor<T> a3_direction(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& weights,
                       DirectionResult* info = nullptr);

// T signed steps along a3_direction from x with a fixed w_d, projected each step.
template <typename T>
Tensor<T> a3_init(const Model<T>& model, const Tensor<T>& x, const Tensor<T>& weights, const AttackConfig& cfg);

// 1/2 eps (1 + cos((n mod N) / N * pi))
double a3_step_size(std::size_t n, std::size_t total, double epsilon);

// Draws w_d ~ U(-1, 1)^K for each row from the per-example streams.
template <typename T>
Tensor<T> a3_sample_directions(std::size_t batch, std::size_t classes, const AttackConfig& cfg,
                               std::size_t restart, std::size_t first_index);

template <typename T>
AdversarialBatch<T> a3_attack(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                              const AttackConfig& cfg, std::size_t first_index = 0);

// Dispatches on cfg.kind.
template <typename T>
AdversarialBatch<T> run_attack(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                               const AttackConfig& cfg, std::size_t first_index = 0);

enum class StreamPurpose : std::uint32_t { kUniformStart = 1, kDirection = 2 };

// Generator for one example's stream keyed by (seed, restart, example index, purpose).
std::mt19937_64 example_rng(std::uint64_t seed, std::size_t restart, std::size_t example, StreamPurpose purpose);

}  // namespace sfit
