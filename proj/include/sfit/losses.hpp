#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sfit/tensor.hpp"

namespace sfit {

/// Logits z[B x K] with one integer label per row.
template <typename T>
struct LogitsBatch {
  Tensor<T> logits;
  std::vector<int> labels;

  LogitsBatch(Tensor<T> z, std::vector<int> y);

  std::size_t batch() const { return logits.dim(0); }
  std::size_t classes() const { return logits.dim(1); }
};

enum class Reduction { kMean, kSum };

// Index of the largest logit other than `label`; ties go to the lowest index.
template <typename T>
std::size_t runner_up(std::span<const T> row, int label);

// Cross-entropy -z_y + log_sum_exp(z), written directly without the max shift.
// Kept as a reference: it overflows for large logits where ce_loss does not.
template <typename T>
std::vector<T> ce_loss_naive(const LogitsBatch<T>& batch);

// Per-example cross-entropy in the shifted form.
template <typename T>
std::vector<T> ce_per_example(const LogitsBatch<T>& batch);

template <typename T>
Tensor<T> ce_loss(Tape<T>& tape, const LogitsBatch<T>& batch, Reduction reduction = Reduction::kMean);

// Closed form d(ce)/dz per example: softmax(z) - onehot(y).
template <typename T>
Tensor<T> ce_grad_logits(const LogitsBatch<T>& batch);

// True where the logits gradient row is exactly zero and softmax equals the
// one-hot label bit for bit.
template <typename T>
std::vector<bool> is_gradient_vanished(const LogitsBatch<T>& batch);

// z_s - z_y with s the runner-up class.
template <typename T>
Tensor<T> mucs_loss(Tape<T>& tape, const LogitsBatch<T>& batch, Reduction reduction = Reduction::kMean);

// ce + weight * mucs.
template <typename T>
Tensor<T> combined_loss(Tape<T>& tape, const LogitsBatch<T>& batch, T mucs_weight = T(1),
                        Reduction reduction = Reduction::kMean);

// softmax(z / temperature) row-wise.
template <typename T>
Tensor<T> softmax_temperature(const Tensor<T>& logits, T temperature);

// Cross-entropy of softmax(z / temperature) against soft targets[B x K].
template <typename T>
Tensor<T> soft_label_ce(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& targets, T temperature,
                        Reduction reduction = Reduction::kMean);

}  // namespace sfit
