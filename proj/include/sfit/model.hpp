#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "sfit/ops.hpp"
#include "sfit/tensor.hpp"

namespace sfit {

/// conv(64)-BN-LReLU-pool -> conv(128)-BN-LReLU-pool -> conv(256)-BN-LReLU-pool
/// -> flatten -> FC(1024) -> FC(K). Widths are configurable so gradient checks
/// can run on a narrow copy of the same topology.
struct MiddleCnnSpec {
  std::size_t in_channels = 3;
  std::size_t image_size = 32;
  std::size_t num_classes = 10;
  std::size_t conv_widths[3] = {64, 128, 256};
  std::size_t hidden = 1024;
  std::size_t kernel = 3;
  bool pad_to_32 = false;  // zero-pads e.g. 28x28 MNIST up to 32x32
};

/// FC(hidden)-LReLU-FC(K).
struct TinyMlpSpec {
  std::size_t input_dim = 2;
  std::size_t hidden = 8;
  std::size_t num_classes = 2;
};

using ArchSpec = std::variant<MiddleCnnSpec, TinyMlpSpec>;

std::string arch_id(const ArchSpec& spec);
std::vector<std::uint64_t> arch_hyperparameters(const ArchSpec& spec);
ArchSpec arch_from_hyperparameters(const std::string& id, const std::vector<std::uint64_t>& values);

enum class Mode { kTrain, kEval };

inline constexpr double kLeakySlope = 0.01;

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered stack of layers with owned parameters.
///
/// Copies are deep. A const Model is safe to share across threads through
/// forward_frozen(), which never touches parameter gradients or BN statistics.
template <typename T>
class Model {
 public:
  struct Conv {
    Tensor<T> weight, bias;
    Conv2dParams params;
  };
  struct BatchNorm {
    Tensor<T> gamma, beta;
    BatchNormStats<T> stats;
  };
  struct LeakyRelu {
    T slope;
  };
  struct MaxPool {
    std::size_t window, stride;
  };
  struct Pad {
    std::size_t pad;
  };
  struct Flatten {};
  struct Dense {
    Tensor<T> weight;  // [in x out]
    Tensor<T> bias;
  };
  using Layer = std::variant<Conv, BatchNorm, LeakyRelu, MaxPool, Pad, Flatten, Dense>;

  Model(ArchSpec spec, Shape input_shape, std::size_t num_classes, std::vector<Layer> layers);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // Parameters are tracked on the tape; kTrain uses batch statistics and
  // updates the BN running averages.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, Mode mode);

  // Eval mode with parameters detached: only x can receive a gradient.
  Tensor<T> forward_frozen(Tape<T>& tape, const Tensor<T>& x) const;

  // Logits without recording anything.
  Tensor<T> predict(const Tensor<T>& x) const;

  std::vector<NamedTensor<T>> parameters() const;
  // Parameters followed by BN running statistics, in checkpoint order.
  std::vector<NamedTensor<T>> state() const;
  std::size_t parameter_count() const;
  void zero_grad();

  const ArchSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

 private:
  void check_input(const Tensor<T>& x) const;

  ArchSpec spec_;
  Shape input_shape_;
  std::size_t num_classes_;
  std::vector<Layer> layers_;
};

template <typename T>
Model<T> build_middlecnn(const MiddleCnnSpec& spec, std::uint64_t seed = 0);

template <typename T>
Model<T> build_middlecnn(std::size_t in_channels, std::size_t image_size, std::size_t num_classes,
                         std::uint64_t seed = 0);

template <typename T>
Model<T> build_tinymlp(const TinyMlpSpec& spec, std::uint64_t seed = 0);

template <typename T>
Model<T> build_tinymlp(std::size_t input_dim, std::size_t hidden, std::size_t num_classes, std::uint64_t seed = 0);

template <typename T>
Model<T> build_model(const ArchSpec& spec, std::uint64_t seed = 0);

std::size_t parameter_count(const ArchSpec& spec);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace sfit
