#include "sfit/model.hpp"

#include <cmath>
#include <random>

#include "sfit/errors.hpp"

namespace sfit {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::size_t effective_image_size(const MiddleCnnSpec& s) { return s.pad_to_32 ? 32 : s.image_size; }

void validate(const MiddleCnnSpec& s) {
  if (s.in_channels == 0 || s.num_classes < 2 || s.hidden == 0 || s.kernel == 0 || s.kernel % 2 == 0) {
    throw ConfigError("middlecnn: channels, hidden width and classes must be positive, kernel odd");
  }
  for (auto w : s.conv_widths) {
    if (w == 0) throw ConfigError("middlecnn: conv widths must be positive");
  }
  if (s.pad_to_32) {
    if (s.image_size > 32 || s.image_size % 2 != 0) throw ConfigError("middlecnn: pad-to-32 needs an even image size <= 32");
  } else if (s.image_size == 0 || s.image_size % 8 != 0) {
    throw ConfigError("middlecnn: image size " + std::to_string(s.image_size) +
                      " is not divisible by 8 (three 2x pools); use pad-to-32");
  }
}

void validate(const TinyMlpSpec& s) {
  if (s.input_dim == 0 || s.hidden == 0 || s.num_classes < 2) {
    throw ConfigError("tinymlp: input, hidden and class counts must be positive (K >= 2)");
  }
}

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
typename Model<T>::Dense dense_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {kaiming_uniform<T>({in, out}, in, rng), Tensor<T>::zeros({out}, true)};
}

template <typename T>
typename Model<T>::Layer clone_layer(const typename Model<T>::Layer& layer) {
  using M = Model<T>;
  return std::visit(
      Overloaded{
          [](const typename M::Conv& l) -> typename M::Layer { return typename M::Conv{l.weight.clone(), l.bias.clone(), l.params}; },
          [](const typename M::BatchNorm& l) -> typename M::Layer {
            return typename M::BatchNorm{l.gamma.clone(), l.beta.clone(),
                                         {l.stats.running_mean.clone(), l.stats.running_var.clone()}};
          },
          [](const typename M::Dense& l) -> typename M::Layer { return typename M::Dense{l.weight.clone(), l.bias.clone()}; },
          [](const auto& l) -> typename M::Layer { return l; },
      },
      layer);
}

}  // namespace

std::string arch_id(const ArchSpec& spec) {
  return std::holds_alternative<MiddleCnnSpec>(spec) ? "middlecnn" : "tinymlp";
}

std::vector<std::uint64_t> arch_hyperparameters(const ArchSpec& spec) {
  return std::visit(Overloaded{
                        [](const MiddleCnnSpec& s) {
                          return std::vector<std::uint64_t>{s.in_channels,    s.image_size,     s.num_classes,
                                                            s.conv_widths[0], s.conv_widths[1], s.conv_widths[2],
                                                            s.hidden,         s.kernel,         s.pad_to_32 ? 1u : 0u};
                        },
                        [](const TinyMlpSpec& s) {
                          return std::vector<std::uint64_t>{s.input_dim, s.hidden, s.num_classes};
                        },
                    },
                    spec);
}

ArchSpec arch_from_hyperparameters(const std::string& id, const std::vector<std::uint64_t>& v) {
  if (id == "middlecnn") {
    if (v.size() != 9) throw ShapeMismatchError("middlecnn header needs 9 hyperparameters");
    MiddleCnnSpec s;
    s.in_channels = v[0];
    s.image_size = v[1];
    s.num_classes = v[2];
    s.conv_widths[0] = v[3];
    s.conv_widths[1] = v[4];
    s.conv_widths[2] = v[5];
    s.hidden = v[6];
    s.kernel = v[7];
    s.pad_to_32 = v[8] != 0;
    return s;
  }
  if (id == "tinymlp") {
    if (v.size() != 3) throw ShapeMismatchError("tinymlp header needs 3 hyperparameters");
    return TinyMlpSpec{v[0], v[1], v[2]};
  }
  throw FormatError("unknown architecture id '" + id + "'");
}

std::size_t parameter_count(const ArchSpec& spec) {
  return std::visit(Overloaded{
                        [](const MiddleCnnSpec& s) {
                          std::size_t total = 0, in = s.in_channels;
                          for (auto w : s.conv_widths) {
                            total += w * in * s.kernel * s.kernel + w;  // conv
                            total += 2 * w;                             // BN gamma, beta
                            in = w;
                          }
                          const std::size_t side = effective_image_size(s) / 8;
                          const std::size_t flat = in * side * side;
                          total += flat * s.hidden + s.hidden;
                          total += s.hidden * s.num_classes + s.num_classes;
                          return total;
                        },
                        [](const TinyMlpSpec& s) {
                          return s.input_dim * s.hidden + s.hidden + s.hidden * s.num_classes + s.num_classes;
                        },
                    },
                    spec);
}

template <typename T>
Model<T>::Model(ArchSpec spec, Shape input_shape, std::size_t num_classes, std::vector<Layer> layers)
    : spec_(std::move(spec)), input_shape_(std::move(input_shape)), num_classes_(num_classes), layers_(std::move(layers)) {}

template <typename T>
Model<T>::Model(const Model& other)
    : spec_(other.spec_), input_shape_(other.input_shape_), num_classes_(other.num_classes_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(clone_layer<T>(l));
}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
void Model<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() < 2) throw UsageError("model input needs a batch axis, got " + shape_to_string(x.shape()));
  const std::size_t per_example = x.numel() / x.dim(0);
  if (std::holds_alternative<TinyMlpSpec>(spec_)) {
    if (per_example != shape_numel(input_shape_)) {
      throw UsageError("tinymlp expects " + std::to_string(shape_numel(input_shape_)) + " features per example, got " +
                       shape_to_string(x.shape()));
    }
    return;
  }
  Shape tail(x.shape().begin() + 1, x.shape().end());
  if (tail != input_shape_) {
    throw UsageError("middlecnn expects examples of shape " + shape_to_string(input_shape_) + ", got " +
                     shape_to_string(x.shape()));
  }
}

template <typename T>
Tensor<T> Model<T>::forward(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
  check_input(x);
  const bool training = mode == Mode::kTrain;
  Tensor<T> h = x;
  for (auto& layer : layers_) {
    h = std::visit(Overloaded{
                       [&](Conv& l) { return conv2d(tape, h, l.weight, l.bias, l.params); },
                       [&](BatchNorm& l) { return batchnorm(tape, h, l.gamma, l.beta, &l.stats, training); },
                       [&](LeakyRelu& l) { return leaky_relu(tape, h, l.slope); },
                       [&](MaxPool& l) { return maxpool2d(tape, h, l.window, l.stride); },
                       [&](Pad& l) { return pad2d(tape, h, l.pad); },
                       [&](Flatten&) { return flatten(tape, h); },
                       [&](Dense& l) { return add_bias(tape, matmul(tape, flatten(tape, h), l.weight), l.bias); },
                   },
                   layer);
  }
  return h;
}

template <typename T>
Tensor<T> Model<T>::forward_frozen(Tape<T>& tape, const Tensor<T>& x) const {
  check_input(x);
  Tensor<T> h = x;
  for (const auto& layer : layers_) {
    h = std::visit(
        Overloaded{
            [&](const Conv& l) { return conv2d(tape, h, l.weight.detach(), l.bias.detach(), l.params); },
            [&](const BatchNorm& l) { return batchnorm_eval(tape, h, l.gamma.detach(), l.beta.detach(), l.stats); },
            [&](const LeakyRelu& l) { return leaky_relu(tape, h, l.slope); },
            [&](const MaxPool& l) { return maxpool2d(tape, h, l.window, l.stride); },
            [&](const Pad& l) { return pad2d(tape, h, l.pad); },
            [&](const Flatten&) { return flatten(tape, h); },
            [&](const Dense& l) {
              return add_bias(tape, matmul(tape, flatten(tape, h), l.weight.detach()), l.bias.detach());
            },
        },
        layer);
  }
  return h;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& x) const {
  Tape<T> tape;
  return forward_frozen(tape, x.detach());
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  std::size_t conv = 0, bn = 0, fc = 0;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv& l) {
                     const auto p = "conv" + std::to_string(++conv);
                     out.push_back({p + ".weight", l.weight});
                     out.push_back({p + ".bias", l.bias});
                   },
                   [&](const BatchNorm& l) {
                     const auto p = "bn" + std::to_string(++bn);
                     out.push_back({p + ".gamma", l.gamma});
                     out.push_back({p + ".beta", l.beta});
                   },
                   [&](const Dense& l) {
                     const auto p = "fc" + std::to_string(++fc);
                     out.push_back({p + ".weight", l.weight});
                     out.push_back({p + ".bias", l.bias});
                   },
                   [](const auto&) {},
               },
               layer);
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::state() const {
  auto out = parameters();
  std::size_t bn = 0;
  for (const auto& layer : layers_) {
    if (const auto* l = std::get_if<BatchNorm>(&layer)) {
      const auto p = "bn" + std::to_string(++bn);
      out.push_back({p + ".running_mean", l->stats.running_mean});
      out.push_back({p + ".running_var", l->stats.running_var});
    }
  }
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename T>
Model<T> build_middlecnn(const MiddleCnnSpec& spec, std::uint64_t seed) {
  validate(spec);
  using M = Model<T>;
  std::mt19937_64 rng(seed);
  std::vector<typename M::Layer> layers;
  if (spec.pad_to_32 && spec.image_size < 32) layers.push_back(typename M::Pad{(32 - spec.image_size) / 2});
  std::size_t in = spec.in_channels;
  const std::size_t k = spec.kernel;
  for (auto width : spec.conv_widths) {
    layers.push_back(typename M::Conv{kaiming_uniform<T>({width, in, k, k}, in * k * k, rng),
                                      Tensor<T>::zeros({width}, true), Conv2dParams{1, k / 2}});
    layers.push_back(typename M::BatchNorm{Tensor<T>::filled({width}, T(1), true), Tensor<T>::zeros({width}, true),
                                           {Tensor<T>::zeros({width}), Tensor<T>::filled({width}, T(1))}});
    layers.push_back(typename M::LeakyRelu{static_cast<T>(kLeakySlope)});
    layers.push_back(typename M::MaxPool{2, 2});
    in = width;
  }
  const std::size_t side = effective_image_size(spec) / 8;
  layers.push_back(typename M::Flatten{});
  layers.push_back(dense_layer<T>(in * side * side, spec.hidden, rng));
  layers.push_back(dense_layer<T>(spec.hidden, spec.num_classes, rng));
  return M(spec, Shape{spec.in_channels, spec.image_size, spec.image_size}, spec.num_classes, std::move(layers));
}

template <typename T>
Model<T> build_middlecnn(std::size_t in_channels, std::size_t image_size, std::size_t num_classes, std::uint64_t seed) {
  MiddleCnnSpec spec;
  spec.in_channels = in_channels;
  spec.image_size = image_size;
  spec.num_classes = num_classes;
  return build_middlecnn<T>(spec, seed);
}

template <typename T>
Model<T> build_tinymlp(const TinyMlpSpec& spec, std::uint64_t seed) {
  validate(spec);
  using M = Model<T>;
  std::mt19937_64 rng(seed);
  std::vector<typename M::Layer> layers;
  layers.push_back(dense_layer<T>(spec.input_dim, spec.hidden, rng));
  layers.push_back(typename M::LeakyRelu{static_cast<T>(kLeakySlope)});
  layers.push_back(dense_layer<T>(spec.hidden, spec.num_classes, rng));
  return M(spec, Shape{spec.input_dim}, spec.num_classes, std::move(layers));
}

template <typename T>
Model<T> build_tinymlp(std::size_t input_dim, std::size_t hidden, std::size_t num_classes, std::uint64_t seed) {
  return build_tinymlp<T>(TinyMlpSpec{input_dim, hidden, num_classes}, seed);
}

template <typename T>
Model<T> build_model(const ArchSpec& spec, std::uint64_t seed) {
  return std::visit(Overloaded{
                        [&](const MiddleCnnSpec& s) { return build_middlecnn<T>(s, seed); },
                        [&](const TinyMlpSpec& s) { return build_tinymlp<T>(s, seed); },
                    },
                    spec);
}

#define SFIT_INSTANTIATE_MODEL(T)                                                                   \
  template class Model<T>;                                                                          \
  template Model<T> build_middlecnn<T>(const MiddleCnnSpec&, std::uint64_t);                        \
  template Model<T> build_middlecnn<T>(std::size_t, std::size_t, std::size_t, std::uint64_t);       \
  template Model<T> build_tinymlp<T>(const TinyMlpSpec&, std::uint64_t);                            \
  template Model<T> build_tinymlp<T>(std::size_t, std::size_t, std::size_t, std::uint64_t);         \
  template Model<T> build_model<T>(const ArchSpec&, std::uint64_t);

SFIT_INSTANTIATE_MODEL(float)
SFIT_INSTANTIATE_MODEL(double)

#undef SFIT_INSTANTIATE_MODEL

}  // namespace sfit
