#include "sfit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "sfit/errors.hpp"

namespace sfit {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'I', 'T'};

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return sizeof(T) == 4 ? 1 : 2;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
  }
  void string(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void shape(const Shape& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) uint<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  template <typename T>
  void values(std::span<const T> v) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T x : v) uint<Bits>(std::bit_cast<Bits>(x));
  }
  template <typename T>
  void record(const std::string& name, const Shape& shape, std::span<const T> v) {
    string(name);
    uint<std::uint8_t>(dtype_tag<T>());
    this->shape(shape);
    values<T>(v);
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::span<const std::byte> take(std::size_t n) {
    if (n > in_.size() - pos_) throw TruncatedError("checkpoint truncated at byte " + std::to_string(pos_));
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint() {
    auto b = take(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(std::to_integer<std::uint8_t>(b[i])) << (8 * i);
    return value;
  }
  std::string string() {
    const auto n = uint<std::uint32_t>();
    auto b = take(n);
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }
  Shape shape() {
    const auto rank = uint<std::uint32_t>();
    Shape s(rank);
    for (auto& d : s) d = uint<std::uint32_t>();
    return s;
  }
  template <typename T>
  void values(std::span<T> out) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (auto& x : out) x = std::bit_cast<T>(uint<Bits>());
  }
  // Reads one record, checking name, dtype and shape against expectations.
  template <typename T>
  void record(const std::string& expected_name, const Shape& expected_shape, std::span<T> out) {
    const auto name = string();
    if (name != expected_name) throw ShapeMismatchError("expected tensor '" + expected_name + "', found '" + name + "'");
    const auto tag = uint<std::uint8_t>();
    if (tag != dtype_tag<T>()) throw FormatError("tensor '" + name + "' has dtype tag " + std::to_string(tag));
    const auto shape = this->shape();
    if (shape != expected_shape) {
      throw ShapeMismatchError("tensor '" + name + "' has shape " + shape_to_string(shape) + ", architecture needs " +
                               shape_to_string(expected_shape));
    }
    values<T>(out);
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::vector<std::byte> serialize_checkpoint(const Model<T>& model, std::uint64_t iteration, const AdamState<T>* optimizer) {
  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.string(arch_id(model.spec()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.num_classes()));
  w.shape(model.input_shape());
  const auto hyper = arch_hyperparameters(model.spec());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(hyper.size()));
  for (auto h : hyper) w.uint<std::uint64_t>(h);
  w.uint<std::uint64_t>(iteration);
  w.uint<std::uint8_t>(optimizer ? 1 : 0);
  w.uint<std::uint64_t>(optimizer ? optimizer->step : 0);

  const auto state = model.state();
  const auto params = model.parameters();
  if (optimizer && (optimizer->m.size() != params.size() || optimizer->v.size() != params.size())) {
    throw UsageError("optimizer state does not match model parameters");
  }
  const std::size_t count = state.size() + (optimizer ? 2 * params.size() : 0);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(count));
  for (const auto& t : state) w.record<T>(t.name, t.tensor.shape(), t.tensor.values());
  if (optimizer) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.record<T>("adam.m/" + params[i].name, params[i].tensor.shape(), optimizer->m[i]);
      w.record<T>("adam.v/" + params[i].name, params[i].tensor.shape(), optimizer->v[i]);
    }
  }
  return w.take();
}

template <typename T>
Checkpoint<T> parse_checkpoint(std::span<const std::byte> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic bytes");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (reader is version " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto id = r.string();
  const auto classes = r.uint<std::uint32_t>();
  const auto input_shape = r.shape();
  const auto n_hyper = r.uint<std::uint32_t>();
  std::vector<std::uint64_t> hyper(n_hyper);
  for (auto& h : hyper) h = r.uint<std::uint64_t>();
  const auto iteration = r.uint<std::uint64_t>();
  const bool has_optimizer = r.uint<std::uint8_t>() != 0;
  const auto adam_step = r.uint<std::uint64_t>();

  const ArchSpec spec = arch_from_hyperparameters(id, hyper);
  Model<T> model = build_model<T>(spec, 0);
  if (model.num_classes() != classes || model.input_shape() != input_shape) {
    throw ShapeMismatchError("checkpoint header disagrees with its architecture hyperparameters");
  }
  const auto state = model.state();
  const auto params = model.parameters();
  const auto count = r.uint<std::uint32_t>();
  const std::size_t expected = state.size() + (has_optimizer ? 2 * params.size() : 0);
  if (count != expected) {
    throw ShapeMismatchError("checkpoint has " + std::to_string(count) + " tensors, architecture needs " +
                             std::to_string(expected));
  }
  for (const auto& t : state) {
    auto handle = t.tensor;
    r.record<T>(t.name, handle.shape(), handle.mutable_values());
  }
  Checkpoint<T> out{std::move(model), iteration, std::nullopt};
  if (has_optimizer) {
    AdamState<T> adam = AdamState<T>::for_parameters(params);
    adam.step = adam_step;
    for (std::size_t i = 0; i < params.size(); ++i) {
      r.record<T>("adam.m/" + params[i].name, params[i].tensor.shape(), std::span<T>(adam.m[i]));
      r.record<T>("adam.v/" + params[i].name, params[i].tensor.shape(), std::span<T>(adam.v[i]));
    }
    out.optimizer = std::move(adam);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last checkpoint record");
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, std::uint64_t iteration,
                     const AdamState<T>* optimizer) {
  write_file_bytes(path, serialize_checkpoint(model, iteration, optimizer));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_checkpoint<T>(bytes);
}

#define SFIT_INSTANTIATE_CHECKPOINT(T)                                                                           \
  template std::vector<std::byte> serialize_checkpoint<T>(const Model<T>&, std::uint64_t, const AdamState<T>*); \
  template Checkpoint<T> parse_checkpoint<T>(std::span<const std::byte>);                                        \
  template void save_checkpoint<T>(const std::filesystem::path&, const Model<T>&, std::uint64_t,                 \
                                   const AdamState<T>*);                                                         \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);

SFIT_INSTANTIATE_CHECKPOINT(float)
SFIT_INSTANTIATE_CHECKPOINT(double)

#undef SFIT_INSTANTIATE_CHECKPOINT

}  // namespace sfit
