#include "sfit/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "sfit/checkpoint.hpp"
#include "sfit/errors.hpp"

namespace sfit {

namespace {

std::uint32_t read_be32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | std::to_integer<std::uint32_t>(bytes[offset + i]);
  return v;
}

std::string content_checksum(const DatasetSplit& s) {
  std::vector<std::byte> bytes(s.pixels.size() * sizeof(float) + s.labels.size() * sizeof(int));
  std::memcpy(bytes.data(), s.pixels.data(), s.pixels.size() * sizeof(float));
  std::memcpy(bytes.data() + s.pixels.size() * sizeof(float), s.labels.data(), s.labels.size() * sizeof(int));
  return sha256_hex(bytes);
}

DatasetSplit pick(const DatasetSplit& split, std::span<const std::size_t> indices, std::string name) {
  DatasetSplit out;
  out.name = std::move(name);
  out.example_shape = split.example_shape;
  out.num_classes = split.num_classes;
  const std::size_t per = split.example_numel();
  out.pixels.reserve(indices.size() * per);
  for (auto i : indices) {
    if (i >= split.size()) throw UsageError("example index out of range");
    out.pixels.insert(out.pixels.end(), split.pixels.begin() + static_cast<std::ptrdiff_t>(i * per),
                      split.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.labels.push_back(split.labels[i]);
  }
  out.checksum = content_checksum(out);
  return out;
}

}  // namespace

void DatasetSplit::validate() const {
  if (labels.empty()) throw FormatError("dataset '" + name + "' is empty");
  if (pixels.size() != labels.size() * example_numel()) throw FormatError("dataset '" + name + "' has inconsistent sizes");
  for (float p : pixels) {
    if (!(p >= 0.0f && p <= 1.0f)) throw FormatError("dataset '" + name + "' has a pixel outside [0, 1]");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw FormatError("dataset '" + name + "' has label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
}

template <typename T>
Tensor<T> DatasetSplit::images(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw UsageError("bad example range");
  const std::size_t per = example_numel();
  std::vector<T> v(pixels.begin() + static_cast<std::ptrdiff_t>(begin * per),
                   pixels.begin() + static_cast<std::ptrdiff_t>(end * per));
  Shape shape{end - begin};
  shape.insert(shape.end(), example_shape.begin(), example_shape.end());
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> DatasetSplit::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw UsageError("empty gather");
  const std::size_t per = example_numel();
  std::vector<T> v;
  v.reserve(indices.size() * per);
  for (auto i : indices) {
    if (i >= size()) throw UsageError("example index out of range");
    v.insert(v.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * per),
             pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), example_shape.begin(), example_shape.end());
  return Tensor<T>(std::move(shape), std::move(v));
}

std::vector<int> DatasetSplit::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

template Tensor<float> DatasetSplit::images<float>(std::size_t, std::size_t) const;
template Tensor<double> DatasetSplit::images<double>(std::size_t, std::size_t) const;
template Tensor<float> DatasetSplit::gather<float>(std::span<const std::size_t>) const;
template Tensor<double> DatasetSplit::gather<double>(std::span<const std::size_t>) const;

std::string sha256_hex(std::span<const std::byte> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("SFIT_DATA_ROOT"); root && *root) return std::filesystem::path(root) / path;
  return path;
}

DatasetSplit load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::size_t num_classes) {
  const auto img = read_file_bytes(resolve_data_path(images));
  const auto lab = read_file_bytes(resolve_data_path(labels));
  if (img.size() < 16) throw FormatError("IDX image file too short");
  if (lab.size() < 8) throw FormatError("IDX label file too short");
  if (read_be32(img, 0) != 0x00000803) throw FormatError("IDX image file has bad magic");
  if (read_be32(lab, 0) != 0x00000801) throw FormatError("IDX label file has bad magic");
  const std::size_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  if (read_be32(lab, 4) != n) throw FormatError("IDX image and label counts differ");
  if (n == 0 || rows == 0 || cols == 0) throw FormatError("IDX file declares an empty set");
  if (img.size() != 16 + n * rows * cols) throw FormatError("IDX image file length does not match its header");
  if (lab.size() != 8 + n) throw FormatError("IDX label file length does not match its header");

  DatasetSplit out;
  out.name = images.filename().string();
  out.example_shape = {1, rows, cols};
  out.num_classes = num_classes;
  out.pixels.resize(n * rows * cols);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<float>(std::to_integer<unsigned>(img[16 + i])) / 255.0f;
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = std::to_integer<int>(lab[8 + i]);
  std::vector<std::byte> both(img);
  both.insert(both.end(), lab.begin(), lab.end());
  out.checksum = sha256_hex(both);
  out.validate();
  return out;
}

DatasetSplit load_cifar10(const std::filesystem::path& path, std::size_t num_classes) {
  constexpr std::size_t kPlane = 32 * 32, kRecord = 1 + 3 * kPlane;
  const auto bytes = read_file_bytes(resolve_data_path(path));
  if (bytes.empty() || bytes.size() % kRecord != 0) {
    throw FormatError("CIFAR file length " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  }
  const std::size_t n = bytes.size() / kRecord;
  DatasetSplit out;
  out.name = path.filename().string();
  out.example_shape = {3, 32, 32};
  out.num_classes = num_classes;
  out.pixels.resize(n * 3 * kPlane);
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t base = r * kRecord;
    const int label = std::to_integer<int>(bytes[base]);
    if (static_cast<std::size_t>(label) >= num_classes) {
      throw FormatError("record " + std::to_string(r) + " has label " + std::to_string(label));
    }
    out.labels[r] = label;
    for (std::size_t i = 0; i < 3 * kPlane; ++i) {
      out.pixels[r * 3 * kPlane + i] = static_cast<float>(std::to_integer<unsigned>(bytes[base + 1 + i])) / 255.0f;
    }
  }
  out.checksum = sha256_hex(bytes);
  return out;
}

DatasetSplit concat(std::span<const DatasetSplit> parts, std::string name) {
  if (parts.empty()) throw UsageError("concat of nothing");
  DatasetSplit out;
  out.name = std::move(name);
  out.example_shape = parts[0].example_shape;
  out.num_classes = parts[0].num_classes;
  for (const auto& p : parts) {
    if (p.example_shape != out.example_shape || p.num_classes != out.num_classes) {
      throw UsageError("concat: splits disagree on shape or class count");
    }
    out.pixels.insert(out.pixels.end(), p.pixels.begin(), p.pixels.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.checksum = content_checksum(out);
  return out;
}

DatasetSplit subsample(const DatasetSplit& split, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > split.size()) throw UsageError("subsample size must be in [1, " + std::to_string(split.size()) + "]");
  std::vector<std::size_t> idx(split.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n slots are the sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> dist(i, idx.size() - 1);
    std::swap(idx[i], idx[dist(rng)]);
  }
  idx.resize(n);
  return pick(split, idx, split.name + "[subsample " + std::to_string(n) + "]");
}

DatasetSplit slice(const DatasetSplit& split, std::size_t begin, std::size_t end) {
  if (begin >= end || end > split.size()) throw UsageError("bad slice range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return pick(split, idx, split.name + "[" + std::to_string(begin) + ":" + std::to_string(end) + "]");
}

DatasetSplit make_blobs(std::size_t n, std::size_t num_classes, std::size_t dim, std::uint64_t seed,
                        BlobOptions options) {
  if (num_classes < 2) throw ParameterError("make_blobs needs at least two classes");
  if (n < num_classes) throw ParameterError("make_blobs needs n >= K");
  if (dim == 0) throw ParameterError("make_blobs needs dim >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);

  const bool distinct_possible = dim >= 63 || (std::uint64_t{1} << dim) >= num_classes;
  std::set<std::vector<bool>> used;
  std::vector<std::vector<double>> centers;
  while (centers.size() < num_classes) {
    std::vector<bool> pattern(dim);
    for (std::size_t d = 0; d < dim; ++d) pattern[d] = coin(rng);
    if (distinct_possible && !used.insert(pattern).second) continue;
    std::vector<double> c(dim);
    for (std::size_t d = 0; d < dim; ++d) c[d] = 0.5 + 0.5 * options.spread * (pattern[d] ? 1.0 : -1.0);
    centers.push_back(std::move(c));
  }

  DatasetSplit out;
  out.name = "blobs(n=" + std::to_string(n) + ",K=" + std::to_string(num_classes) + ",dim=" + std::to_string(dim) +
             ",seed=" + std::to_string(seed) + ")";
  out.example_shape = {dim};
  out.num_classes = num_classes;
  out.pixels.resize(n * dim);
  out.labels.resize(n);
  std::normal_distribution<double> noise(0.0, options.noise);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = i % num_classes;
    out.labels[i] = static_cast<int>(label);
    for (std::size_t d = 0; d < dim; ++d) {
      out.pixels[i * dim + d] = static_cast<float>(std::clamp(centers[label][d] + noise(rng), 0.0, 1.0));
    }
  }
  out.checksum = content_checksum(out);
  return out;
}

}  // namespace sfit
