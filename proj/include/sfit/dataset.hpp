#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sfit/tensor.hpp"

namespace sfit {

/// Labeled examples with pixels in [0, 1], stored as 32-bit floats.
struct DatasetSplit {
  std::string name;
  Shape example_shape;  // C x H x W for images, {D} for vectors
  std::vector<float> pixels;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string checksum;  // SHA-256 hex of the source bytes

  std::size_t size() const { return labels.size(); }
  std::size_t example_numel() const { return shape_numel(example_shape); }

  // Throws FormatError when a pixel leaves [0, 1] or a label is out of range.
  void validate() const;

  // Examples [begin, end) as a batch tensor.
  template <typename T>
  Tensor<T> images(std::size_t begin, std::size_t end) const;

  template <typename T>
  Tensor<T> gather(std::span<const std::size_t> indices) const;

  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

// IDX pair: images with magic 0x00000803, labels with magic 0x00000801.
DatasetSplit load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::size_t num_classes = 10);

// CIFAR-10 binary batch: 3073-byte records, label byte then 3x32x32 planes.
// The same layout with num_classes = 100 reads single-label CIFAR-100 files.
DatasetSplit load_cifar10(const std::filesystem::path& path, std::size_t num_classes = 10);

// Concatenates splits with identical example shape and class count.
DatasetSplit concat(std::span<const DatasetSplit> parts, std::string name);

// n examples drawn without replacement, in the order drawn.
DatasetSplit subsample(const DatasetSplit& split, std::size_t n, std::uint64_t seed);

// Examples [begin, end).
DatasetSplit slice(const DatasetSplit& split, std::size_t begin, std::size_t end);

struct BlobOptions {
  // Each center is 0.5 + spread/2 * s with s a random +-1 pattern, distinct
  // across classes whenever 2^dim >= K.
  double spread = 0.6;
  double noise = 0.06;  // per-coordinate standard deviation
};

// Gaussian clusters clipped to the unit box. Labels cycle 0..K-1 so every
// class count differs by at most one.
DatasetSplit make_blobs(std::size_t n, std::size_t num_classes, std::size_t dim, std::uint64_t seed,
                        BlobOptions options = {});

std::string sha256_hex(std::span<const std::byte> bytes);

// Relative paths are resolved against $SFIT_DATA_ROOT when it is set.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace sfit
