#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sfit/model.hpp"
#include "sfit/optimizer.hpp"

// Checkpoint file layout, all integers little-endian:
//
//   "SFIT"                       magic, 4 bytes
//   u32 version                  kCheckpointVersion
//   u32 n, n bytes               architecture id ("middlecnn" | "tinymlp")
//   u32 K                        number of classes
//   u32 rank, rank x u32         per-example input shape
//   u32 n, n x u64               architecture hyperparameters
//   u64 iteration                training iteration counter
//   u8  has_optimizer, u64 step  Adam state marker and step counter
//   u32 count                    number of tensor records
//   count x record:
//     u32 n, n bytes             tensor name
//     u8  dtype                  1 = f32, 2 = f64
//     u32 rank, rank x u32       shape
//     raw little-endian values
//
// Records are the model state (parameters, then BN running statistics) in
// Model::state() order, followed by "adam.m/<name>" and "adam.v/<name>" per
// parameter when the optimizer is present.
namespace sfit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  Model<T> model;
  std::uint64_t iteration = 0;
  std::optional<AdamState<T>> optimizer;
};

template <typename T>
std::vector<std::byte> serialize_checkpoint(const Model<T>& model, std::uint64_t iteration = 0,
                                            const AdamState<T>* optimizer = nullptr);

template <typename T>
Checkpoint<T> parse_checkpoint(std::span<const std::byte> bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, std::uint64_t iteration = 0,
                     const AdamState<T>* optimizer = nullptr);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace sfit
