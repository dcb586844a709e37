#pragma once

// Checkpoint layout (all integers little-endian):
//   "TDK1"                 4 magic bytes
//   version                u32, currently 1
//   then, per parameter, until end of file:
//     name_length          u32
//     name                 name_length bytes of UTF-8
//     rank                 u32
//     extents              rank × u64
//     values               product(extents) × IEEE-754 binary64

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "todkat/numerics/params.hpp"

namespace todkat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const NamedArray&) const = default;
};

std::string encode_checkpoint(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);
/// Copies values from `path` into `store`. Every parameter in the store must be
/// present in the file with the same shape.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& store);

std::vector<NamedArray> to_arrays(const ParameterStore& store);

}  // namespace todkat
