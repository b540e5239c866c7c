#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fairvit/tensor.hpp"

namespace fairvit {

// FVIT v1 layout, all integers little-endian:
//   "FVIT" | u32 version | u32 count |
//   count x { u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 data[] }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape dims;
  std::vector<float> data;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Lookup by name; throws IoError when absent.
const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, const std::string& name);

template <typename T>
NamedTensor to_named(std::string name, const Tensor<T>& t) {
  NamedTensor out{std::move(name), t.dims(), {}};
  out.data.reserve(t.numel());
  for (auto v : t.data()) out.data.push_back(static_cast<float>(v));
  return out;
}

}  // namespace fairvit
