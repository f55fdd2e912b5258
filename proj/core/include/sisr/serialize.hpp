#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sisr/tensor.hpp"

// "SISR" named-tensor container shared by checkpoints, images and saliency
// exports. Little-endian layout:
//
//   magic "SISR" | version u32 | count u32
//   per tensor: name_len u16 | name (UTF-8) | rank u8 | dims u32 x rank |
//               payload f64 x prod(dims)
//   optional trailer: json_len u32 | UTF-8 JSON
namespace sisr::io {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

struct TensorBundle {
  std::vector<NamedTensor> tensors;
  // Empty when the file carries no trailer.
  std::string metadata_json;

  // Throws IoError when absent.
  const ad::Tensor& get(std::string_view name) const;
  const ad::Tensor* find(std::string_view name) const;
};

std::string encode_bundle(const TensorBundle& bundle);
TensorBundle decode_bundle(std::string_view bytes);

void write_bundle(const std::filesystem::path& path, const TensorBundle& bundle);
TensorBundle read_bundle(const std::filesystem::path& path);

// Whole-file helpers used by the other on-disk formats.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace sisr::io
