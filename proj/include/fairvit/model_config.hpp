#pragma once

#include <cstddef>

namespace fairvit {

struct ModelConfig {
  std::size_t image_size = 32;  // square, pixels
  std::size_t channels = 1;
  std::size_t patch_size = 8;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t head_dim = 16;
  std::size_t ffn_hidden = 64;
  std::size_t num_classes = 2;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  // Patches plus the class token.
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t model_dim() const { return num_heads * head_dim; }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }

  // Throws ConfigError.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace fairvit
