#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fairvit/image.hpp"
#include "fairvit/model.hpp"

namespace fairvit {

// Token x token matrix, row-major.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * n + c]; }
};

struct RolloutResult {
  std::vector<SquareMatrix> layer_maps;  // normalized per-layer matrices
  std::vector<SquareMatrix> rollout;     // accumulated products, one per layer
  std::vector<double> heat;              // row 0 of the last product, patch columns only
  std::size_t grid = 0;                  // patches per side
  std::size_t patch_size = 0;
};

// Per-layer, per-head attention probabilities and dŷ/dA of the same shape.
struct AttentionMaps {
  std::vector<std::vector<SquareMatrix>> probs;  // [layer][head]
  std::vector<std::vector<SquareMatrix>> grads;  // [layer][head]
};

/// Rollout from raw attention maps: each layer is reduced to the head mean
/// of A ⊙ dŷ/dA, negatives clamped to zero and rows normalized (an all-zero
/// row becomes uniform); the layers are chained R_N · ... · R_0.
///
/// If no layer carries any positive signal the heat is all zeros.
RolloutResult rollout_from_maps(const AttentionMaps& maps, std::size_t grid, std::size_t patch_size);

template <typename T>
RolloutResult gradient_attention_rollout(const VisionTransformer<T>& model, const MaskBank<T>& bank,
                                         const Image& image, std::size_t target_label);

// Gray levels per patch after min-max normalization (all-equal heat -> 128).
std::vector<std::uint8_t> heat_levels(std::span<const double> heat);

// image_size x image_size grayscale raster with each patch block filled.
Raster render_heat_raster(const RolloutResult& result);

// Writes <stem>.csv ("patch,heat") and <stem>.pgm.
void render_heatmap(const RolloutResult& result, const std::filesystem::path& stem);

}  // namespace fairvit
