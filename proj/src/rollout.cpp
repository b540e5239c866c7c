#include "fairvit/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fairvit/ops.hpp"

namespace fairvit {
namespace {

SquareMatrix multiply(const SquareMatrix& a, const SquareMatrix& b) {
  const std::size_t n = a.n;
  SquareMatrix c{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double v = a.values[i * n + k];
      for (std::size_t j = 0; j < n; ++j) c.values[i * n + j] += v * b.values[k * n + j];
    }
  }
  return c;
}

template <typename T>
SquareMatrix to_square(std::span<const T> values, std::size_t n) {
  return SquareMatrix{n, std::vector<double>(values.begin(), values.end())};
}

}  // namespace

RolloutResult rollout_from_maps(const AttentionMaps& maps, std::size_t grid, std::size_t patch_size) {
  if (maps.probs.empty() || maps.probs.size() != maps.grads.size()) {
    throw ContractError("rollout needs matching attention and gradient maps for at least one layer");
  }
  const std::size_t n = maps.probs.front().front().n;
  if (n != grid * grid + 1) throw ShapeError("attention maps do not match the patch grid");

  RolloutResult out;
  out.grid = grid;
  out.patch_size = patch_size;
  bool any_signal = false;
  for (std::size_t l = 0; l < maps.probs.size(); ++l) {
    const auto& heads = maps.probs[l];
    if (heads.empty() || heads.size() != maps.grads[l].size()) throw ContractError("head count mismatch");
    SquareMatrix layer{n, std::vector<double>(n * n, 0.0)};
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const auto& a = heads[h];
      const auto& g = maps.grads[l][h];
      if (a.n != n || g.n != n) throw ShapeError("attention map size mismatch");
      for (std::size_t k = 0; k < n * n; ++k) layer.values[k] += a.values[k] * g.values[k];
    }
    for (auto& v : layer.values) v = std::max(0.0, v / static_cast<double>(heads.size()));
    for (std::size_t r = 0; r < n; ++r) {
      double* rowp = layer.values.data() + r * n;
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) total += rowp[c];
      if (total > 0.0) {
        any_signal = true;
        for (std::size_t c = 0; c < n; ++c) rowp[c] /= total;
      } else {
        std::fill(rowp, rowp + n, 1.0 / static_cast<double>(n));
      }
    }
    out.rollout.push_back(out.rollout.empty() ? layer : multiply(layer, out.rollout.back()));
    out.layer_maps.push_back(std::move(layer));
  }
  out.heat.assign(n - 1, 0.0);
  if (any_signal) {
    const auto& last = out.rollout.back();
    for (std::size_t i = 0; i + 1 < n; ++i) out.heat[i] = last.at(0, i + 1);
  }
  return out;
}

template <typename T>
RolloutResult gradient_attention_rollout(const VisionTransformer<T>& model, const MaskBank<T>& bank,
                                         const Image& image, std::size_t target_label) {
  const auto& cfg = model.config();
  if (target_label >= cfg.num_classes) {
    throw ContractError("target label " + std::to_string(target_label) + " outside 0.." +
                        std::to_string(cfg.num_classes - 1));
  }
  // Work on a private copy so parameter grads of the caller stay untouched.
  const auto local = model.clone();
  const auto trace = local.forward_trace(image, &bank);
  backward(element(trace.scores, target_label));

  const std::size_t n = cfg.num_tokens();
  AttentionMaps maps;
  for (const auto& layer : trace.heads) {
    maps.probs.emplace_back();
    maps.grads.emplace_back();
    for (const auto& head : layer) {
      maps.probs.back().push_back(to_square(head.probs.data(), n));
      if (head.probs.has_grad()) {
        maps.grads.back().push_back(to_square(head.probs.grad(), n));
      } else {
        maps.grads.back().push_back(SquareMatrix{n, std::vector<double>(n * n, 0.0)});
      }
    }
  }
  return rollout_from_maps(maps, cfg.grid(), cfg.patch_size);
}

std::vector<std::uint8_t> heat_levels(std::span<const double> heat) {
  std::vector<std::uint8_t> out(heat.size(), 128);
  if (heat.empty()) return out;
  const auto [lo, hi] = std::minmax_element(heat.begin(), heat.end());
  if (!(*hi > *lo)) return out;
  for (std::size_t i = 0; i < heat.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (heat[i] - *lo) / (*hi - *lo)));
  }
  return out;
}

Raster render_heat_raster(const RolloutResult& result) {
  if (result.heat.size() != result.grid * result.grid) throw ShapeError("heat does not cover the patch grid");
  const std::size_t side = result.grid * result.patch_size;
  const auto levels = heat_levels(result.heat);
  Raster r{1, side, side, std::vector<std::uint8_t>(side * side)};
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      r.bytes[y * side + x] = levels[(y / result.patch_size) * result.grid + x / result.patch_size];
    }
  }
  return r;
}

void render_heatmap(const RolloutResult& result, const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv.precision(17);
  csv << "patch,heat\n";
  for (std::size_t i = 0; i < result.heat.size(); ++i) csv << i << ',' << result.heat[i] << '\n';
  auto pgm_path = stem;
  pgm_path += ".pgm";
  write_pnm(pgm_path, render_heat_raster(result));
}

template RolloutResult gradient_attention_rollout(const VisionTransformer<float>&, const MaskBank<float>&,
                                                  const Image&, std::size_t);
template RolloutResult gradient_attention_rollout(const VisionTransformer<double>&, const MaskBank<double>&,
                                                  const Image&, std::size_t);

}  // namespace fairvit
