#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fairvit {

// Planar channels x height x width, values in [0, 1].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
};

// 8-bit interleaved raster as stored on disk (PGM P5 / PPM P6, maxval 255).
struct Raster {
  std::size_t channels = 1;  // 1 (PGM) or 3 (PPM)
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bytes;
};

Raster read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Raster& raster);

Image to_image(const Raster& raster);
Image load_image(const std::filesystem::path& path);

}  // namespace fairvit
