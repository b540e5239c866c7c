#include "fairvit/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "fairvit/errors.hpp"

namespace fairvit {
namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("truncated PNM header in " + path.string());
  return tok;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path) {
  const auto tok = header_token(in, path);
  try {
    std::size_t used = 0;
    const auto v = std::stoul(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad PNM header field '" + tok + "' in " + path.string());
  }
}

}  // namespace

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const auto magic = header_token(in, path);
  Raster r;
  if (magic == "P5") {
    r.channels = 1;
  } else if (magic == "P6") {
    r.channels = 3;
  } else {
    throw IoError("unsupported image format '" + magic + "' in " + path.string() + " (need P5 or P6)");
  }
  r.width = header_number(in, path);
  r.height = header_number(in, path);
  const auto maxval = header_number(in, path);
  if (maxval != 255) throw IoError("only maxval 255 is supported: " + path.string());
  if (r.width == 0 || r.height == 0) throw IoError("empty image " + path.string());
  r.bytes.resize(r.channels * r.width * r.height);
  in.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.bytes.size())) {
    throw IoError("truncated pixel data in " + path.string());
  }
  return r;
}

void write_pnm(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw IoError("PNM supports 1 or 3 channels");
  if (raster.bytes.size() != raster.channels * raster.width * raster.height) {
    throw IoError("raster size does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (raster.channels == 1 ? "P5" : "P6") << '\n' << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.bytes.data()), static_cast<std::streamsize>(raster.bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Image to_image(const Raster& raster) {
  Image img{raster.channels, raster.height, raster.width, {}};
  img.pixels.resize(raster.bytes.size());
  for (std::size_t y = 0; y < raster.height; ++y) {
    for (std::size_t x = 0; x < raster.width; ++x) {
      for (std::size_t c = 0; c < raster.channels; ++c) {
        const auto byte = raster.bytes[(y * raster.width + x) * raster.channels + c];
        img.pixels[(c * raster.height + y) * raster.width + x] = static_cast<float>(byte) / 255.0f;
      }
    }
  }
  return img;
}

Image load_image(const std::filesystem::path& path) { return to_image(read_pnm(path)); }

}  // namespace fairvit
