#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fairvit/errors.hpp"
#include "fairvit/image.hpp"
#include "fairvit/masking.hpp"
#include "fairvit/rng.hpp"

namespace fairvit {

struct SampleRecord {
  std::string id;  // image file name
  int y = 0;
  int s = 0;
  std::optional<PartIndex> part;
};

// CelebA list_attr layout: record count, attribute names, then
// `<file> ±1 ±1 ...` rows. Values map -1 -> 0, +1 -> 1.
std::vector<SampleRecord> parse_attributes(std::istream& in, const std::string& target_attr,
                                           const std::string& sensitive_attr);
std::vector<SampleRecord> parse_attributes(const std::filesystem::path& path, const std::string& target_attr,
                                           const std::string& sensitive_attr);

struct GroupAssignment {
  std::size_t groups = 0;
  std::uint64_t seed = 0;
  std::vector<PartIndex> parts;                        // aligned with the input records
  std::unordered_map<std::string, PartIndex> by_id;
  std::vector<std::size_t> counts;                     // counts[g - 1]
};

// Each sensitive group is shuffled and dealt round-robin into its G/2 parts:
// s=0 into 1..G/2, s=1 into G/2+1..G.
GroupAssignment split_groups(std::span<const SampleRecord> records, std::size_t groups, std::uint64_t seed);

void apply_assignment(std::span<SampleRecord> records, const GroupAssignment& assignment);

// `part` lines (id and part index) with a header comment.
std::string assignment_to_text(std::span<const SampleRecord> records, const GroupAssignment& assignment);

/// Seeded shuffle then prefix split: ceil(n * ratio) go to train.
template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> train_val_split(std::span<const Item> items, double ratio,
                                                                std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed, "train-val-split");
  rng.shuffle(std::span<std::size_t>(order));
  // Guard against 100 * 0.9 landing a hair above 90.
  const auto n_train = static_cast<std::size_t>(std::ceil(static_cast<double>(items.size()) * ratio - 1e-9));
  std::pair<std::vector<Item>, std::vector<Item>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(items[order[i]]);
  }
  return out;
}

// Synthetic stand-in for CelebA: y = square (1) vs circle (0) glyph,
// s = light (1) vs dark (0) background, with P(s == y) = correlation.
struct SynthSample {
  Raster raster;
  int y = 0;
  int s = 0;
};

std::vector<SynthSample> synth_biased_dataset(std::size_t n, double correlation, std::size_t image_size,
                                              std::uint64_t seed);

inline constexpr const char* kSynthTargetAttr = "Square";
inline constexpr const char* kSynthSensitiveAttr = "Light";
inline constexpr const char* kAttributeFileName = "list_attr.txt";
inline constexpr const char* kImageDirName = "images";

// Writes <dir>/list_attr.txt and <dir>/images/NNNNNN.pgm.
void materialize_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples);

struct LabeledImage {
  std::string id;
  Image image;
  int y = 0;
  int s = 0;
};

// Reads <dir>/list_attr.txt and the images it names from <dir>/images.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir, const std::string& target_attr,
                                       const std::string& sensitive_attr);

std::vector<LabeledImage> to_labeled(std::span<const SynthSample> samples);

}  // namespace fairvit
