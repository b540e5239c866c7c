#include "fairvit/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fairvit {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

int attribute_value(const std::string& tok, std::size_t line) {
  if (tok == "1" || tok == "+1") return 1;
  if (tok == "-1") return 0;
  throw ParseError("attribute value '" + tok + "' is not +1/-1", line);
}

std::string image_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.pgm", index + 1);
  return buf;
}

}  // namespace

std::vector<SampleRecord> parse_attributes(std::istream& in, const std::string& target_attr,
                                           const std::string& sensitive_attr) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError("missing record count", line_no + 1);
  std::size_t declared = 0;
  {
    const auto toks = split_ws(line);
    try {
      std::size_t used = 0;
      if (toks.size() != 1) throw std::invalid_argument("count");
      declared = std::stoul(toks[0], &used);
      if (used != toks[0].size()) throw std::invalid_argument("count");
    } catch (const std::exception&) {
      throw ParseError("first line must be the record count", line_no);
    }
  }
  if (!next_line()) throw ParseError("missing attribute header", line_no + 1);
  const auto names = split_ws(line);
  auto column = [&](const std::string& attr) {
    const auto it = std::find(names.begin(), names.end(), attr);
    if (it == names.end()) throw ConfigError("attribute '" + attr + "' not present in header");
    return static_cast<std::size_t>(it - names.begin());
  };
  const std::size_t target_col = column(target_attr);
  const std::size_t sensitive_col = column(sensitive_attr);

  std::vector<SampleRecord> out;
  while (next_line()) {
    const auto toks = split_ws(line);
    if (toks.size() != names.size() + 1) {
      throw ParseError("expected " + std::to_string(names.size() + 1) + " fields, got " +
                           std::to_string(toks.size()),
                       line_no);
    }
    for (std::size_t i = 1; i < toks.size(); ++i) (void)attribute_value(toks[i], line_no);
    out.push_back(SampleRecord{toks[0], attribute_value(toks[1 + target_col], line_no),
                               attribute_value(toks[1 + sensitive_col], line_no), std::nullopt});
  }
  if (out.size() != declared) {
    throw ParseError("header declares " + std::to_string(declared) + " records but file has " +
                         std::to_string(out.size()),
                     line_no);
  }
  return out;
}

std::vector<SampleRecord> parse_attributes(const std::filesystem::path& path, const std::string& target_attr,
                                           const std::string& sensitive_attr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attribute file " + path.string());
  return parse_attributes(in, target_attr, sensitive_attr);
}

GroupAssignment split_groups(std::span<const SampleRecord> records, std::size_t groups, std::uint64_t seed) {
  if (groups < 2 || groups % 2 != 0) {
    throw ConfigError("part count G must be even and at least 2, got " + std::to_string(groups));
  }
  const std::size_t per_group = groups / 2;
  GroupAssignment a;
  a.groups = groups;
  a.seed = seed;
  a.parts.assign(records.size(), PartIndex{});
  a.counts.assign(groups, 0);

  for (int s = 0; s < 2; ++s) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].s == s) members.push_back(i);
    }
    if (members.size() < per_group) {
      throw ConfigError("sensitive group s=" + std::to_string(s) + " has " + std::to_string(members.size()) +
                        " samples, fewer than its " + std::to_string(per_group) + " parts");
    }
    Rng rng(seed, "split/s" + std::to_string(s));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < members.size(); ++k) {
      const PartIndex part{s * per_group + k % per_group + 1};
      a.parts[members[k]] = part;
      ++a.counts[part.value - 1];
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) a.by_id.emplace(records[i].id, a.parts[i]);
  return a;
}

void apply_assignment(std::span<SampleRecord> records, const GroupAssignment& assignment) {
  if (records.size() != assignment.parts.size()) throw ContractError("assignment was made for other records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].part) throw ContractError("record " + records[i].id + " already has a part");
    records[i].part = assignment.parts[i];
  }
}

std::string assignment_to_text(std::span<const SampleRecord> records, const GroupAssignment& assignment) {
  std::ostringstream os;
  os << "# groups=" << assignment.groups << " seed=" << assignment.seed << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) os << records[i].id << ' ' << assignment.parts[i].value << '\n';
  return os.str();
}

std::vector<SynthSample> synth_biased_dataset(std::size_t n, double correlation, std::size_t image_size,
                                              std::uint64_t seed) {
  if (!(correlation >= 0.0 && correlation <= 1.0)) throw ConfigError("correlation must lie in [0, 1]");
  if (image_size < 8) throw ConfigError("synthetic images need at least 8 pixels per side");
  Rng rng(seed, "synth");
  std::vector<SynthSample> out;
  out.reserve(n);
  const double size = static_cast<double>(image_size);
  for (std::size_t k = 0; k < n; ++k) {
    SynthSample sample;
    sample.y = rng.bernoulli(0.5) ? 1 : 0;
    sample.s = rng.bernoulli(correlation) ? sample.y : 1 - sample.y;

    // Adjacent background bands: the shortcut is easy but not free. The glyph is
    // always brighter than its background, so shape does not flip with s.
    const double background = sample.s == 1 ? rng.uniform(0.3, 0.45) : rng.uniform(0.15, 0.3);
    const double glyph = background + rng.uniform(0.3, 0.35);
    // Square side or circle diameter is 40-50% of the image; small centre jitter.
    const double half = size * rng.uniform(0.2, 0.25);
    const double cx = size / 2.0 + rng.uniform(-0.06, 0.06) * size;
    const double cy = size / 2.0 + rng.uniform(-0.06, 0.06) * size;

    sample.raster = Raster{1, image_size, image_size, std::vector<std::uint8_t>(image_size * image_size)};
    for (std::size_t y = 0; y < image_size; ++y) {
      for (std::size_t x = 0; x < image_size; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const bool inside = sample.y == 1 ? (std::abs(dx) <= half && std::abs(dy) <= half)
                                          : (dx * dx + dy * dy <= half * half);
        double v = (inside ? glyph : background) + 0.08 * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
        sample.raster.bytes[y * image_size + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

void materialize_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples) {
  std::filesystem::create_directories(dir / kImageDirName);
  std::ofstream attr(dir / kAttributeFileName, std::ios::trunc);
  if (!attr) throw IoError("cannot write " + (dir / kAttributeFileName).string());
  attr << samples.size() << '\n' << kSynthTargetAttr << ' ' << kSynthSensitiveAttr << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto name = image_name(i);
    write_pnm(dir / kImageDirName / name, samples[i].raster);
    attr << name << ' ' << (samples[i].y ? "1" : "-1") << ' ' << (samples[i].s ? "1" : "-1") << '\n';
  }
  if (!attr) throw IoError("write failed: " + (dir / kAttributeFileName).string());
}

std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir, const std::string& target_attr,
                                       const std::string& sensitive_attr) {
  const auto records = parse_attributes(dir / kAttributeFileName, target_attr, sensitive_attr);
  std::vector<LabeledImage> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(LabeledImage{r.id, load_image(dir / kImageDirName / r.id), r.y, r.s});
  return out;
}

std::vector<LabeledImage> to_labeled(std::span<const SynthSample> samples) {
  std::vector<LabeledImage> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(LabeledImage{image_name(i), to_image(samples[i].raster), samples[i].y, samples[i].s});
  }
  return out;
}

}  // namespace fairvit
