#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fairvit/trainer.hpp"

namespace fairvit::cli {

enum ExitStatus : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

/// Flat `key = value` settings with '#' comments. Only known keys are
/// accepted; every key has a default so a run can be resolved without a file.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  TrainConfig train_config() const;

  // Sorted `key = value` lines.
  std::string resolved_text() const;

  static const std::vector<std::string>& keys();

 private:
  std::map<std::string, std::string> values_;
};

// Entry point behind the `fairvit` binary; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fairvit::cli
