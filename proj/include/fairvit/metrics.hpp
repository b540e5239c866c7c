#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

namespace fairvit {

struct EvalRecord {
  int y_pred = 0;
  int y_true = 0;
  int s = 0;
};

// counts[s][y_true][y_pred]
using ConfusionCounts = std::array<std::array<std::array<std::size_t, 2>, 2>, 2>;

ConfusionCounts count_confusion(std::span<const EvalRecord> records);

double balanced_accuracy(std::span<const EvalRecord> records);
double demographic_parity(std::span<const EvalRecord> records);
double equalized_opportunity(std::span<const EvalRecord> records);

double accuracy(const ConfusionCounts& c);
double balanced_accuracy(const ConfusionCounts& c);
double demographic_parity(const ConfusionCounts& c);
double equalized_opportunity(const ConfusionCounts& c);

struct FairnessReport {
  double accuracy = 0.0;
  double ba = 0.0;
  double dp = 0.0;
  double eo = 0.0;
  ConfusionCounts counts{};

  static FairnessReport from_counts(const ConfusionCounts& c);
  static FairnessReport from_records(std::span<const EvalRecord> records);

  // acc, ba, dp, eo, then n_s{0|1}_y{0|1}_p{0|1}, one `key=value` per line.
  std::string to_text() const;
};

}  // namespace fairvit
