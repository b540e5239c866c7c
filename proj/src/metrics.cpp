#include "fairvit/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "fairvit/errors.hpp"

namespace fairvit {
namespace {

int binary(int v, const char* field) {
  if (v != 0 && v != 1) throw ContractError(std::string("record field ") + field + " must be 0 or 1");
  return v;
}

std::size_t stratum(const ConfusionCounts& c, int s, int y) { return c[s][y][0] + c[s][y][1]; }

// P(ŷ = 1 | s, y)
double positive_rate(const ConfusionCounts& c, int s, int y) {
  const auto n = stratum(c, s, y);
  if (n == 0) {
    throw UndefinedMetricError("empty stratum s=" + std::to_string(s) + ", y=" + std::to_string(y));
  }
  return static_cast<double>(c[s][y][1]) / static_cast<double>(n);
}

}  // namespace

ConfusionCounts count_confusion(std::span<const EvalRecord> records) {
  ConfusionCounts c{};
  for (const auto& r : records) ++c[binary(r.s, "s")][binary(r.y_true, "y_true")][binary(r.y_pred, "y_pred")];
  return c;
}

double accuracy(const ConfusionCounts& c) {
  std::size_t hits = 0, total = 0;
  for (int s = 0; s < 2; ++s) {
    for (int y = 0; y < 2; ++y) {
      hits += c[s][y][y];
      total += stratum(c, s, y);
    }
  }
  if (total == 0) throw UndefinedMetricError("no records");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double balanced_accuracy(const ConfusionCounts& c) {
  const double tpr0 = positive_rate(c, 0, 1);
  const double tnr0 = 1.0 - positive_rate(c, 0, 0);
  const double tpr1 = positive_rate(c, 1, 1);
  const double tnr1 = 1.0 - positive_rate(c, 1, 0);
  return (tpr0 + tnr0 + tpr1 + tnr1) / 4.0;
}

double demographic_parity(const ConfusionCounts& c) {
  double rate[2];
  for (int s = 0; s < 2; ++s) {
    const auto n = stratum(c, s, 0) + stratum(c, s, 1);
    if (n == 0) throw UndefinedMetricError("empty sensitive group s=" + std::to_string(s));
    rate[s] = static_cast<double>(c[s][0][1] + c[s][1][1]) / static_cast<double>(n);
  }
  return std::abs(rate[1] - rate[0]);
}

double equalized_opportunity(const ConfusionCounts& c) {
  return std::abs(positive_rate(c, 1, 1) - positive_rate(c, 0, 1));
}

double balanced_accuracy(std::span<const EvalRecord> records) { return balanced_accuracy(count_confusion(records)); }
double demographic_parity(std::span<const EvalRecord> records) {
  return demographic_parity(count_confusion(records));
}
double equalized_opportunity(std::span<const EvalRecord> records) {
  return equalized_opportunity(count_confusion(records));
}

FairnessReport FairnessReport::from_counts(const ConfusionCounts& c) {
  FairnessReport r;
  r.counts = c;
  r.accuracy = fairvit::accuracy(c);
  r.ba = balanced_accuracy(c);
  r.dp = demographic_parity(c);
  r.eo = equalized_opportunity(c);
  return r;
}

FairnessReport FairnessReport::from_records(std::span<const EvalRecord> records) {
  return from_counts(count_confusion(records));
}

std::string FairnessReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "acc=" << accuracy << '\n' << "ba=" << ba << '\n' << "dp=" << dp << '\n' << "eo=" << eo << '\n';
  for (int s = 0; s < 2; ++s) {
    for (int y = 0; y < 2; ++y) {
      for (int p = 0; p < 2; ++p) os << "n_s" << s << "_y" << y << "_p" << p << '=' << counts[s][y][p] << '\n';
    }
  }
  return os.str();
}

}  // namespace fairvit
