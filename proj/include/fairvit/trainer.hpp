#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairvit/data.hpp"
#include "fairvit/distance_loss.hpp"
#include "fairvit/masking.hpp"
#include "fairvit/metrics.hpp"
#include "fairvit/model.hpp"
#include "fairvit/optimizer.hpp"

namespace fairvit {

struct TrainConfig {
  double alpha = 0.01;
  double gamma = 0.5;
  std::size_t groups = 10;
  std::size_t k = 2;
  std::size_t epochs = 20;
  double threshold = 1e-3;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double train_ratio = 0.9;
  // Keeps the bank at its initial values (static-mask ablation).
  bool freeze_bank = false;
  ModelConfig model;

  void validate() const;
};

// A training sample as the trainer sees it: the sensitive label is gone,
// only the part it was routed to remains.
struct TrainSample {
  Image image;
  int y = 0;
  PartIndex part;
};

struct TrainData {
  std::vector<TrainSample> train;
  std::vector<Image> val_images;
  std::vector<int> val_labels;
};

// Train/validation split, then part assignment on the training side.
TrainData prepare_training_data(std::span<const LabeledImage> data, const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_ce = 0.0;
  std::optional<double> mean_dist;  // absent while no hyperplane exists
  double total = 0.0;
  Hyperplane plane;  // refit after this epoch's validation
  double val_accuracy = 0.0;

  // One line of space-separated key=value pairs.
  std::string to_text() const;
};

struct TrainingState {
  VisionTransformer<float> model;
  MaskBank<float> bank;
  ParamOptimizer<float> optimizer;
  BankOptimizer<float> bank_optimizer;
  BankGradients<float> bank_grads;

  explicit TrainingState(const TrainConfig& cfg);
  TrainingState(VisionTransformer<float> model, MaskBank<float> bank);
};

EpochStats train_epoch(TrainingState& state, std::span<const TrainSample> train_set, const Hyperplane& plane,
                       const TrainConfig& cfg, std::size_t epoch);

struct ValidationResult {
  std::vector<ScorePoint> points;
  double accuracy = 0.0;
};

ValidationResult validate(const VisionTransformer<float>& model, const MaskBank<float>& bank,
                          std::span<const Image> images, std::span<const int> labels, std::size_t k);

struct FitResult {
  VisionTransformer<float> model;
  MaskBank<float> bank;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&, const VisionTransformer<float>&, const MaskBank<float>&)>;

FitResult fit(const TrainData& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Hard argmax predictions; images only.
template <typename T>
std::vector<int> predict_labels(const VisionTransformer<T>& model, const MaskBank<T>* bank,
                                std::span<const Image> images);

// Predictions first, sensitive labels joined in afterwards for the metrics.
FairnessReport evaluate_fairness(const VisionTransformer<float>& model, const MaskBank<float>& bank,
                                 std::span<const LabeledImage> test_set);

}  // namespace fairvit
