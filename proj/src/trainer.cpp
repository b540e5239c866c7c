#include "fairvit/trainer.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "fairvit/ops.hpp"
#include "fairvit/rng.hpp"

namespace fairvit {

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  if (groups < 2 || groups % 2 != 0) throw ConfigError("groups must be even and at least 2");
  if (k < 2) throw ConfigError("k must be at least 2");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must lie in (0, 1)");
  model.validate();
}

TrainData prepare_training_data(std::span<const LabeledImage> data, const TrainConfig& cfg) {
  auto [train, val] = train_val_split(data, cfg.train_ratio, derive_seed(cfg.seed, "split"));
  std::vector<SampleRecord> records;
  records.reserve(train.size());
  for (const auto& item : train) records.push_back(SampleRecord{item.id, item.y, item.s, std::nullopt});
  const auto assignment = split_groups(records, cfg.groups, derive_seed(cfg.seed, "split-groups"));

  TrainData out;
  out.train.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    out.train.push_back(TrainSample{std::move(train[i].image), train[i].y, assignment.parts[i]});
  }
  for (auto& item : val) {
    out.val_images.push_back(std::move(item.image));
    out.val_labels.push_back(item.y);
  }
  return out;
}

std::string EpochStats::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch=" << epoch << " l_ce=" << mean_ce << " l_dist=";
  if (mean_dist) {
    os << *mean_dist;
  } else {
    os << "none";
  }
  os << " l_total=" << total << " omega=" << plane.omega << " beta=" << plane.beta
     << " fitted=" << (plane.fitted ? 1 : 0) << " val_acc=" << val_accuracy;
  return os.str();
}

TrainingState::TrainingState(const TrainConfig& cfg)
    : TrainingState(VisionTransformer<float>(cfg.model, derive_seed(cfg.seed, "init")),
                    MaskBank<float>::init(cfg.model, cfg.groups)) {}

TrainingState::TrainingState(VisionTransformer<float> m, MaskBank<float> b)
    : model(std::move(m)),
      bank(std::move(b)),
      optimizer(model.params().tensors()),
      bank_optimizer(bank),
      bank_grads(bank) {}

EpochStats train_epoch(TrainingState& state, std::span<const TrainSample> train_set, const Hyperplane& plane,
                       const TrainConfig& cfg, std::size_t epoch) {
  if (train_set.empty()) throw ContractError("training set is empty");
  const bool use_dist = epoch > 0 && plane.fitted;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed, "shuffle-epoch-" + std::to_string(epoch));
  rng.shuffle(std::span<std::size_t>(order));

  double sum_ce = 0.0, sum_dist = 0.0, sum_total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const float inv_batch = 1.0f / static_cast<float>(end - start);
    state.optimizer.zero_grad();
    state.bank_grads.clear();
    for (std::size_t n = start; n < end; ++n) {
      const auto& sample = train_set[order[n]];
      const auto trace = state.model.forward_trace(sample.image, &state.bank);
      const auto label = static_cast<std::size_t>(sample.y);
      const auto ce = cross_entropy(trace.scores, label);
      Tensor<float> loss = ce;
      double dist_value = 0.0;
      if (use_dist) {
        const auto dist = distance_loss(trace.scores, label, cfg.k, plane, cfg.gamma);
        dist_value = dist.item();
        loss = add(ce, scale(dist, static_cast<float>(cfg.alpha)));
      }
      const double total = loss.item();
      if (!std::isfinite(total)) {
        throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      sum_ce += ce.item();
      sum_dist += dist_value;
      sum_total += total;
      backward(scale(loss, inv_batch));
      if (!cfg.freeze_bank) route_bank_gradients(trace, state.bank, sample.part, state.bank_grads);
    }
    state.optimizer.step(cfg.lr);
    if (!cfg.freeze_bank) state.bank_optimizer.apply_updates(state.bank, state.bank_grads, cfg.lr);
  }

  const double n = static_cast<double>(train_set.size());
  EpochStats stats;
  stats.epoch = epoch;
  stats.mean_ce = sum_ce / n;
  if (use_dist) stats.mean_dist = sum_dist / n;
  stats.total = sum_total / n;
  return stats;
}

ValidationResult validate(const VisionTransformer<float>& model, const MaskBank<float>& bank,
                          std::span<const Image> images, std::span<const int> labels, std::size_t k) {
  ValidationResult out;
  out.points = collect_points(model, &bank, images, labels, k);
  const auto predicted = predict_labels(model, &bank, images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == labels[i];
  out.accuracy = static_cast<double>(hits) / static_cast<double>(predicted.size());
  return out;
}

FitResult fit(const TrainData& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainingState state(cfg);
  Hyperplane plane;
  std::vector<EpochStats> history;
  double loss = std::numeric_limits<double>::infinity();
  std::size_t epoch = 0;
  while (epoch < cfg.epochs && loss > cfg.threshold) {
    auto stats = train_epoch(state, data.train, plane, cfg, epoch);
    loss = stats.total;
    const auto val = validate(state.model, state.bank, data.val_images, data.val_labels, cfg.k);
    plane = fit_hyperplane(val.points, plane);
    if (plane.fitted && plane.omega >= 0.0) {
      std::cerr << "warning: epoch " << epoch << " fitted omega=" << plane.omega << " is not negative\n";
    }
    stats.plane = plane;
    stats.val_accuracy = val.accuracy;
    history.push_back(stats);
    if (on_epoch) on_epoch(stats, state.model, state.bank);
    ++epoch;
  }
  return FitResult{std::move(state.model), std::move(state.bank), std::move(history)};
}

template <typename T>
std::vector<int> predict_labels(const VisionTransformer<T>& model, const MaskBank<T>* bank,
                                std::span<const Image> images) {
  NoGradGuard no_grad;
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& image : images) {
    const auto scores = model.forward(image, bank);
    out.push_back(static_cast<int>(argmax_label(scores.data())));
  }
  return out;
}

FairnessReport evaluate_fairness(const VisionTransformer<float>& model, const MaskBank<float>& bank,
                                 std::span<const LabeledImage> test_set) {
  std::vector<Image> images;
  images.reserve(test_set.size());
  for (const auto& item : test_set) images.push_back(item.image);
  const auto predicted = predict_labels(model, &bank, images);
  std::vector<EvalRecord> records;
  records.reserve(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    records.push_back(EvalRecord{predicted[i], test_set[i].y, test_set[i].s});
  }
  return FairnessReport::from_records(records);
}

template std::vector<int> predict_labels(const VisionTransformer<float>&, const MaskBank<float>*,
                                         std::span<const Image>);
template std::vector<int> predict_labels(const VisionTransformer<double>&, const MaskBank<double>*,
                                         std::span<const Image>);

}  // namespace fairvit
