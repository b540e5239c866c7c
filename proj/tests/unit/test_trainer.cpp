#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "fairvit/errors.hpp"
#include "fairvit/trainer.hpp"
#include "test_support.hpp"

using namespace fairvit;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.model = fvtest::toy_config();
  cfg.groups = 4;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 5;
  cfg.lr = 3e-3;
  return cfg;
}

TrainData small_data(const TrainConfig& cfg, std::size_t n = 80) {
  const auto samples = synth_biased_dataset(n, 0.8, cfg.model.image_size, cfg.seed + 1);
  const auto labeled = to_labeled(samples);
  return prepare_training_data(labeled, cfg);
}

bool same_bits(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].data.size() != b[i].data.size()) return false;
    if (std::memcmp(a[i].data.data(), b[i].data.data(), a[i].data.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  auto cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.groups = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.alpha = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("prepared data respects the split ratio and part purity") {
  const auto cfg = small_config();
  const auto samples = synth_biased_dataset(80, 0.8, 16, 6);
  const auto labeled = to_labeled(samples);
  const auto data = prepare_training_data(labeled, cfg);
  CHECK(data.train.size() == 72);
  CHECK(data.val_images.size() == 8);
  CHECK(data.val_labels.size() == 8);
  for (const auto& s : data.train) {
    CHECK(s.part.value >= 1);
    CHECK(s.part.value <= 4);
  }
}

TEST_CASE("epoch zero never evaluates the distance term") {
  const auto cfg = small_config();
  const auto data = small_data(cfg);
  TrainingState state(cfg);
  const Hyperplane fitted{-1.0, 0.0, true};
  const auto stats = train_epoch(state, data.train, fitted, cfg, 0);
  CHECK_FALSE(stats.mean_dist.has_value());
  CHECK(stats.total == stats.mean_ce);
  CHECK(stats.to_text().find("l_dist=none") != std::string::npos);
}

TEST_CASE("later epochs add alpha times the distance term") {
  auto cfg = small_config();
  cfg.alpha = 0.01;
  const auto data = small_data(cfg);
  TrainingState state(cfg);
  const Hyperplane fitted{-1.0, 0.0, true};
  const auto stats = train_epoch(state, data.train, fitted, cfg, 1);
  REQUIRE(stats.mean_dist.has_value());
  CHECK(stats.total == doctest::Approx(stats.mean_ce + 0.01 * *stats.mean_dist).epsilon(1e-6));

  // Without a fitted plane the term is skipped even after epoch 0.
  TrainingState fresh(cfg);
  CHECK_FALSE(train_epoch(fresh, data.train, Hyperplane{}, cfg, 1).mean_dist.has_value());
}

TEST_CASE("a single-part training set only moves that part") {
  const auto cfg = small_config();
  auto data = small_data(cfg);
  for (auto& s : data.train) s.part = PartIndex{2};
  TrainingState state(cfg);
  const auto before = state.bank.clone();
  train_epoch(state, data.train, Hyperplane{}, cfg, 0);
  for (std::size_t i = 1; i <= 4; ++i) {
    bool moved = state.bank.weight(PartIndex{i}) != before.weight(PartIndex{i});
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t h = 0; h < 2; ++h) {
        const auto a = state.bank.mask(l, h, PartIndex{i}).data();
        const auto b = before.mask(l, h, PartIndex{i}).data();
        moved = moved || !std::equal(a.begin(), a.end(), b.begin());
      }
    CHECK(moved == (i == 2));
  }
  CHECK(state.bank.within_bounds());
}

TEST_CASE("validation accuracy matches an argmax recount") {
  const auto cfg = small_config();
  const auto data = small_data(cfg, 120);
  const TrainingState state(cfg);
  const auto result = validate(state.model, state.bank, data.val_images, data.val_labels, 2);
  CHECK(result.points.size() == data.val_images.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.val_images.size(); ++i) {
    const auto scores = state.model.forward(data.val_images[i], &state.bank);
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.numel(); ++c)
      if (scores.at(c) > scores.at(best)) best = c;
    hits += static_cast<int>(best) == data.val_labels[i];
    CHECK(result.points[i].z == (static_cast<int>(best) == data.val_labels[i] ? 1 : 0));
  }
  CHECK(result.accuracy == static_cast<double>(hits) / data.val_images.size());
}

TEST_CASE("loop guard: huge threshold and E = 1 run one epoch") {
  auto cfg = small_config();
  const auto data = small_data(cfg);
  cfg.threshold = 1e9;
  CHECK(fit(data, cfg).history.size() == 1);

  cfg = small_config();
  cfg.epochs = 1;
  const auto one = fit(data, cfg);
  REQUIRE(one.history.size() == 1);
  CHECK_FALSE(one.history[0].mean_dist.has_value());
}

TEST_CASE("fit is bit-reproducible and reports every epoch") {
  const auto cfg = small_config();
  const auto data = small_data(cfg);
  std::size_t calls = 0;
  const auto a = fit(data, cfg, [&](const EpochStats&, const auto&, const auto&) { ++calls; });
  const auto b = fit(data, cfg);
  CHECK(calls == a.history.size());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].to_text() == b.history[i].to_text());
  CHECK(same_bits(checkpoint_tensors(a.model, a.bank), checkpoint_tensors(b.model, b.bank)));
  CHECK(a.bank.within_bounds());
}

TEST_CASE("alpha = 0 with a frozen bank is plain cross-entropy training") {
  auto cfg = small_config();
  cfg.alpha = 0.0;
  cfg.freeze_bank = true;
  cfg.epochs = 2;
  const auto data = small_data(cfg);
  const auto result = fit(data, cfg);
  const auto init = MaskBank<float>::init(cfg.model, cfg.groups);
  CHECK(same_bits(result.bank.to_named(), init.to_named()));
  for (const auto& img : data.val_images) {
    const auto masked = result.model.forward(img, &result.bank);
    const auto plain = result.model.forward(img, nullptr);
    CHECK(std::memcmp(masked.data().data(), plain.data().data(), 2 * sizeof(float)) == 0);
  }
}

TEST_CASE("a NaN loss aborts with the batch named") {
  const auto cfg = small_config();
  const auto data = small_data(cfg);
  TrainingState state(cfg);
  state.model.params().head_bias.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train_epoch(state, data.train, Hyperplane{}, cfg, 0);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}

TEST_CASE("fairness evaluation uses predictions only") {
  const auto cfg = small_config();
  const TrainingState state(cfg);
  const auto test = to_labeled(synth_biased_dataset(60, 0.5, 16, 99));
  const auto report = evaluate_fairness(state.model, state.bank, test);
  std::size_t total = 0;
  for (int s = 0; s < 2; ++s)
    for (int y = 0; y < 2; ++y)
      for (int p = 0; p < 2; ++p) total += report.counts[s][y][p];
  CHECK(total == 60);
  std::vector<Image> images;
  for (const auto& t : test) images.push_back(t.image);
  const auto preds = predict_labels(state.model, &state.bank, std::span<const Image>(images));
  std::vector<EvalRecord> rs;
  for (std::size_t i = 0; i < test.size(); ++i) rs.push_back({preds[i], test[i].y, test[i].s});
  CHECK(report.dp == demographic_parity(rs));
}
