#include "fairvit/distance_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairvit {
namespace {

void require_fitted(const Hyperplane& plane) {
  if (!plane.fitted) throw ContractError("hyperplane has not been fitted");
}

void require_gamma(double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<std::size_t> topk_without_target(std::span<const double> scores, std::size_t target, std::size_t k) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (target >= scores.size()) throw ContractError("target label out of range");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  std::erase(idx, target);
  return idx;
}

ScorePoint score_point(std::span<const double> scores, std::size_t target, std::size_t k) {
  const auto others = topk_without_target(scores, target, k);
  ScorePoint p;
  p.y_hat = scores[target];
  for (auto i : others) p.y_hat_k += scores[i];
  p.z = scores[target] == *std::max_element(scores.begin(), scores.end()) ? 1 : 0;
  return p;
}

template <typename T>
std::vector<ScorePoint> collect_points(const VisionTransformer<T>& model, const MaskBank<T>* bank,
                                       std::span<const Image> images, std::span<const int> labels, std::size_t k) {
  if (images.empty()) throw ContractError("validation set is empty");
  if (images.size() != labels.size()) throw ContractError("images and labels differ in length");
  NoGradGuard no_grad;
  std::vector<ScorePoint> out;
  out.reserve(images.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto scores = model.forward(images[n], bank);
    std::vector<double> s(scores.data().begin(), scores.data().end());
    out.push_back(score_point(s, static_cast<std::size_t>(labels[n]), k));
  }
  return out;
}

Hyperplane fit_hyperplane(std::span<const ScorePoint> points, const Hyperplane& previous,
                          const HyperplaneFitSettings& settings) {
  const auto positives = std::count_if(points.begin(), points.end(), [](const ScorePoint& p) { return p.z == 1; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(points.size())) return previous;

  double omega = settings.omega_init;
  double beta = settings.beta_init;
  const double n = static_cast<double>(points.size());
  for (int it = 0; it < settings.max_iterations; ++it) {
    double g_omega = 0.0, g_beta = 0.0;
    for (const auto& p : points) {
      const double r = sigmoid(p.y_hat + omega * p.y_hat_k + beta) - p.z;
      g_omega += r * p.y_hat_k;
      g_beta += r;
    }
    g_omega /= n;
    g_beta /= n;
    if (std::hypot(g_omega, g_beta) < settings.gradient_tolerance) break;
    omega -= settings.learning_rate * g_omega;
    beta -= settings.learning_rate * g_beta;
  }
  if (!std::isfinite(omega) || !std::isfinite(beta)) return previous;
  return Hyperplane{omega, beta, true};
}

double hyperplane_accuracy(std::span<const ScorePoint> points, const Hyperplane& plane) {
  if (points.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : points) {
    const int predicted = signed_decision(p.y_hat, p.y_hat_k, plane) >= 0.0 ? 1 : 0;
    hits += predicted == p.z;
  }
  return static_cast<double>(hits) / static_cast<double>(points.size());
}

double signed_decision(double y_hat, double y_hat_k, const Hyperplane& plane) {
  return y_hat + plane.omega * y_hat_k + plane.beta;
}

double distance(double y_hat, double y_hat_k, const Hyperplane& plane) {
  require_fitted(plane);
  return std::abs(signed_decision(y_hat, y_hat_k, plane)) / std::sqrt(1.0 + plane.omega * plane.omega);
}

double distance_loss(double y_hat, double y_hat_k, const Hyperplane& plane, double gamma) {
  require_gamma(gamma);
  const double phi = distance(y_hat, y_hat_k, plane);
  const double raw = signed_decision(y_hat, y_hat_k, plane) >= 0.0 ? -gamma * phi : phi;
  return std::max(raw, kDistanceLossFloor);
}

std::pair<double, double> distance_loss_gradient(double y_hat, double y_hat_k, const Hyperplane& plane,
                                                 double gamma) {
  require_gamma(gamma);
  require_fitted(plane);
  const double u = signed_decision(y_hat, y_hat_k, plane);
  const double norm = std::sqrt(1.0 + plane.omega * plane.omega);
  double du = 0.0;
  if (u > 0.0) {
    if (-gamma * u / norm > kDistanceLossFloor) du = -gamma / norm;
  } else if (u < 0.0) {
    du = -1.0 / norm;  // Φ = -u / norm on this side
  }
  return {du, du * plane.omega};
}

double total_loss(double l_ce, double mean_l_dist, double alpha) { return l_ce + alpha * mean_l_dist; }

template <typename T>
Tensor<T> distance_loss(const Tensor<T>& scores, std::size_t target, std::size_t k, const Hyperplane& plane,
                        double gamma) {
  require_gamma(gamma);
  require_fitted(plane);
  const std::vector<double> s(scores.data().begin(), scores.data().end());
  const auto others = topk_without_target(s, target, k);
  double y_hat_k = 0.0;
  for (auto i : others) y_hat_k += s[i];
  const double value = distance_loss(s[target], y_hat_k, plane, gamma);
  const auto [d_yhat, d_yhat_k] = distance_loss_gradient(s[target], y_hat_k, plane, gamma);
  return Tensor<T>::record({1}, {static_cast<T>(value)}, {scores}, "distance_loss",
                           [scores, target, others, d_yhat, d_yhat_k](const auto& o) {
                             auto& g = scores.impl()->grad;
                             g[target] += o.grad[0] * static_cast<T>(d_yhat);
                             for (auto i : others) g[i] += o.grad[0] * static_cast<T>(d_yhat_k);
                           });
}

template std::vector<ScorePoint> collect_points(const VisionTransformer<float>&, const MaskBank<float>*,
                                                std::span<const Image>, std::span<const int>, std::size_t);
template std::vector<ScorePoint> collect_points(const VisionTransformer<double>&, const MaskBank<double>*,
                                                std::span<const Image>, std::span<const int>, std::size_t);
template Tensor<float> distance_loss(const Tensor<float>&, std::size_t, std::size_t, const Hyperplane&, double);
template Tensor<double> distance_loss(const Tensor<double>&, std::size_t, std::size_t, const Hyperplane&, double);

}  // namespace fairvit
