#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fairvit/image.hpp"
#include "fairvit/model.hpp"
#include "fairvit/tensor.hpp"

namespace fairvit {

// (ŷ, ŷ_k, z) of one validation sample, all from raw scores.
struct ScorePoint {
  double y_hat = 0.0;
  double y_hat_k = 0.0;
  int z = 0;  // 1 iff the target attains the maximum score
};

// Boundary ŷ + ω·ŷ_k + β = 0; the coefficient of ŷ is fixed at 1.
struct Hyperplane {
  double omega = 0.0;
  double beta = 0.0;
  bool fitted = false;
};

struct HyperplaneFitSettings {
  double omega_init = -1.0;
  double beta_init = 0.0;
  double learning_rate = 0.1;
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
};

// Indices of the k highest scores (ties to the lower index) with `target`
// removed if present.
std::vector<std::size_t> topk_without_target(std::span<const double> scores, std::size_t target, std::size_t k);

ScorePoint score_point(std::span<const double> scores, std::size_t target, std::size_t k);

template <typename T>
std::vector<ScorePoint> collect_points(const VisionTransformer<T>& model, const MaskBank<T>* bank,
                                       std::span<const Image> images, std::span<const int> labels, std::size_t k);

// Logistic fit of z ~ sigmoid(ŷ + ω·ŷ_k + β) by full-batch gradient descent.
// Points with a single z class leave `previous` untouched.
Hyperplane fit_hyperplane(std::span<const ScorePoint> points, const Hyperplane& previous = {},
                          const HyperplaneFitSettings& settings = {});

// Fraction of points on the side the plane predicts (decision >= 0 <=> z = 1).
double hyperplane_accuracy(std::span<const ScorePoint> points, const Hyperplane& plane);

double signed_decision(double y_hat, double y_hat_k, const Hyperplane& plane);

// Φ = |ŷ + ω·ŷ_k + β| / sqrt(1 + ω²)
double distance(double y_hat, double y_hat_k, const Hyperplane& plane);

inline constexpr double kDistanceLossFloor = -2.0;

// -γ·Φ on the non-negative side, +Φ otherwise, floored at -2 per sample.
double distance_loss(double y_hat, double y_hat_k, const Hyperplane& plane, double gamma);

// d distance_loss / d(ŷ, ŷ_k); zero at the boundary and on the floor.
std::pair<double, double> distance_loss_gradient(double y_hat, double y_hat_k, const Hyperplane& plane,
                                                 double gamma);

double total_loss(double l_ce, double mean_l_dist, double alpha);

// Differentiable per-sample distance loss on a raw score vector. The plane is
// a constant: nothing flows into ω or β.
template <typename T>
Tensor<T> distance_loss(const Tensor<T>& scores, std::size_t target, std::size_t k, const Hyperplane& plane,
                        double gamma);

}  // namespace fairvit
