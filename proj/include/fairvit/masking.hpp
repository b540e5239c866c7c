#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fairvit/checkpoint.hpp"
#include "fairvit/model_config.hpp"
#include "fairvit/tensor.hpp"

namespace fairvit {

// One of the G dataset parts, 1-based. Parts 1..G/2 hold s=0, G/2+1..G hold s=1.
struct PartIndex {
  std::size_t value = 1;
  bool operator==(const PartIndex&) const = default;
};

inline constexpr double kWeightEpsilon = 1e-8;
inline constexpr double kWeightCeiling = 4.0;

/// Per-part attention masks M[l][h][i] (tokens x head_dim) and the shared
/// per-part weights sigma[i].
///
/// The effective mask of head (l, h) is sum_i sigma[i] * M[l][h][i]. Masks are
/// kept strictly inside (-1, 1) and weights strictly inside (eps, 4 - eps).
template <typename T>
class MaskBank {
 public:
  MaskBank() = default;

  // Masks 1/(2G), weights 2: the effective mask starts as all-ones.
  static MaskBank init(const ModelConfig& config, std::size_t groups);

  // Copies share mask storage; clone() does not.
  MaskBank clone() const;

  std::size_t groups() const { return groups_; }
  std::size_t layers() const { return layers_; }
  std::size_t heads() const { return heads_; }
  std::size_t tokens() const { return tokens_; }
  std::size_t head_dim() const { return head_dim_; }

  const Tensor<T>& mask(std::size_t layer, std::size_t head, PartIndex part) const;
  Tensor<T>& mask(std::size_t layer, std::size_t head, PartIndex part);
  T weight(PartIndex part) const { return weights_.at(check(part)); }
  void set_weight(PartIndex part, T value) { weights_.at(check(part)) = value; }

  Tensor<T> weighted_mask(std::size_t layer, std::size_t head) const;

  // Projects every mask and weight back into its open interval.
  void clamp();
  bool within_bounds() const;

  std::vector<NamedTensor> to_named() const;
  static MaskBank from_named(std::span<const NamedTensor> tensors, const ModelConfig& config,
                             std::size_t groups);

  // Bounds of the clamp, in T.
  static T mask_lower();
  static T mask_upper();
  static T weight_lower();
  static T weight_upper();

 private:
  std::size_t check(PartIndex part) const;
  std::size_t slot(std::size_t layer, std::size_t head, PartIndex part) const;

  std::size_t groups_ = 0, layers_ = 0, heads_ = 0, tokens_ = 0, head_dim_ = 0;
  std::vector<Tensor<T>> masks_;
  std::vector<T> weights_;
};

template <typename T>
MaskBank<T> init_bank(const ModelConfig& config, std::size_t groups) {
  return MaskBank<T>::init(config, groups);
}

template <typename T>
Tensor<T> weighted_mask(const MaskBank<T>& bank, std::size_t layer, std::size_t head) {
  return bank.weighted_mask(layer, head);
}

// dL/dM[l][h][i] for a sample routed to part g: (upstream ⊙ attn) * sigma_i
// when i == g, otherwise zero. `upstream` is dL/dHA, `attn` the pre-mask head
// output cached from the forward pass.
template <typename T>
Tensor<T> mask_gradient(const Tensor<T>& upstream, const Tensor<T>& attn, const MaskBank<T>& bank,
                        std::size_t layer, std::size_t head, PartIndex i, PartIndex g);

// dL/dsigma_i contribution of head (l, h): sum(upstream ⊙ attn ⊙ M[l][h][i])
// when i == g, otherwise zero.
template <typename T>
T weight_gradient(const Tensor<T>& upstream, const Tensor<T>& attn, const MaskBank<T>& bank,
                  std::size_t layer, std::size_t head, PartIndex i, PartIndex g);

/// Per-part gradient buffers filled by routing; a part is `present` once any
/// sample of it has contributed in the current batch.
template <typename T>
struct BankGradients {
  std::vector<std::vector<T>> masks;  // same slot order as the bank
  std::vector<T> weights;
  std::vector<bool> present;

  BankGradients() = default;
  explicit BankGradients(const MaskBank<T>& bank);

  void clear();
  std::vector<T>& mask(const MaskBank<T>& bank, std::size_t layer, std::size_t head, PartIndex part);
  const std::vector<T>& mask(const MaskBank<T>& bank, std::size_t layer, std::size_t head,
                             PartIndex part) const;

  // Adds the routed gradients of one head for a part-g sample, scaled by `factor`.
  void add_head(const MaskBank<T>& bank, std::size_t layer, std::size_t head, PartIndex g,
                const Tensor<T>& upstream, const Tensor<T>& attn, T factor);
};

/// Adaptive-moment state for the bank. Only parts flagged present are
/// stepped (their moments included), then the bank is clamped.
template <typename T>
class BankOptimizer {
 public:
  BankOptimizer() = default;
  explicit BankOptimizer(const MaskBank<T>& bank);

  void apply_updates(MaskBank<T>& bank, const BankGradients<T>& grads, double lr);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<Moments> masks_;
  std::vector<Moments> weights_;
  std::vector<long> steps_;  // per part
};

std::string mask_tensor_name(std::size_t layer, std::size_t head, PartIndex part);
std::string weight_tensor_name(PartIndex part);

extern template class MaskBank<float>;
extern template class MaskBank<double>;
extern template struct BankGradients<float>;
extern template struct BankGradients<double>;
extern template class BankOptimizer<float>;
extern template class BankOptimizer<double>;

}  // namespace fairvit
