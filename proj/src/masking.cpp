#include "fairvit/masking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fairvit/optimizer.hpp"

namespace fairvit {

std::string mask_tensor_name(std::size_t layer, std::size_t head, PartIndex part) {
  return "mask.l" + std::to_string(layer) + ".h" + std::to_string(head) + ".i" + std::to_string(part.value);
}

std::string weight_tensor_name(PartIndex part) { return "sigma.i" + std::to_string(part.value); }

template <typename T>
T MaskBank<T>::mask_lower() {
  return std::nextafter(T(-1), T(0));
}
template <typename T>
T MaskBank<T>::mask_upper() {
  return std::nextafter(T(1), T(0));
}
template <typename T>
T MaskBank<T>::weight_lower() {
  return std::nextafter(static_cast<T>(kWeightEpsilon), T(1));
}
template <typename T>
T MaskBank<T>::weight_upper() {
  // In float 4 - 1e-8 rounds to 4; step below it explicitly.
  const T bound = static_cast<T>(kWeightCeiling - kWeightEpsilon);
  return bound < T(kWeightCeiling) ? std::nextafter(bound, T(0)) : std::nextafter(T(kWeightCeiling), T(0));
}

template <typename T>
MaskBank<T> MaskBank<T>::init(const ModelConfig& config, std::size_t groups) {
  config.validate();
  if (groups < 2 || groups % 2 != 0) {
    throw ConfigError("part count G must be even and at least 2, got " + std::to_string(groups));
  }
  MaskBank bank;
  bank.groups_ = groups;
  bank.layers_ = config.num_layers;
  bank.heads_ = config.num_heads;
  bank.tokens_ = config.num_tokens();
  bank.head_dim_ = config.head_dim;
  const T init = T(1) / static_cast<T>(2 * groups);
  const std::size_t n = bank.layers_ * bank.heads_ * groups;
  bank.masks_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) bank.masks_.push_back(Tensor<T>::full({bank.tokens_, bank.head_dim_}, init));
  bank.weights_.assign(groups, T(2));
  return bank;
}

template <typename T>
MaskBank<T> MaskBank<T>::clone() const {
  MaskBank out = *this;
  for (auto& m : out.masks_) m = m.detach();
  return out;
}

template <typename T>
std::size_t MaskBank<T>::check(PartIndex part) const {
  if (part.value < 1 || part.value > groups_) {
    throw ContractError("part index " + std::to_string(part.value) + " outside 1.." + std::to_string(groups_));
  }
  return part.value - 1;
}

template <typename T>
std::size_t MaskBank<T>::slot(std::size_t layer, std::size_t head, PartIndex part) const {
  if (layer >= layers_ || head >= heads_) {
    throw ContractError("mask (" + std::to_string(layer) + ", " + std::to_string(head) + ") out of range");
  }
  return (layer * heads_ + head) * groups_ + check(part);
}

template <typename T>
const Tensor<T>& MaskBank<T>::mask(std::size_t layer, std::size_t head, PartIndex part) const {
  return masks_[slot(layer, head, part)];
}

template <typename T>
Tensor<T>& MaskBank<T>::mask(std::size_t layer, std::size_t head, PartIndex part) {
  return masks_[slot(layer, head, part)];
}

template <typename T>
Tensor<T> MaskBank<T>::weighted_mask(std::size_t layer, std::size_t head) const {
  std::vector<T> out(tokens_ * head_dim_, T(0));
  for (std::size_t i = 1; i <= groups_; ++i) {
    const auto& m = mask(layer, head, PartIndex{i});
    const T w = weights_[i - 1];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * m.at(k);
  }
  return Tensor<T>({tokens_, head_dim_}, std::move(out));
}

template <typename T>
void MaskBank<T>::clamp() {
  for (auto& m : masks_) {
    for (auto& v : m.mutable_data()) v = std::clamp(v, mask_lower(), mask_upper());
  }
  for (auto& w : weights_) w = std::clamp(w, weight_lower(), weight_upper());
}

template <typename T>
bool MaskBank<T>::within_bounds() const {
  for (const auto& m : masks_) {
    for (auto v : m.data()) {
      if (!(v > T(-1) && v < T(1))) return false;
    }
  }
  for (auto w : weights_) {
    if (!(w > static_cast<T>(kWeightEpsilon) && w < T(kWeightCeiling) &&
          static_cast<double>(w) < kWeightCeiling - kWeightEpsilon)) {
      return false;
    }
  }
  return true;
}

template <typename T>
std::vector<NamedTensor> MaskBank<T>::to_named() const {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t i = 1; i <= groups_; ++i) {
        out.push_back(fairvit::to_named(mask_tensor_name(l, h, PartIndex{i}), mask(l, h, PartIndex{i})));
      }
    }
  }
  for (std::size_t i = 1; i <= groups_; ++i) {
    out.push_back(NamedTensor{weight_tensor_name(PartIndex{i}), {1}, {static_cast<float>(weights_[i - 1])}});
  }
  return out;
}

template <typename T>
MaskBank<T> MaskBank<T>::from_named(std::span<const NamedTensor> tensors, const ModelConfig& config,
                                    std::size_t groups) {
  auto bank = init(config, groups);
  for (std::size_t l = 0; l < bank.layers_; ++l) {
    for (std::size_t h = 0; h < bank.heads_; ++h) {
      for (std::size_t i = 1; i <= groups; ++i) {
        const auto& src = find_tensor(tensors, mask_tensor_name(l, h, PartIndex{i}));
        auto& dst = bank.mask(l, h, PartIndex{i});
        if (src.dims != dst.dims()) throw ShapeError("mask tensor '" + src.name + "' has wrong dims");
        std::transform(src.data.begin(), src.data.end(), dst.mutable_data().begin(),
                       [](float v) { return static_cast<T>(v); });
      }
    }
  }
  for (std::size_t i = 1; i <= groups; ++i) {
    const auto& src = find_tensor(tensors, weight_tensor_name(PartIndex{i}));
    if (src.data.size() != 1) throw ShapeError("weight tensor '" + src.name + "' must hold one value");
    bank.weights_[i - 1] = static_cast<T>(src.data[0]);
  }
  return bank;
}

namespace {

template <typename T>
void check_head_shapes(const Tensor<T>& upstream, const Tensor<T>& attn, const MaskBank<T>& bank) {
  const Shape expected{bank.tokens(), bank.head_dim()};
  if (upstream.dims() != expected || attn.dims() != expected) {
    throw ShapeError("head gradient inputs must be " + shape_str(expected) + ", got " +
                     shape_str(upstream.dims()) + " and " + shape_str(attn.dims()));
  }
}

}  // namespace

template <typename T>
Tensor<T> mask_gradient(const Tensor<T>& upstream, const Tensor<T>& attn, const MaskBank<T>& bank,
                        std::size_t layer, std::size_t head, PartIndex i, PartIndex g) {
  check_head_shapes(upstream, attn, bank);
  (void)bank.mask(layer, head, i);  // range check
  std::vector<T> out(upstream.numel(), T(0));
  if (i == g) {
    const T w = bank.weight(i);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = upstream.at(k) * attn.at(k) * w;
  }
  return Tensor<T>(upstream.dims(), std::move(out));
}

template <typename T>
T weight_gradient(const Tensor<T>& upstream, const Tensor<T>& attn, const MaskBank<T>& bank,
                  std::size_t layer, std::size_t head, PartIndex i, PartIndex g) {
  check_head_shapes(upstream, attn, bank);
  const auto& m = bank.mask(layer, head, i);
  if (!(i == g)) return T(0);
  T acc = 0;
  for (std::size_t k = 0; k < m.numel(); ++k) acc += upstream.at(k) * attn.at(k) * m.at(k);
  return acc;
}

template <typename T>
BankGradients<T>::BankGradients(const MaskBank<T>& bank) {
  masks.assign(bank.layers() * bank.heads() * bank.groups(),
               std::vector<T>(bank.tokens() * bank.head_dim(), T(0)));
  weights.assign(bank.groups(), T(0));
  present.assign(bank.groups(), false);
}

template <typename T>
void BankGradients<T>::clear() {
  for (auto& m : masks) std::fill(m.begin(), m.end(), T(0));
  std::fill(weights.begin(), weights.end(), T(0));
  std::fill(present.begin(), present.end(), false);
}

template <typename T>
std::vector<T>& BankGradients<T>::mask(const MaskBank<T>& bank, std::size_t layer, std::size_t head,
                                       PartIndex part) {
  (void)bank.mask(layer, head, part);
  return masks[(layer * bank.heads() + head) * bank.groups() + part.value - 1];
}

template <typename T>
const std::vector<T>& BankGradients<T>::mask(const MaskBank<T>& bank, std::size_t layer, std::size_t head,
                                             PartIndex part) const {
  (void)bank.mask(layer, head, part);
  return masks[(layer * bank.heads() + head) * bank.groups() + part.value - 1];
}

template <typename T>
void BankGradients<T>::add_head(const MaskBank<T>& bank, std::size_t layer, std::size_t head, PartIndex g,
                                const Tensor<T>& upstream, const Tensor<T>& attn, T factor) {
  const auto dm = mask_gradient(upstream, attn, bank, layer, head, g, g);
  auto& buf = mask(bank, layer, head, g);
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] += factor * dm.at(k);
  weights[g.value - 1] += factor * weight_gradient(upstream, attn, bank, layer, head, g, g);
  present[g.value - 1] = true;
}

template <typename T>
BankOptimizer<T>::BankOptimizer(const MaskBank<T>& bank) {
  const std::size_t n = bank.tokens() * bank.head_dim();
  masks_.assign(bank.layers() * bank.heads() * bank.groups(),
                Moments{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  weights_.assign(bank.groups(), Moments{{0.0}, {0.0}});
  steps_.assign(bank.groups(), 0);
}

template <typename T>
void BankOptimizer<T>::apply_updates(MaskBank<T>& bank, const BankGradients<T>& grads, double lr) {
  if (steps_.size() != bank.groups()) throw ContractError("optimizer was built for a different bank");
  for (std::size_t i = 1; i <= bank.groups(); ++i) {
    if (!grads.present[i - 1]) continue;
    const long step = ++steps_[i - 1];
    for (std::size_t l = 0; l < bank.layers(); ++l) {
      for (std::size_t h = 0; h < bank.heads(); ++h) {
        const std::size_t slot = (l * bank.heads() + h) * bank.groups() + i - 1;
        adam_update<T>(bank.mask(l, h, PartIndex{i}).mutable_data(), grads.masks[slot], masks_[slot].m,
                       masks_[slot].v, step, lr);
      }
    }
    T w = bank.weight(PartIndex{i});
    adam_update<T>(std::span<T>(&w, 1), std::span<const T>(&grads.weights[i - 1], 1), weights_[i - 1].m,
                   weights_[i - 1].v, step, lr);
    bank.set_weight(PartIndex{i}, w);
  }
  bank.clamp();
}

template class MaskBank<float>;
template class MaskBank<double>;
template struct BankGradients<float>;
template struct BankGradients<double>;
template class BankOptimizer<float>;
template class BankOptimizer<double>;

#define FAIRVIT_INSTANTIATE_MASK_GRADS(T)                                                                  \
  template Tensor<T> mask_gradient(const Tensor<T>&, const Tensor<T>&, const MaskBank<T>&, std::size_t, \
                                   std::size_t, PartIndex, PartIndex);                                 \
  template T weight_gradient(const Tensor<T>&, const Tensor<T>&, const MaskBank<T>&, std::size_t,       \
                             std::size_t, PartIndex, PartIndex);

FAIRVIT_INSTANTIATE_MASK_GRADS(float)
FAIRVIT_INSTANTIATE_MASK_GRADS(double)

}  // namespace fairvit
