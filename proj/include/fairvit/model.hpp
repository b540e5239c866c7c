#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairvit/checkpoint.hpp"
#include "fairvit/image.hpp"
#include "fairvit/masking.hpp"
#include "fairvit/model_config.hpp"
#include "fairvit/tensor.hpp"

namespace fairvit {

template <typename T>
struct LayerParams {
  Tensor<T> ln1_gamma, ln1_beta;
  std::vector<Tensor<T>> wq, wk, wv;  // per head, model_dim x head_dim
  Tensor<T> wo, bo;                   // model_dim x model_dim, model_dim
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> w1, b1;  // model_dim x ffn_hidden
  Tensor<T> w2, b2;  // ffn_hidden x model_dim
};

template <typename T>
struct ModelParams {
  Tensor<T> patch_weight;  // patch_dim x model_dim
  Tensor<T> patch_bias;    // model_dim
  Tensor<T> cls_token;     // 1 x model_dim
  Tensor<T> pos_embed;     // tokens x model_dim
  std::vector<LayerParams<T>> layers;
  Tensor<T> norm_gamma, norm_beta;
  Tensor<T> head_weight;  // model_dim x num_classes
  Tensor<T> head_bias;    // num_classes

  // Handles share storage with the members.
  std::vector<std::pair<std::string, Tensor<T>>> named() const;
  std::vector<Tensor<T>> tensors() const;
};

// What one head produced: attention probabilities (tokens x tokens), the
// unmasked head output Attn = probs * V, and the masked output HA.
template <typename T>
struct HeadRecord {
  Tensor<T> probs;
  Tensor<T> attn;
  Tensor<T> masked;
};

template <typename T>
struct ForwardTrace {
  Tensor<T> scores;                             // raw class scores, length num_classes
  std::vector<std::vector<HeadRecord<T>>> heads;  // [layer][head]
};

/// Pre-norm vision transformer with a class token, per-head masked
/// attention, GELU feed-forward blocks and a linear head on the class row.
///
/// Forward only ever sees the image and the effective (weighted-sum) masks;
/// there is no argument through which a sensitive label could enter.
template <typename T>
class VisionTransformer {
 public:
  VisionTransformer(const ModelConfig& config, std::uint64_t seed);
  VisionTransformer(const ModelConfig& config, ModelParams<T> params);

  const ModelConfig& config() const { return config_; }
  const ModelParams<T>& params() const { return params_; }
  ModelParams<T>& params() { return params_; }

  // Deep copy (parameters are handles).
  VisionTransformer clone() const;

  Tensor<T> patch_embed(const Image& image) const;

  // One head of layer `layer` on already-normalized tokens. A null bank means
  // plain attention.
  Tensor<T> head_attention(const Tensor<T>& tokens, std::size_t layer, std::size_t head,
                           const MaskBank<T>* bank, HeadRecord<T>* record = nullptr) const;

  ForwardTrace<T> forward_trace(const Image& image, const MaskBank<T>* bank) const;
  Tensor<T> forward(const Image& image, const MaskBank<T>* bank) const;

  std::vector<NamedTensor> to_named() const;
  static VisionTransformer from_named(std::span<const NamedTensor> tensors, const ModelConfig& config);

 private:
  void check_image(const Image& image) const;

  ModelConfig config_;
  ModelParams<T> params_;
};

// Feeds dL/dHA of every head of a backpropagated trace into part-g buffers.
template <typename T>
void route_bank_gradients(const ForwardTrace<T>& trace, const MaskBank<T>& bank, PartIndex g,
                          BankGradients<T>& grads, T factor = T(1));

// Hard prediction: argmax with ties to the lower index.
template <typename T>
std::size_t argmax_label(std::span<const T> scores);

// Model + bank as a single FVIT tensor list; "meta.config" records the
// model config and part count.
template <typename T>
std::vector<NamedTensor> checkpoint_tensors(const VisionTransformer<T>& model, const MaskBank<T>& bank);

template <typename T>
struct LoadedModel {
  VisionTransformer<T> model;
  MaskBank<T> bank;
};

template <typename T>
LoadedModel<T> load_model(std::span<const NamedTensor> tensors);

extern template class VisionTransformer<float>;
extern template class VisionTransformer<double>;

}  // namespace fairvit
