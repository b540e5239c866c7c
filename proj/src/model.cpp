#include "fairvit/model.hpp"

#include <algorithm>
#include <cmath>

#include "fairvit/ops.hpp"
#include "fairvit/rng.hpp"

namespace fairvit {

void ModelConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || channels == 0) {
    throw ConfigError("image_size, patch_size and channels must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (num_layers == 0 || num_heads == 0 || head_dim == 0 || ffn_hidden == 0) {
    throw ConfigError("layers, heads, head_dim and ffn_hidden must be positive");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
}

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_slots(ModelParams<T>& p) {
  std::vector<std::pair<std::string, Tensor<T>*>> out{
      {"patch.weight", &p.patch_weight}, {"patch.bias", &p.patch_bias}, {"cls", &p.cls_token},
      {"pos", &p.pos_embed}};
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1.gamma", &L.ln1_gamma);
    out.emplace_back(pre + "ln1.beta", &L.ln1_beta);
    for (std::size_t h = 0; h < L.wq.size(); ++h) {
      const std::string hp = pre + "head" + std::to_string(h) + ".";
      out.emplace_back(hp + "wq", &L.wq[h]);
      out.emplace_back(hp + "wk", &L.wk[h]);
      out.emplace_back(hp + "wv", &L.wv[h]);
    }
    out.emplace_back(pre + "wo", &L.wo);
    out.emplace_back(pre + "bo", &L.bo);
    out.emplace_back(pre + "ln2.gamma", &L.ln2_gamma);
    out.emplace_back(pre + "ln2.beta", &L.ln2_beta);
    out.emplace_back(pre + "ffn.w1", &L.w1);
    out.emplace_back(pre + "ffn.b1", &L.b1);
    out.emplace_back(pre + "ffn.w2", &L.w2);
    out.emplace_back(pre + "ffn.b2", &L.b2);
  }
  out.emplace_back("norm.gamma", &p.norm_gamma);
  out.emplace_back("norm.beta", &p.norm_beta);
  out.emplace_back("head.weight", &p.head_weight);
  out.emplace_back("head.bias", &p.head_bias);
  return out;
}

// Shapes only; values filled by the caller.
template <typename T>
ModelParams<T> allocate(const ModelConfig& c) {
  const std::size_t D = c.model_dim();
  ModelParams<T> p;
  p.patch_weight = Tensor<T>::zeros({c.patch_dim(), D}, true);
  p.patch_bias = Tensor<T>::zeros({D}, true);
  p.cls_token = Tensor<T>::zeros({1, D}, true);
  p.pos_embed = Tensor<T>::zeros({c.num_tokens(), D}, true);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    LayerParams<T> L;
    L.ln1_gamma = Tensor<T>::full({D}, T(1), true);
    L.ln1_beta = Tensor<T>::zeros({D}, true);
    for (std::size_t h = 0; h < c.num_heads; ++h) {
      L.wq.push_back(Tensor<T>::zeros({D, c.head_dim}, true));
      L.wk.push_back(Tensor<T>::zeros({D, c.head_dim}, true));
      L.wv.push_back(Tensor<T>::zeros({D, c.head_dim}, true));
    }
    L.wo = Tensor<T>::zeros({D, D}, true);
    L.bo = Tensor<T>::zeros({D}, true);
    L.ln2_gamma = Tensor<T>::full({D}, T(1), true);
    L.ln2_beta = Tensor<T>::zeros({D}, true);
    L.w1 = Tensor<T>::zeros({D, c.ffn_hidden}, true);
    L.b1 = Tensor<T>::zeros({c.ffn_hidden}, true);
    L.w2 = Tensor<T>::zeros({c.ffn_hidden, D}, true);
    L.b2 = Tensor<T>::zeros({D}, true);
    p.layers.push_back(std::move(L));
  }
  p.norm_gamma = Tensor<T>::full({D}, T(1), true);
  p.norm_beta = Tensor<T>::zeros({D}, true);
  p.head_weight = Tensor<T>::zeros({D, c.num_classes}, true);
  p.head_bias = Tensor<T>::zeros({c.num_classes}, true);
  return p;
}

bool is_random_init(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (name.find("gamma") != std::string::npos || name.find("beta") != std::string::npos) return false;
  return !(ends_with("bias") || ends_with(".bo") || ends_with(".b1") || ends_with(".b2"));
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named() const {
  auto slots = named_slots(const_cast<ModelParams<T>&>(*this));
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(slots.size());
  for (auto& [name, t] : slots) out.emplace_back(name, *t);
  return out;
}

template <typename T>
std::vector<Tensor<T>> ModelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

template <typename T>
VisionTransformer<T>::VisionTransformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  params_ = allocate<T>(config_);
  for (auto& [name, t] : named_slots(params_)) {
    if (!is_random_init(name)) continue;
    Rng rng(seed, "init/" + name);
    for (auto& v : t->mutable_data()) v = static_cast<T>(kInitStd * rng.normal());
  }
}

template <typename T>
VisionTransformer<T>::VisionTransformer(const ModelConfig& config, ModelParams<T> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const auto reference = allocate<T>(config_);
  const auto want = reference.named();
  const auto have = params_.named();
  for (std::size_t k = 0; k < want.size(); ++k) {
    if (want[k].second.dims() != have[k].second.dims()) {
      throw ShapeError("parameter " + want[k].first + " should be " + shape_str(want[k].second.dims()));
    }
  }
}

template <typename T>
VisionTransformer<T> VisionTransformer<T>::clone() const {
  ModelParams<T> copy = params_;
  for (auto& [name, t] : named_slots(copy)) *t = Tensor<T>(t->dims(), {t->data().begin(), t->data().end()}, true);
  return VisionTransformer(config_, std::move(copy));
}

template <typename T>
void VisionTransformer<T>::check_image(const Image& image) const {
  if (image.channels != config_.channels || image.height != config_.image_size ||
      image.width != config_.image_size || image.pixels.size() != image.channels * image.height * image.width) {
    throw ShapeError("image " + std::to_string(image.channels) + "x" + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " does not match model input " +
                     std::to_string(config_.channels) + "x" + std::to_string(config_.image_size) + "x" +
                     std::to_string(config_.image_size));
  }
}

template <typename T>
Tensor<T> VisionTransformer<T>::patch_embed(const Image& image) const {
  check_image(image);
  const std::size_t grid = config_.grid(), ps = config_.patch_size, C = config_.channels;
  const std::size_t n = config_.num_patches(), pd = config_.patch_dim();
  std::vector<T> flat(n * pd);
  for (std::size_t py = 0; py < grid; ++py) {
    for (std::size_t px = 0; px < grid; ++px) {
      T* out = flat.data() + (py * grid + px) * pd;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t dy = 0; dy < ps; ++dy) {
          for (std::size_t dx = 0; dx < ps; ++dx) {
            *out++ = static_cast<T>(image.at(c, py * ps + dy, px * ps + dx));
          }
        }
      }
    }
  }
  const Tensor<T> patches({n, pd}, std::move(flat));
  const auto projected = add_row(matmul(patches, params_.patch_weight), params_.patch_bias);
  return add(concat_rows<T>({params_.cls_token, projected}), params_.pos_embed);
}

template <typename T>
Tensor<T> VisionTransformer<T>::head_attention(const Tensor<T>& tokens, std::size_t layer, std::size_t head,
                                               const MaskBank<T>* bank, HeadRecord<T>* record) const {
  const auto& L = params_.layers.at(layer);
  const auto q = matmul(tokens, L.wq.at(head));
  const auto k = matmul(tokens, L.wk.at(head));
  const auto v = matmul(tokens, L.wv.at(head));
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(config_.head_dim));
  const auto probs = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
  const auto attn = matmul(probs, v);
  Tensor<T> masked = attn;
  if (bank) {
    const auto m = bank->weighted_mask(layer, head);
    if (m.dims() != attn.dims()) {
      throw ShapeError("mask " + shape_str(m.dims()) + " does not match head output " + shape_str(attn.dims()));
    }
    masked = mul(attn, m);
  }
  if (record) *record = HeadRecord<T>{probs, attn, masked};
  return masked;
}

template <typename T>
ForwardTrace<T> VisionTransformer<T>::forward_trace(const Image& image, const MaskBank<T>* bank) const {
  if (bank && (bank->layers() != config_.num_layers || bank->heads() != config_.num_heads ||
               bank->tokens() != config_.num_tokens() || bank->head_dim() != config_.head_dim)) {
    throw ShapeError("mask bank does not match the model config");
  }
  ForwardTrace<T> trace;
  trace.heads.resize(config_.num_layers);
  auto x = patch_embed(image);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const auto& L = params_.layers[l];
    const auto y = layer_norm_rows(x, L.ln1_gamma, L.ln1_beta);
    std::vector<Tensor<T>> outs;
    trace.heads[l].resize(config_.num_heads);
    for (std::size_t h = 0; h < config_.num_heads; ++h) {
      outs.push_back(head_attention(y, l, h, bank, &trace.heads[l][h]));
    }
    const auto mha = concat_cols(outs);
    x = add(x, add_row(matmul(mha, L.wo), L.bo));
    const auto y2 = layer_norm_rows(x, L.ln2_gamma, L.ln2_beta);
    const auto hidden = gelu(add_row(matmul(y2, L.w1), L.b1));
    x = add(x, add_row(matmul(hidden, L.w2), L.b2));
  }
  const auto cls = row(layer_norm_rows(x, params_.norm_gamma, params_.norm_beta), 0);
  trace.scores = reshape(add_row(matmul(cls, params_.head_weight), params_.head_bias), {config_.num_classes});
  return trace;
}

template <typename T>
Tensor<T> VisionTransformer<T>::forward(const Image& image, const MaskBank<T>* bank) const {
  return forward_trace(image, bank).scores;
}

template <typename T>
std::vector<NamedTensor> VisionTransformer<T>::to_named() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params_.named()) out.push_back(fairvit::to_named(name, t));
  return out;
}

template <typename T>
VisionTransformer<T> VisionTransformer<T>::from_named(std::span<const NamedTensor> tensors,
                                                      const ModelConfig& config) {
  config.validate();
  auto params = allocate<T>(config);
  for (auto& [name, t] : named_slots(params)) {
    const auto& src = find_tensor(tensors, name);
    if (src.dims != t->dims()) {
      throw ShapeError("checkpoint tensor " + name + " is " + shape_str(src.dims) + ", expected " +
                       shape_str(t->dims()));
    }
    std::transform(src.data.begin(), src.data.end(), t->mutable_data().begin(),
                   [](float v) { return static_cast<T>(v); });
  }
  return VisionTransformer(config, std::move(params));
}

template <typename T>
void route_bank_gradients(const ForwardTrace<T>& trace, const MaskBank<T>& bank, PartIndex g,
                          BankGradients<T>& grads, T factor) {
  for (std::size_t l = 0; l < trace.heads.size(); ++l) {
    for (std::size_t h = 0; h < trace.heads[l].size(); ++h) {
      const auto& rec = trace.heads[l][h];
      if (!rec.masked.has_grad()) continue;
      const Tensor<T> upstream(rec.masked.dims(), {rec.masked.grad().begin(), rec.masked.grad().end()});
      grads.add_head(bank, l, h, g, upstream, rec.attn.detach(), factor);
    }
  }
}

template <typename T>
std::size_t argmax_label(std::span<const T> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

template <typename T>
std::vector<NamedTensor> checkpoint_tensors(const VisionTransformer<T>& model, const MaskBank<T>& bank) {
  const auto& c = model.config();
  std::vector<NamedTensor> out;
  out.push_back(NamedTensor{"meta.config",
                            {9},
                            {static_cast<float>(c.image_size), static_cast<float>(c.channels),
                             static_cast<float>(c.patch_size), static_cast<float>(c.num_layers),
                             static_cast<float>(c.num_heads), static_cast<float>(c.head_dim),
                             static_cast<float>(c.ffn_hidden), static_cast<float>(c.num_classes),
                             static_cast<float>(bank.groups())}});
  auto params = model.to_named();
  out.insert(out.end(), params.begin(), params.end());
  auto masks = bank.to_named();
  out.insert(out.end(), masks.begin(), masks.end());
  return out;
}

template <typename T>
LoadedModel<T> load_model(std::span<const NamedTensor> tensors) {
  const auto& meta = find_tensor(tensors, "meta.config");
  if (meta.data.size() != 9) throw IoError("meta.config must hold 9 values");
  auto field = [&](std::size_t i) { return static_cast<std::size_t>(meta.data[i]); };
  ModelConfig c{field(0), field(1), field(2), field(3), field(4), field(5), field(6), field(7)};
  auto model = VisionTransformer<T>::from_named(tensors, c);
  auto bank = MaskBank<T>::from_named(tensors, c, field(8));
  return LoadedModel<T>{std::move(model), std::move(bank)};
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template class VisionTransformer<float>;
template class VisionTransformer<double>;

#define FAIRVIT_INSTANTIATE_MODEL(T)                                                                       \
  template void route_bank_gradients(const ForwardTrace<T>&, const MaskBank<T>&, PartIndex,             \
                                     BankGradients<T>&, T);                                             \
  template std::size_t argmax_label(std::span<const T>);                                                \
  template std::vector<NamedTensor> checkpoint_tensors(const VisionTransformer<T>&, const MaskBank<T>&); \
  template LoadedModel<T> load_model(std::span<const NamedTensor>);

FAIRVIT_INSTANTIATE_MODEL(float)
FAIRVIT_INSTANTIATE_MODEL(double)

}  // namespace fairvit
