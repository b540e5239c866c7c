#include "fairvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fairvit {
namespace {

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.dims()));
  }
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
}

template <typename T>
std::vector<T>* grad_of(const Tensor<T>& t) {
  return t.requires_grad() ? &t.impl()->grad : nullptr;
}

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dims differ, " + shape_str(a.dims()) + " x " + shape_str(b.dims()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor<T>::record({m, n}, std::move(out), {a, b}, "matmul", [a, b, m, k, n](const auto& o) {
    const T* go = o.grad.data();
    if (auto* ga = grad_of(a)) {
      // dA = dC * B^T
      const T* bd = b.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bd[p * n + j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = grad_of(b)) {
      // dB = A^T * dC
      const T* ad = a.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T av = ad[i * k + p];
          if (av == T(0)) continue;
          T* gbrow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * go[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor<T>::record(a.dims(), std::move(out), {a, b}, "add", [a, b](const auto& o) {
    if (auto* ga = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i];
    }
    if (auto* gb = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& m, const Tensor<T>& bias) {
  require_matrix(m, "add_row");
  const std::size_t rows = m.rows(), cols = m.cols();
  if (bias.numel() != cols) {
    throw ShapeError("add_row: bias " + shape_str(bias.dims()) + " for matrix " + shape_str(m.dims()));
  }
  std::vector<T> out(m.data().begin(), m.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.at(c);
  }
  return Tensor<T>::record(m.dims(), std::move(out), {m, bias}, "add_row", [m, bias, rows, cols](const auto& o) {
    if (auto* gm = grad_of(m)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gm)[i] += o.grad[i];
    }
    if (auto* gb = grad_of(bias)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += o.grad[r * cols + c];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor<T>::record(a.dims(), std::move(out), {a, b}, "mul", [a, b](const auto& o) {
    if (auto* ga = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i] * b.at(i);
    }
    if (auto* gb = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += o.grad[i] * a.at(i);
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return Tensor<T>::record(a.dims(), std::move(out), {a}, "scale", [a, factor](const auto& o) {
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + value;
  return Tensor<T>::record(a.dims(), std::move(out), {a}, "add_scalar", [a](const auto& o) {
    auto& ga = a.impl()->grad;
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& t) {
  require_matrix(t, "softmax_rows");
  const std::size_t rows = t.rows(), cols = t.cols();
  std::vector<T> out(t.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = t.data().data() + r * cols;
    T* y = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - mx);
      z += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return Tensor<T>::record(t.dims(), std::move(out), {t}, "softmax_rows", [t, rows, cols](const auto& o) {
    auto& gt = t.impl()->grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = o.data.data() + r * cols;
      const T* gy = o.grad.data() + r * cols;
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) gt[r * cols + c] += y[c] * (gy[c] - dot);
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& t) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(t.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = t.at(i);
    out[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  return Tensor<T>::record(t.dims(), std::move(out), {t}, "gelu", [t, inv_sqrt2](const auto& o) {
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    auto& gt = t.impl()->grad;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const T x = t.at(i);
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      gt[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_matrix(x, "layer_norm_rows");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.numel() != cols || beta.numel() != cols) {
    throw ShapeError("layer_norm_rows: affine params do not match width " + std::to_string(cols));
  }
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * cols;
    T mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= T(cols);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (in[c] - mu) * inv_std[r];
      out[r * cols + c] = xhat[r * cols + c] * gamma.at(c) + beta.at(c);
    }
  }
  return Tensor<T>::record(
      x.dims(), std::move(out), {x, gamma, beta}, "layer_norm_rows",
      [x, gamma, beta, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](const auto& o) {
        auto* gx = grad_of(x);
        auto* gg = grad_of(gamma);
        auto* gb = grad_of(beta);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gy = o.grad.data() + r * cols;
          const T* xh = xhat.data() + r * cols;
          if (gg || gb) {
            for (std::size_t c = 0; c < cols; ++c) {
              if (gg) (*gg)[c] += gy[c] * xh[c];
              if (gb) (*gb)[c] += gy[c];
            }
          }
          if (gx) {
            T sum_g = 0, sum_gx = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              const T g = gy[c] * gamma.at(c);
              sum_g += g;
              sum_gx += g * xh[c];
            }
            const T n = T(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              const T g = gy[c] * gamma.at(c);
              (*gx)[r * cols + c] += inv_std[r] * (g - sum_g / n - xh[c] * sum_gx / n);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& t) {
  require_matrix(t, "transpose");
  const std::size_t rows = t.rows(), cols = t.cols();
  std::vector<T> out(t.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = t.at(r * cols + c);
  }
  return Tensor<T>::record({cols, rows}, std::move(out), {t}, "transpose", [t, rows, cols](const auto& o) {
    auto& gt = t.impl()->grad;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gt[r * cols + c] += o.grad[c * rows + r];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape dims) {
  if (shape_numel(dims) != t.numel()) {
    throw ShapeError("reshape: " + shape_str(t.dims()) + " to " + shape_str(dims));
  }
  std::vector<T> out(t.data().begin(), t.data().end());
  return Tensor<T>::record(std::move(dims), std::move(out), {t}, "reshape", [t](const auto& o) {
    auto& gt = t.impl()->grad;
    for (std::size_t i = 0; i < o.grad.size(); ++i) gt[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<T> out(rows * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(parts[k].data().data() + r * w, w, out.data() + r * total + offsets[k]);
    }
  }
  return Tensor<T>::record({rows, total}, std::move(out), parts, "concat_cols",
                           [parts, offsets, rows, total](const auto& o) {
                             for (std::size_t k = 0; k < parts.size(); ++k) {
                               auto* g = grad_of(parts[k]);
                               if (!g) continue;
                               const std::size_t w = parts[k].cols();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t c = 0; c < w; ++c) {
                                   (*g)[r * w + c] += o.grad[r * total + offsets[k] + c];
                                 }
                               }
                             }
                           });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor<T>::record({rows, cols}, std::move(out), parts, "concat_rows", [parts](const auto& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (auto* g = grad_of(p)) {
        for (std::size_t i = 0; i < p.numel(); ++i) (*g)[i] += o.grad[offset + i];
      }
      offset += p.numel();
    }
  });
}

template <typename T>
Tensor<T> row(const Tensor<T>& m, std::size_t r) {
  require_matrix(m, "row");
  const std::size_t cols = m.cols();
  if (r >= m.rows()) throw ShapeError("row: index " + std::to_string(r) + " out of range");
  std::vector<T> out(m.data().begin() + r * cols, m.data().begin() + (r + 1) * cols);
  return Tensor<T>::record({1, cols}, std::move(out), {m}, "row", [m, r, cols](const auto& o) {
    auto& gm = m.impl()->grad;
    for (std::size_t c = 0; c < cols; ++c) gm[r * cols + c] += o.grad[c];
  });
}

template <typename T>
Tensor<T> element(const Tensor<T>& t, std::size_t i) {
  if (i >= t.numel()) throw ShapeError("element: index " + std::to_string(i) + " out of range");
  return Tensor<T>::record({1}, {t.at(i)}, {t}, "element", [t, i](const auto& o) {
    t.impl()->grad[i] += o.grad[0];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& t) {
  T s = 0;
  for (auto v : t.data()) s += v;
  return Tensor<T>::record({1}, {s}, {t}, "sum", [t](const auto& o) {
    auto& gt = t.impl()->grad;
    for (auto& g : gt) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& t) {
  return scale(sum(t), T(1) / T(t.numel()));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t target) {
  const std::size_t n = logits.numel();
  if (target >= n) throw ShapeError("cross_entropy: target " + std::to_string(target) + " out of range");
  const auto z = logits.data();
  const T mx = *std::max_element(z.begin(), z.end());
  T denom = 0;
  for (auto v : z) denom += std::exp(v - mx);
  const T lse = mx + std::log(denom);
  std::vector<T> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(z[i] - lse);
  return Tensor<T>::record({1}, {lse - z[target]}, {logits}, "cross_entropy",
                           [logits, target, probs = std::move(probs)](const auto& o) {
                             auto& g = logits.impl()->grad;
                             for (std::size_t i = 0; i < probs.size(); ++i) {
                               g[i] += o.grad[0] * (probs[i] - (i == target ? T(1) : T(0)));
                             }
                           });
}

#define FAIRVIT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                           \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                            \
  template Tensor<T> gelu(const Tensor<T>&);                                                    \
  template Tensor<T> layer_norm_rows(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> row(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> element(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);

FAIRVIT_INSTANTIATE_OPS(float)
FAIRVIT_INSTANTIATE_OPS(double)

}  // namespace fairvit
