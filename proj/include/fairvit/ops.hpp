#pragma once

#include <cstddef>
#include <vector>

#include "fairvit/tensor.hpp"

// Differentiable ops. Matrices are rank-2; vectors passed where noted.
namespace fairvit {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// Adds a length-n vector (rank 1 or 1xn) to every row of an m x n matrix.
template <typename T>
Tensor<T> add_row(const Tensor<T>& m, const Tensor<T>& bias);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);

// Row-wise softmax with max-subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& t);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& t);

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5));

template <typename T>
Tensor<T> transpose(const Tensor<T>& t);

template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape dims);

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

// Row r as a 1 x n matrix.
template <typename T>
Tensor<T> row(const Tensor<T>& m, std::size_t r);

// Flat element i as a scalar.
template <typename T>
Tensor<T> element(const Tensor<T>& t, std::size_t i);

template <typename T>
Tensor<T> sum(const Tensor<T>& t);

template <typename T>
Tensor<T> mean(const Tensor<T>& t);

// -log softmax(logits)[target] for a flat logit vector.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t target);

}  // namespace fairvit
