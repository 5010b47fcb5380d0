#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "codelid/nn/graph.hpp"
#include "codelid/nn/tensor.hpp"

namespace codelid::nn {

inline constexpr float kLayerNormEps = 1e-5f;
inline constexpr std::int32_t kIgnoreIndex = -1;

// Plain kernels on vectors.

// Max-subtracted softmax. Throws std::invalid_argument on empty input.
template <typename T>
std::vector<T> softmax(std::span<const T> v);

template <typename T>
std::vector<T> log_softmax(std::span<const T> v);

// (v - mean) / sqrt(var + eps) * gain + bias with the population variance.
template <typename T>
std::vector<T> layer_norm(std::span<const T> v, std::span<const T> gain, std::span<const T> bias,
                          T eps = T(kLayerNormEps));

// -log softmax(logits)[label] via log-sum-exp.
template <typename T>
T cross_entropy(std::span<const T> logits, std::size_t label);

// Exact (erf) GELU.
template <typename T>
T gelu(T x);

// Recorded primitives. Matrices are [rows x cols]; row-wise ops accept any
// rank and work on the last dimension.

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b);  // [n x k] * [k x m]

template <typename T>
Var matmul_transposed(Graph<T>& g, Var a, Var b);  // [n x k] * [m x k]^T

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

template <typename T>
Var add_bias(Graph<T>& g, Var x, Var bias);  // bias broadcast over rows

template <typename T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
  return add_bias(g, matmul(g, x, weight), bias);
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b);  // elementwise

template <typename T>
Var sum(Graph<T>& g, Var a);

template <typename T>
Var reshape(Graph<T>& g, Var a, Shape shape);

template <typename T>
Var gelu(Graph<T>& g, Var x);

template <typename T>
Var softmax_rows(Graph<T>& g, Var x);

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias, T eps = T(kLayerNormEps));

// Rows of `table` selected by ids; throws std::out_of_range for bad ids.
template <typename T>
Var embedding(Graph<T>& g, Var table, std::span<const std::int32_t> ids);

template <typename T>
Var gather_rows(Graph<T>& g, Var x, std::span<const std::size_t> rows);

// Multi-head scaled dot-product self-attention over [batch*len x dim]
// projections. Keys whose key_mask entry is 0 get -inf scores before the
// softmax. Returns the concatenated head outputs, [batch*len x dim].
template <typename T>
Var attention(Graph<T>& g, Var q, Var k, Var v, std::span<const std::uint8_t> key_mask,
              std::size_t batch, std::size_t len, std::size_t heads);

// Inverted dropout; identity when rate is 0.
template <typename T>
Var dropout(Graph<T>& g, Var x, double rate, std::mt19937_64& rng);

// Mean cross-entropy over rows whose target is not kIgnoreIndex. With no
// selected rows the loss is 0 and no gradient flows.
template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, std::span<const std::int32_t> targets);

}  // namespace codelid::nn
