#include "codelid/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "codelid/error.hpp"

namespace codelid::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "x" : "") << shape[i];
  ss << ']';
  return ss.str();
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMat = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMat = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MapMat<T> as_matrix(Tensor<T>& t) {
  return MapMat<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
ConstMapMat<T> as_matrix(const Tensor<T>& t) {
  return ConstMapMat<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

template <typename T>
std::vector<T> softmax(std::span<const T> v) {
  require(!v.empty(), "softmax of an empty vector");
  const T mx = *std::max_element(v.begin(), v.end());
  std::vector<T> out(v.size());
  T total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (auto& x : out) x /= total;
  return out;
}

template <typename T>
std::vector<T> log_softmax(std::span<const T> v) {
  require(!v.empty(), "log_softmax of an empty vector");
  const T mx = *std::max_element(v.begin(), v.end());
  T total = 0;
  for (T x : v) total += std::exp(x - mx);
  const T lse = mx + std::log(total);
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

template <typename T>
std::vector<T> layer_norm(std::span<const T> v, std::span<const T> gain, std::span<const T> bias, T eps) {
  require(v.size() == gain.size() && v.size() == bias.size(), "layer_norm length mismatch");
  require(!v.empty(), "layer_norm of an empty vector");
  require(eps > 0, "layer_norm eps must be positive");
  const T n = static_cast<T>(v.size());
  T mean = 0;
  for (T x : v) mean += x;
  mean /= n;
  T var = 0;
  for (T x : v) var += (x - mean) * (x - mean);
  var /= n;
  const T rstd = T(1) / std::sqrt(var + eps);
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) * rstd * gain[i] + bias[i];
  return out;
}

template <typename T>
T cross_entropy(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("cross_entropy label out of range");
  const T loss = -log_softmax(logits)[label];
  return std::max(loss, T(0));
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
          "matmul shape mismatch " + shape_string(A.shape) + " * " + shape_string(B.shape));
  Tensor<T> C({A.rows(), B.cols()});
  as_matrix(C).noalias() = as_matrix(A) * as_matrix(B);
  return g.record(std::move(C), {a, b}, [a, b](Graph<T>& g, Var out) {
    auto dC = as_matrix(std::as_const(g.grad(out)));
    if (g.requires_grad(a)) as_matrix(g.grad(a)).noalias() += dC * as_matrix(g.value(b)).transpose();
    if (g.requires_grad(b)) as_matrix(g.grad(b)).noalias() += as_matrix(g.value(a)).transpose() * dC;
  });
}

template <typename T>
Var matmul_transposed(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
          "matmul_transposed shape mismatch " + shape_string(A.shape) + " * " + shape_string(B.shape) + "^T");
  Tensor<T> C({A.rows(), B.rows()});
  as_matrix(C).noalias() = as_matrix(A) * as_matrix(B).transpose();
  return g.record(std::move(C), {a, b}, [a, b](Graph<T>& g, Var out) {
    auto dC = as_matrix(std::as_const(g.grad(out)));
    if (g.requires_grad(a)) as_matrix(g.grad(a)).noalias() += dC * as_matrix(g.value(b));
    if (g.requires_grad(b)) as_matrix(g.grad(b)).noalias() += dC.transpose() * as_matrix(g.value(a));
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  require(A.shape == B.shape, "add shape mismatch " + shape_string(A.shape) + " + " + shape_string(B.shape));
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  return g.record(std::move(C), {a, b}, [a, b](Graph<T>& g, Var out) {
    const auto& dC = g.grad(out);
    for (Var in : {a, b}) {
      if (!g.requires_grad(in)) continue;
      auto& d = g.grad(in);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dC[i];
    }
  });
}

template <typename T>
Var add_bias(Graph<T>& g, Var x, Var bias) {
  const auto& X = g.value(x);
  const auto& b = g.value(bias);
  require(b.size() == X.cols(), "add_bias: bias length " + std::to_string(b.size()) + " vs " +
                                    std::to_string(X.cols()) + " columns");
  Tensor<T> Y = X;
  const std::size_t cols = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) Y[r * cols + c] += b[c];
  return g.record(std::move(Y), {x, bias}, [x, bias, cols](Graph<T>& g, Var out) {
    const auto& dY = g.grad(out);
    if (g.requires_grad(x)) {
      auto& dX = g.grad(x);
      for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += dY[i];
    }
    if (g.requires_grad(bias)) {
      auto& db = g.grad(bias);
      for (std::size_t i = 0; i < dY.size(); ++i) db[i % cols] += dY[i];
    }
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  require(A.shape == B.shape, "mul shape mismatch");
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return g.record(std::move(C), {a, b}, [a, b](Graph<T>& g, Var out) {
    const auto& dC = g.grad(out);
    if (g.requires_grad(a)) {
      const auto& Bv = g.value(b);
      auto& d = g.grad(a);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dC[i] * Bv[i];
    }
    if (g.requires_grad(b)) {
      const auto& Av = g.value(a);
      auto& d = g.grad(b);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dC[i] * Av[i];
    }
  });
}

template <typename T>
Var sum(Graph<T>& g, Var a) {
  T total = 0;
  for (T x : g.value(a).data) total += x;
  return g.record(Tensor<T>({1}, total), {a}, [a](Graph<T>& g, Var out) {
    const T d = g.grad(out)[0];
    for (auto& x : g.grad(a).data) x += d;
  });
}

template <typename T>
Var reshape(Graph<T>& g, Var a, Shape shape) {
  require(shape_size(shape) == g.value(a).size(), "reshape changes the element count");
  Tensor<T> out(std::move(shape), g.value(a).data);
  return g.record(std::move(out), {a}, [a](Graph<T>& g, Var out) {
    const auto& d = g.grad(out);
    auto& da = g.grad(a);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i];
  });
}

template <typename T>
Var gelu(Graph<T>& g, Var x) {
  Tensor<T> Y = g.value(x);
  for (auto& v : Y.data) v = gelu(v);
  return g.record(std::move(Y), {x}, [x](Graph<T>& g, Var out) {
    const auto& X = g.value(x);
    const auto& dY = g.grad(out);
    auto& dX = g.grad(x);
    const T inv_sqrt_2pi = T(0.5) * std::numbers::inv_sqrtpi_v<T> * std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const T v = X[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      dX[i] += dY[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var softmax_rows(Graph<T>& g, Var x) {
  const auto& X = g.value(x);
  Tensor<T> Y(X.shape);
  const std::size_t cols = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) {
    auto row = softmax(std::span<const T>(X.ptr() + r * cols, cols));
    std::copy(row.begin(), row.end(), Y.ptr() + r * cols);
  }
  return g.record(std::move(Y), {x}, [x, cols](Graph<T>& g, Var out) {
    const auto& Y = g.value(out);
    const auto& dY = g.grad(out);
    auto& dX = g.grad(x);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += dY[r * cols + c] * Y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) dX[r * cols + c] += Y[r * cols + c] * (dY[r * cols + c] - dot);
    }
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias, T eps) {
  const auto& X = g.value(x);
  const auto& G = g.value(gain);
  const auto& B = g.value(bias);
  const std::size_t cols = X.cols();
  require(G.size() == cols && B.size() == cols, "layer_norm length mismatch");
  require(eps > 0, "layer_norm eps must be positive");
  const std::size_t rows = X.rows();
  Tensor<T> Y(X.shape);
  std::vector<T> xhat(X.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.ptr() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(cols);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (xr[c] - mean) * rstd[r];
      Y[r * cols + c] = xhat[r * cols + c] * G[c] + B[c];
    }
  }
  return g.record(std::move(Y), {x, gain, bias},
                  [x, gain, bias, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, Var out) {
    const auto& dY = g.grad(out);
    const auto& G = g.value(gain);
    const std::size_t rows = rstd.size();
    if (g.requires_grad(gain)) {
      auto& dG = g.grad(gain);
      for (std::size_t i = 0; i < dY.size(); ++i) dG[i % cols] += dY[i] * xhat[i];
    }
    if (g.requires_grad(bias)) {
      auto& dB = g.grad(bias);
      for (std::size_t i = 0; i < dY.size(); ++i) dB[i % cols] += dY[i];
    }
    if (g.requires_grad(x)) {
      auto& dX = g.grad(x);
      const T n = static_cast<T>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_d = 0, mean_dx = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          const T dxh = dY[r * cols + c] * G[c];
          mean_d += dxh;
          mean_dx += dxh * xhat[r * cols + c];
        }
        mean_d /= n;
        mean_dx /= n;
        for (std::size_t c = 0; c < cols; ++c) {
          const T dxh = dY[r * cols + c] * G[c];
          dX[r * cols + c] += rstd[r] * (dxh - mean_d - xhat[r * cols + c] * mean_dx);
        }
      }
    }
  });
}

template <typename T>
Var embedding(Graph<T>& g, Var table, std::span<const std::int32_t> ids) {
  const auto& E = g.value(table);
  require(E.rank() == 2, "embedding table must be a matrix");
  const std::size_t rows = E.rows(), cols = E.cols();
  Tensor<T> Y({ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw std::out_of_range("embedding id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(rows) + " rows");
    }
    std::copy_n(E.ptr() + ids[i] * cols, cols, Y.ptr() + i * cols);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return g.record(std::move(Y), {table}, [table, cols, saved = std::move(saved)](Graph<T>& g, Var out) {
    const auto& dY = g.grad(out);
    auto& dE = g.grad(table);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      T* dst = dE.ptr() + saved[i] * cols;
      const T* src = dY.ptr() + i * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var gather_rows(Graph<T>& g, Var x, std::span<const std::size_t> rows) {
  const auto& X = g.value(x);
  const std::size_t cols = X.cols();
  Tensor<T> Y({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows()) throw std::out_of_range("gather_rows index out of range");
    std::copy_n(X.ptr() + rows[i] * cols, cols, Y.ptr() + i * cols);
  }
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return g.record(std::move(Y), {x}, [x, cols, saved = std::move(saved)](Graph<T>& g, Var out) {
    const auto& dY = g.grad(out);
    auto& dX = g.grad(x);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) dX[saved[i] * cols + c] += dY[i * cols + c];
    }
  });
}

template <typename T>
Var attention(Graph<T>& g, Var q, Var k, Var v, std::span<const std::uint8_t> key_mask,
              std::size_t batch, std::size_t len, std::size_t heads) {
  const auto& Q = g.value(q);
  const auto& K = g.value(k);
  const auto& V = g.value(v);
  require(Q.shape == K.shape && Q.shape == V.shape && Q.rank() == 2, "attention projections must share a shape");
  require(Q.rows() == batch * len, "attention rows must equal batch * len");
  require(key_mask.size() == batch * len, "attention mask size mismatch");
  const std::size_t dim = Q.cols();
  require(heads > 0 && dim % heads == 0, "model dim must be divisible by the head count");
  const std::size_t hd = dim / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const auto n = static_cast<Eigen::Index>(len);
  const auto h = static_cast<Eigen::Index>(hd);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(dim));

  Tensor<T> O(Q.shape);
  std::vector<T> probs(batch * heads * len * len);
  RowMat<T> scores(n, n);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* mask = key_mask.data() + b * len;
    bool any_key = false;
    for (std::size_t j = 0; j < len; ++j) any_key = any_key || mask[j];
    require(any_key, "attention row without any unmasked key");
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t off = b * len * dim + hh * hd;
      ConstStridedMat<T> Qh(Q.ptr() + off, n, h, stride);
      ConstStridedMat<T> Kh(K.ptr() + off, n, h, stride);
      ConstStridedMat<T> Vh(V.ptr() + off, n, h, stride);
      scores.noalias() = (Qh * Kh.transpose()) * scale;
      MapMat<T> P(probs.data() + (b * heads + hh) * len * len, n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
          if (!mask[j]) scores(i, j) = -std::numeric_limits<T>::infinity();
          mx = std::max(mx, scores(i, j));
        }
        T total = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
          P(i, j) = mask[j] ? std::exp(scores(i, j) - mx) : T(0);
          total += P(i, j);
        }
        P.row(i) /= total;
      }
      StridedMat<T>(O.ptr() + off, n, h, stride).noalias() = P * Vh;
    }
  }
  return g.record(std::move(O), {q, k, v},
                  [q, k, v, batch, len, heads, hd, dim, scale, probs = std::move(probs)](Graph<T>& g, Var out) {
    const auto n = static_cast<Eigen::Index>(len);
    const auto h = static_cast<Eigen::Index>(hd);
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(dim));
    const auto& dO = g.grad(out);
    const auto& Q = g.value(q);
    const auto& K = g.value(k);
    const auto& V = g.value(v);
    T* dQ = g.requires_grad(q) ? g.grad(q).ptr() : nullptr;
    T* dK = g.requires_grad(k) ? g.grad(k).ptr() : nullptr;
    T* dV = g.requires_grad(v) ? g.grad(v).ptr() : nullptr;
    RowMat<T> dP(n, n), dS(n, n);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t hh = 0; hh < heads; ++hh) {
        const std::size_t off = b * len * dim + hh * hd;
        ConstMapMat<T> P(probs.data() + (b * heads + hh) * len * len, n, n);
        ConstStridedMat<T> dOh(dO.ptr() + off, n, h, stride);
        ConstStridedMat<T> Qh(Q.ptr() + off, n, h, stride);
        ConstStridedMat<T> Kh(K.ptr() + off, n, h, stride);
        ConstStridedMat<T> Vh(V.ptr() + off, n, h, stride);
        if (dV) StridedMat<T>(dV + off, n, h, stride).noalias() += P.transpose() * dOh;
        if (!dQ && !dK) continue;
        dP.noalias() = dOh * Vh.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
          const T dot = P.row(i).dot(dP.row(i));
          dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
        }
        if (dQ) StridedMat<T>(dQ + off, n, h, stride).noalias() += (dS * Kh) * scale;
        if (dK) StridedMat<T>(dK + off, n, h, stride).noalias() += (dS.transpose() * Qh) * scale;
      }
    }
  });
}

template <typename T>
Var dropout(Graph<T>& g, Var x, double rate, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const auto& X = g.value(x);
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = T(1) / static_cast<T>(1.0 - rate);
  std::vector<T> mask(X.size());
  for (auto& m : mask) m = keep(rng) ? scale : T(0);
  Tensor<T> Y = X;
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= mask[i];
  return g.record(std::move(Y), {x}, [x, mask = std::move(mask)](Graph<T>& g, Var out) {
    const auto& dY = g.grad(out);
    auto& dX = g.grad(x);
    for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += dY[i] * mask[i];
  });
}

template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, std::span<const std::int32_t> targets) {
  const auto& L = g.value(logits);
  const std::size_t cols = L.cols();
  require(targets.size() == L.rows(), "cross_entropy: one target per logit row required");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == kIgnoreIndex) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= cols) {
      throw std::out_of_range("cross_entropy target " + std::to_string(targets[r]) + " outside " +
                              std::to_string(cols) + " classes");
    }
    rows.push_back(r);
  }
  if (rows.empty()) return g.constant(Tensor<T>({1}, T(0)));

  std::vector<T> probs(rows.size() * cols);
  T total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::span<const T> row(L.ptr() + rows[i] * cols, cols);
    auto lp = log_softmax(row);
    total -= lp[targets[rows[i]]];
    for (std::size_t c = 0; c < cols; ++c) probs[i * cols + c] = std::exp(lp[c]);
  }
  const T loss = total / static_cast<T>(rows.size());
  if (!std::isfinite(loss)) throw DataError("non-finite cross-entropy loss");

  std::vector<std::int32_t> picked;
  for (auto r : rows) picked.push_back(targets[r]);
  return g.record(Tensor<T>({1}, loss), {logits},
                  [logits, cols, rows = std::move(rows), picked = std::move(picked),
                   probs = std::move(probs)](Graph<T>& g, Var out) {
    const T scale = g.grad(out)[0] / static_cast<T>(rows.size());
    auto& dL = g.grad(logits);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      T* d = dL.ptr() + rows[i] * cols;
      for (std::size_t c = 0; c < cols; ++c) d[c] += scale * probs[i * cols + c];
      d[picked[i]] -= scale;
    }
  });
}

#define CODELID_INSTANTIATE_OPS(T)                                                                       \
  template std::vector<T> softmax<T>(std::span<const T>);                                               \
  template std::vector<T> log_softmax<T>(std::span<const T>);                                           \
  template std::vector<T> layer_norm<T>(std::span<const T>, std::span<const T>, std::span<const T>, T); \
  template T cross_entropy<T>(std::span<const T>, std::size_t);                                         \
  template T gelu<T>(T);                                                                                \
  template Var matmul<T>(Graph<T>&, Var, Var);                                                          \
  template Var matmul_transposed<T>(Graph<T>&, Var, Var);                                               \
  template Var add<T>(Graph<T>&, Var, Var);                                                             \
  template Var add_bias<T>(Graph<T>&, Var, Var);                                                        \
  template Var mul<T>(Graph<T>&, Var, Var);                                                             \
  template Var sum<T>(Graph<T>&, Var);                                                                  \
  template Var reshape<T>(Graph<T>&, Var, Shape);                                                       \
  template Var gelu<T>(Graph<T>&, Var);                                                                 \
  template Var softmax_rows<T>(Graph<T>&, Var);                                                         \
  template Var layer_norm<T>(Graph<T>&, Var, Var, Var, T);                                              \
  template Var embedding<T>(Graph<T>&, Var, std::span<const std::int32_t>);                             \
  template Var gather_rows<T>(Graph<T>&, Var, std::span<const std::size_t>);                            \
  template Var attention<T>(Graph<T>&, Var, Var, Var, std::span<const std::uint8_t>, std::size_t,       \
                            std::size_t, std::size_t);                                                  \
  template Var dropout<T>(Graph<T>&, Var, double, std::mt19937_64&);                                    \
  template Var cross_entropy<T>(Graph<T>&, Var, std::span<const std::int32_t>);

CODELID_INSTANTIATE_OPS(float)
CODELID_INSTANTIATE_OPS(double)

}  // namespace codelid::nn
