#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <vector>

#include "relicl/autodiff/tensor.hpp"

namespace relicl::ad {

// Every op treats its inputs as matrices [rows, cols] over the last axis.
// Reductions run in a fixed sequential order so results are bit-stable.

namespace ops_detail {

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
}

template <class T>
void accumulate(Node<T>& parent, const std::vector<T>& g) {
  auto& pg = parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
}

// C[n,m] += A[n,k] * B[k,m]
template <class T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* __restrict ci = c + i * m;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* __restrict bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[n,k] += G[n,m] * B[k,m]^T, as axpy rows over a transposed copy of B.
template <class T>
void gemm_nt(const T* __restrict g, const T* __restrict b, T* __restrict c, std::size_t n, std::size_t k,
             std::size_t m) {
  std::vector<T> bt(k * m);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < m; ++j) bt[j * k + p] = b[p * m + j];
  gemm_nn(g, bt.data(), c, n, m, k);
}

// C[k,m] += A[n,k]^T * G[n,m]
template <class T>
void gemm_tn(const T* __restrict a, const T* __restrict g, T* __restrict c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    const T* __restrict gi = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      T* __restrict cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * gi[j];
    }
  }
}

}  // namespace ops_detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.shape().size() != 2 || a.cols() != b.dim(0))
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " are incompatible");
  const std::size_t n = a.rows(), k = a.cols(), m = b.dim(1);
  std::vector<T> out(n * m, T(0));
  op_count().matmul_madds += n * k * m;
  ops_detail::gemm_nn(a.data(), b.data(), out.data(), n, k, m);
  Shape s = a.shape();
  s.back() = m;
  return make_result<T>(s, std::move(out), {a, b}, [a, b, n, k, m](Node<T>& self) mutable {
    if (a.requires_grad()) ops_detail::gemm_nt(self.grad.data(), b.data(), a.grad_buffer().data(), n, k, m);
    if (b.requires_grad()) ops_detail::gemm_tn(a.data(), self.grad.data(), b.grad_buffer().data(), n, k, m);
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.shape().size() != 2) throw ShapeError("transpose needs a matrix, got " + shape_str(a.shape()));
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<T> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.data()[i * m + j];
  return make_result<T>({m, n}, std::move(out), {a}, [a, n, m](Node<T>& self) mutable {
    auto& g = a.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[j * n + i];
  });
}

/// a + b for equal shapes, or a + b broadcast over the leading axes when b is
/// a single row of length cols(a).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) mutable {
      if (a.requires_grad()) ops_detail::accumulate(a.node(), self.grad);
      if (b.requires_grad()) ops_detail::accumulate(b.node(), self.grad);
    });
  }
  if (b.size() != a.cols() || b.rows() != 1)
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " are incompatible");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a.data()[i * d + j] + b.data()[j];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b, n, d](Node<T>& self) mutable {
    if (a.requires_grad()) ops_detail::accumulate(a.node(), self.grad);
    if (b.requires_grad()) {
      auto& g = b.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  ops_detail::require_same(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) mutable {
    if (a.requires_grad()) ops_detail::accumulate(a.node(), self.grad);
    if (b.requires_grad()) {
      auto& g = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  ops_detail::require_same(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) mutable {
    if (a.requires_grad()) {
      auto& g = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a.data()[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, std::type_identity_t<T> s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result<T>(a.shape(), std::move(out), {a}, [a, s](Node<T>& self) mutable {
    auto& g = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

namespace ops_detail {

template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [a, df](Node<T>& self) mutable {
    auto& g = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(a.data()[i], self.value[i]);
  });
}

}  // namespace ops_detail

/// tanh approximation of GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T c = T(0.7978845608028654), k = T(0.044715);
  return ops_detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T u = c * (x + k * x * x * x);
        const T t = std::tanh(u);
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * k * x * x);
      });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return ops_detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return ops_detail::unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

/// Row-wise normalization to zero mean and unit variance, then gamma * x + beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " with gamma " + shape_str(gamma.shape()) +
                     " and beta " + shape_str(beta.shape()));
  std::vector<T> out(x.size()), xhat(x.size()), rstd(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.data() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= T(d);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xi[j] - mean) * rstd[i];
      out[i * d + j] = xhat[i * d + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), n, d](Node<T>& self) mutable {
                          const T* g = self.grad.data();
                          if (gamma.requires_grad() || beta.requires_grad()) {
                            auto& gg = gamma.grad_buffer();
                            auto& gb = beta.grad_buffer();
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < d; ++j) {
                                gg[j] += g[i * d + j] * xhat[i * d + j];
                                gb[j] += g[i * d + j];
                              }
                          }
                          if (x.requires_grad()) {
                            auto& gx = x.grad_buffer();
                            for (std::size_t i = 0; i < n; ++i) {
                              T s1 = 0, s2 = 0;
                              for (std::size_t j = 0; j < d; ++j) {
                                const T dy = g[i * d + j] * gamma.data()[j];
                                s1 += dy;
                                s2 += dy * xhat[i * d + j];
                              }
                              for (std::size_t j = 0; j < d; ++j) {
                                const T dy = g[i * d + j] * gamma.data()[j];
                                gx[i * d + j] += rstd[i] * (dy - s1 / T(d) - xhat[i * d + j] * s2 / T(d));
                              }
                            }
                          }
                        });
}

/// Column-wise standardization of every row by the mean and variance of the
/// first `n_ref` rows, then gamma * x + beta.
template <class T>
Tensor<T> reference_norm(const Tensor<T>& x, std::size_t n_ref, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps = T(1e-5)) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n_ref == 0 || n_ref > n) throw ShapeError("reference_norm: reference rows must be in [1, " + std::to_string(n) + "]");
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError("reference_norm: input " + shape_str(x.shape()) + " with gamma " + shape_str(gamma.shape()) +
                     " and beta " + shape_str(beta.shape()));
  std::vector<T> mean(d, T(0)), rstd(d, T(0)), xhat(x.size()), out(x.size());
  const T* xv = x.data();
  for (std::size_t i = 0; i < n_ref; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += xv[i * d + j];
  for (auto& m : mean) m /= T(n_ref);
  for (std::size_t i = 0; i < n_ref; ++i)
    for (std::size_t j = 0; j < d; ++j) rstd[j] += (xv[i * d + j] - mean[j]) * (xv[i * d + j] - mean[j]);
  for (auto& r : rstd) r = T(1) / std::sqrt(r / T(n_ref) + eps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mean[j]) * rstd[j];
      out[i * d + j] = xhat[i * d + j] * gamma.data()[j] + beta.data()[j];
    }
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), n, n_ref, d](Node<T>& self) mutable {
        const T* g = self.grad.data();
        if (gamma.requires_grad() || beta.requires_grad()) {
          auto& gg = gamma.grad_buffer();
          auto& gb = beta.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += g[i * d + j] * xhat[i * d + j];
              gb[j] += g[i * d + j];
            }
        }
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        std::vector<T> s1(d, T(0)), s2(d, T(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const T dy = g[i * d + j] * gamma.data()[j];
            s1[j] += dy;
            s2[j] += dy * xhat[i * d + j];
            gx[i * d + j] += rstd[j] * dy;
          }
        for (std::size_t i = 0; i < n_ref; ++i)
          for (std::size_t j = 0; j < d; ++j)
            gx[i * d + j] -= rstd[j] / T(n_ref) * (s1[j] + s2[j] * xhat[i * d + j]);
      });
}

/// Softmax along the last axis. -inf entries get probability 0.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.data() + i * d;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < d; ++j) mx = std::max(mx, xi[j]);
    T s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = std::isinf(mx) ? T(0) : std::exp(xi[j] - mx);
      s += out[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = s > 0 ? out[i * d + j] / s : T(0);
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [x, n, d](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.value[i * d + j] * (self.grad[i * d + j] - dot);
    }
  });
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.data() + i * d;
    T mx = *std::max_element(xi, xi + d);
    T s = 0;
    for (std::size_t j = 0; j < d; ++j) s += std::exp(xi[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xi[j] - lse;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [x, n, d](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) s += self.grad[i * d + j];
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i * d + j] - std::exp(self.value[i * d + j]) * s;
    }
  });
}

/// Replaces entries whose mask byte is set with `value`; their gradient is 0.
template <class T>
Tensor<T> masked_fill(const Tensor<T>& x, const std::vector<std::uint8_t>& mask, std::type_identity_t<T> value) {
  if (mask.size() != x.size())
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " for shape " + shape_str(x.shape()));
  std::vector<T> out(x.value());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  return make_result<T>(x.shape(), std::move(out), {x}, [x, mask](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!mask[i]) g[i] += self.grad[i];
  });
}

/// Rows idx[i] of `table` (embedding lookup / gather).
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::vector<std::uint32_t> idx) {
  const std::size_t d = table.cols(), n = table.rows();
  std::vector<T> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of " + std::to_string(n));
    std::copy_n(table.data() + idx[i] * d, d, out.data() + i * d);
  }
  const std::size_t rows = idx.size();
  return make_result<T>({rows, d}, std::move(out), {table}, [table, idx = std::move(idx), d](Node<T>& self) mutable {
    auto& g = table.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
  });
}

template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::vector<std::uint32_t> idx) {
  return gather_rows(table, std::move(idx));
}

/// out[idx[i]] += x[i]; output has `n` rows.
template <class T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::vector<std::uint32_t> idx, std::size_t n) {
  const std::size_t d = x.cols();
  if (idx.size() != x.rows()) throw ShapeError("scatter_add_rows: index count does not match rows");
  std::vector<T> out(n * d, T(0));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw ShapeError("scatter_add_rows: index out of range");
    for (std::size_t j = 0; j < d; ++j) out[idx[i] * d + j] += x.data()[i * d + j];
  }
  return make_result<T>({n, d}, std::move(out), {x}, [x, idx = std::move(idx), d](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[idx[i] * d + j];
  });
}

/// Concatenation along the last axis of matrices with equal row counts.
template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t n = parts[0].rows();
  std::size_t d = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row counts differ (" + shape_str(p.shape()) + ")");
    d += p.cols();
  }
  std::vector<T> out(n * d);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(p.data() + i * p.cols(), p.cols(), out.data() + i * d + off);
    off += p.cols();
  }
  return make_result<T>({n, d}, std::move(out), parts, [parts, n, d](Node<T>& self) mutable {
    std::size_t off = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) {
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < p.cols(); ++j) g[i * p.cols() + j] += self.grad[i * d + off + j];
      }
      off += p.cols();
    }
  });
}

/// Concatenation along the leading axis of matrices with equal column counts.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t d = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw ShapeError("concat_rows: column counts differ (" + shape_str(p.shape()) + ")");
    n += p.rows();
  }
  std::vector<T> out;
  out.reserve(n * d);
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  return make_result<T>({n, d}, std::move(out), parts, [parts](Node<T>& self) mutable {
    std::size_t off = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) {
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < p.size(); ++i) g[i] += self.grad[off + i];
      }
      off += p.size();
    }
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  return axis == 0 ? concat_rows(parts) : concat_cols(parts);
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.rows(), d = x.cols();
  if (begin > end || end > d) throw ShapeError("slice_cols out of range for " + shape_str(x.shape()));
  const std::size_t w = end - begin;
  std::vector<T> out(n * w);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.data() + i * d + begin, w, out.data() + i * w);
  return make_result<T>({n, w}, std::move(out), {x}, [x, n, d, w, begin](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * d + begin + j] += self.grad[i * w + j];
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) throw ShapeError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  return make_result<T>(std::move(shape), x.value(), {x}, [x](Node<T>& self) mutable {
    ops_detail::accumulate(x.node(), self.grad);
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.value()) s += v;
  return make_result<T>({1}, {s}, {x}, [x](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

/// Mean over all entries, or along `axis` (0: over rows -> [1, cols];
/// 1: over columns -> [rows, 1]).
template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.size()));
}

template <class T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  const std::size_t n = x.rows(), d = x.cols();
  if (axis == 0) {
    std::vector<T> out(d, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[j] += x.data()[i * d + j];
    for (auto& v : out) v /= T(n);
    return make_result<T>({1, d}, std::move(out), {x}, [x, n, d](Node<T>& self) mutable {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[j] / T(n);
    });
  }
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i] += x.data()[i * d + j];
    out[i] /= T(d);
  }
  return make_result<T>({n, 1}, std::move(out), {x}, [x, n, d](Node<T>& self) mutable {
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i] / T(d);
  });
}

/// Mean negative log-likelihood of integer targets under row-wise logits.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::uint32_t>& targets) {
  if (targets.size() != logits.rows()) throw ShapeError("cross_entropy: target count does not match rows");
  auto lsm = log_softmax(logits);
  const std::size_t n = lsm.rows(), c = lsm.cols();
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= c) throw ShapeError("cross_entropy: class index out of range");
    loss -= lsm.data()[i * c + targets[i]];
  }
  loss /= T(n);
  return make_result<T>({1}, {loss}, {lsm}, [lsm, targets, n, c](Node<T>& self) mutable {
    auto& g = lsm.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i * c + targets[i]] -= self.grad[0] / T(n);
  });
}

/// Mean Huber loss between a column of predictions and targets.
template <class T>
Tensor<T> huber(const Tensor<T>& pred, const std::vector<T>& target, T delta = T(1)) {
  if (pred.size() != target.size()) throw ShapeError("huber: prediction and target sizes differ");
  const std::size_t n = pred.size();
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T r = std::abs(pred.data()[i] - target[i]);
    loss += r <= delta ? T(0.5) * r * r : delta * (r - T(0.5) * delta);
  }
  loss /= T(n);
  return make_result<T>({1}, {loss}, {pred}, [pred, target, delta, n](Node<T>& self) mutable {
    auto& g = pred.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const T r = pred.data()[i] - target[i];
      g[i] += self.grad[0] / T(n) * std::clamp(r, -delta, delta);
    }
  });
}

}  // namespace relicl::ad
