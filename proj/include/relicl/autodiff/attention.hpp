#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "relicl/autodiff/tensor.hpp"

namespace relicl::ad {

/// Sparse key lists in CSR form: query i attends to keys idx[offsets[i] ..
/// offsets[i + 1]).
struct KeyLists {
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::uint32_t> idx;

  std::size_t queries() const { return offsets.size() - 1; }
  void push(std::uint32_t key) { idx.push_back(key); }
  void close() { offsets.push_back(idx.size()); }
};

/// Multi-head scaled dot-product attention where each query sees only its
/// own key list. Cost is O(total keys * d). A query with an empty list
/// outputs zeros.
template <class T>
Tensor<T> segment_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            std::shared_ptr<const KeyLists> lists, std::size_t heads) {
  const std::size_t nq = q.rows(), d = q.cols(), nk = k.rows();
  if (k.cols() != d || v.cols() != d || v.rows() != nk)
    throw ShapeError("segment_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                     shape_str(v.shape()));
  if (lists->queries() != nq)
    throw ShapeError("segment_attention: " + std::to_string(lists->queries()) + " key lists for " +
                     std::to_string(nq) + " queries");
  if (heads == 0 || d % heads != 0)
    throw ShapeError("segment_attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                     " heads");
  for (auto i : lists->idx)
    if (i >= nk) throw ShapeError("segment_attention: key index out of range");
  const std::size_t dh = d / heads;
  const T inv = T(1) / std::sqrt(T(dh));
  const auto& off = lists->offsets;
  const auto& idx = lists->idx;
  auto probs = std::make_shared<std::vector<T>>(idx.size() * heads);
  std::vector<T> out(nq * d, T(0));
  op_count().attention_scores += idx.size() * heads;
  const T* Q = q.data();
  const T* K = k.data();
  const T* V = v.data();
  for (std::size_t i = 0; i < nq; ++i) {
    const std::size_t b = off[i], e = off[i + 1];
    if (b == e) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      const T* qi = Q + i * d + h * dh;
      T* p = probs->data() + b * heads;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = b; j < e; ++j) {
        const T* kj = K + idx[j] * d + h * dh;
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        s *= inv;
        p[(j - b) * heads + h] = s;
        mx = std::max(mx, s);
      }
      T z = 0;
      for (std::size_t j = b; j < e; ++j) {
        T& pj = p[(j - b) * heads + h];
        pj = std::exp(pj - mx);
        z += pj;
      }
      T* oi = out.data() + i * d + h * dh;
      for (std::size_t j = b; j < e; ++j) {
        T& pj = p[(j - b) * heads + h];
        pj /= z;
        const T* vj = V + idx[j] * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += pj * vj[c];
      }
    }
  }
  return make_result<T>(
      {nq, d}, std::move(out), {q, k, v}, [q, k, v, lists, probs, heads, dh, d, inv](Node<T>& self) mutable {
        const auto& off = lists->offsets;
        const auto& idx = lists->idx;
        const std::size_t nq = off.size() - 1;
        std::vector<T>* gq = q.requires_grad() ? &q.grad_buffer() : nullptr;
        std::vector<T>* gk = k.requires_grad() ? &k.grad_buffer() : nullptr;
        std::vector<T>* gv = v.requires_grad() ? &v.grad_buffer() : nullptr;
        const T* Q = q.data();
        const T* K = k.data();
        const T* V = v.data();
        std::vector<T> dp;
        for (std::size_t i = 0; i < nq; ++i) {
          const std::size_t b = off[i], e = off[i + 1];
          if (b == e) continue;
          dp.resize(e - b);
          for (std::size_t h = 0; h < heads; ++h) {
            const T* go = self.grad.data() + i * d + h * dh;
            const T* p = probs->data() + b * heads;
            T pdp = 0;
            for (std::size_t j = b; j < e; ++j) {
              const T* vj = V + idx[j] * d + h * dh;
              T s = 0;
              for (std::size_t c = 0; c < dh; ++c) s += go[c] * vj[c];
              dp[j - b] = s;
              pdp += p[(j - b) * heads + h] * s;
            }
            const T* qi = Q + i * d + h * dh;
            for (std::size_t j = b; j < e; ++j) {
              const T pj = p[(j - b) * heads + h];
              const T ds = pj * (dp[j - b] - pdp) * inv;
              const std::size_t kb = idx[j] * d + h * dh;
              if (gq) {
                T* g = gq->data() + i * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) g[c] += ds * K[kb + c];
              }
              if (gk) {
                T* g = gk->data() + kb;
                for (std::size_t c = 0; c < dh; ++c) g[c] += ds * qi[c];
              }
              if (gv) {
                T* g = gv->data() + kb;
                for (std::size_t c = 0; c < dh; ++c) g[c] += pj * go[c];
              }
            }
          }
        }
      });
}

}  // namespace relicl::ad
