#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "relicl/autodiff/attention.hpp"
#include "relicl/autodiff/ops.hpp"
#include "relicl/autodiff/optim.hpp"
#include "relicl/model/batch.hpp"
#include "relicl/model/config.hpp"

namespace relicl::model {

template <class T>
using Tensor = ad::Tensor<T>;

/// Raw network outputs for the prediction rows of a batch.
template <class T>
struct Output {
  Tensor<T> out;        // log-probabilities (P x K) or normalized values (P x 1)
  Tensor<T> embedding;  // P x d
};

/// Hierarchical-attention relational ICL network: table encoder (column and
/// row attention), graph encoder over sampled PK-FK edges, cross-sample
/// attention over context examples, and task heads.
template <class T>
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(hash_combine(seed, 0x30de1));
    const std::size_t d = cfg_.d, dh = cfg_.hash_dim;
    const std::size_t tw = 2 * dh + kNumFeats + kTimeFeats, nw = 2 + 2 * dh, lw = kNumFeats + dh;
    linear("tok.in", tw, d, rng);
    p_.add_normal("tok.type", {kNumTokenTypes, d}, rng, 0.5);
    for (std::size_t i = 0; i < cfg_.table_blocks; ++i) {
      const auto b = "table" + std::to_string(i);
      attention(b + ".col", rng);
      p_.add_normal(b + ".inducing", {cfg_.table_inducing, d}, rng, 1.0);
      attention(b + ".induce", rng);
      attention(b + ".read", rng);
      ffn(b + ".ffn", rng);
    }
    p_.add_normal("pool.query", {1, d}, rng, 1.0);
    attention("pool", rng);
    norm("pool.out");
    linear("node.in", nw, d, rng);
    p_.add_normal("node.hop", {cfg_.max_hops + 1, d}, rng, 0.5);
    p_.add_normal("graph.global", {1, d}, rng, 1.0);
    for (std::size_t i = 0; i < cfg_.graph_blocks; ++i) {
      const auto b = "graph" + std::to_string(i);
      attention(b + ".attn", rng);
      p_.add_normal(b + ".dir", {3, d}, rng, 0.5);
      ffn(b + ".ffn", rng);
    }
    norm("root");
    linear("label.in", lw, d, rng);
    p_.add_normal("pred.mask", {1, d}, rng, 0.5);
    for (std::size_t i = 0; i < cfg_.cross_blocks; ++i) {
      const auto b = "cross" + std::to_string(i);
      p_.add_normal(b + ".inducing", {cfg_.cross_inducing, d}, rng, 1.0);
      attention(b + ".induce", rng);
      attention(b + ".read", rng);
      ffn(b + ".ffn_ctx", rng);
      attention(b + ".pred", rng);
      ffn(b + ".ffn_pred", rng);
    }
    norm("head");
    linear("reg", d, 1, rng);
    linear("cls.class", dh, d, rng);
    norm("cls.key");
    p_.add_normal("cls.wq", {d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    p_.add_normal("cls.wk", {d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    norm("bucket.key");
    p_.add_normal("bucket.wq", {d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    p_.add_normal("bucket.wk", {d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  }

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore<T>& params() { return p_; }
  const ad::ParamStore<T>& params() const { return p_; }

  /// Row embedding of every sampled node after the table encoder.
  Tensor<T> table_encode(const Batch& b) const {
    using namespace ad;
    auto x = add(add(matmul(cst({b.n_tokens, b.token_width}, b.token_feats), w("tok.in.w")), w("tok.in.b")),
                 embedding_lookup(w("tok.type"), b.token_type));
    const std::size_t m = cfg_.table_inducing;
    std::vector<std::uint32_t> ind_idx(b.n_groups * m);
    for (std::size_t i = 0; i < ind_idx.size(); ++i) ind_idx[i] = static_cast<std::uint32_t>(i % m);
    for (std::size_t i = 0; i < cfg_.table_blocks; ++i) {
      const auto bn = "table" + std::to_string(i);
      x = add(x, self_attend(bn + ".col", x, b.row_lists));
      auto ind = gather_rows(w(bn + ".inducing"), ind_idx);
      auto h = add(ind, attend(bn + ".induce", ind, x, b.induce_lists));
      x = add(x, attend(bn + ".read", x, h, b.read_lists));
      x = add(x, feed_forward(bn + ".ffn", x));
    }
    auto q = gather_rows(w("pool.query"), std::vector<std::uint32_t>(b.n_nodes, 0));
    return ln("pool.out", attend("pool", q, x, b.pool_lists));
  }

  /// Root state of every example after graph attention.
  Tensor<T> graph_encode(const Batch& b, const Tensor<T>& rows) const {
    using namespace ad;
    const std::size_t n = b.n_nodes, E = b.n_context + b.n_pred;
    auto hn = add(add(rows, add(matmul(cst({n, b.node_width}, b.node_feats), w("node.in.w")), w("node.in.b"))),
                  embedding_lookup(w("node.hop"), b.node_hop));
    auto h = concat_rows<T>({hn, gather_rows(w("graph.global"), std::vector<std::uint32_t>(E, 0))});
    std::vector<std::uint32_t> node_idx(n), glob_idx(E);
    for (std::size_t i = 0; i < n; ++i) node_idx[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < E; ++i) glob_idx[i] = static_cast<std::uint32_t>(n + i);
    for (std::size_t i = 0; i < cfg_.graph_blocks; ++i) {
      const auto bn = "graph" + std::to_string(i) + ".attn";
      auto s = layer_norm(h, w(bn + ".lnq.g"), w(bn + ".lnq.b"));
      auto q = matmul(s, w(bn + ".wq"));
      auto k = matmul(s, w(bn + ".wk"));
      auto v = matmul(s, w(bn + ".wv"));
      auto kn = gather_rows(k, node_idx), vn = gather_rows(v, node_idx);
      const auto& dir = w("graph" + std::to_string(i) + ".dir");
      auto ks = concat_rows<T>({add(kn, gather_rows(dir, {0})), add(kn, gather_rows(dir, {1})),
                                add(kn, gather_rows(dir, {2})), gather_rows(k, glob_idx)});
      auto vs = concat_rows<T>({vn, vn, vn, gather_rows(v, glob_idx)});
      h = add(h, matmul(segment_attention(q, ks, vs, b.graph_lists, cfg_.heads), w(bn + ".wo")));
      h = add(h, feed_forward("graph" + std::to_string(i) + ".ffn", h));
    }
    return gather_rows(h, b.roots);
  }

  /// Prediction-row states after cross-sample attention, plus the final
  /// context states (used for class prototypes).
  std::pair<Tensor<T>, Tensor<T>> cross_sample(const Batch& b, Tensor<T> roots) const {
    using namespace ad;
    const std::size_t C = b.n_context, P = b.n_pred;
    std::vector<std::uint32_t> ci(C), pi(P), ind(cfg_.cross_inducing);
    for (std::size_t i = 0; i < C; ++i) ci[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < P; ++i) pi[i] = static_cast<std::uint32_t>(C + i);
    for (std::size_t i = 0; i < ind.size(); ++i) ind[i] = static_cast<std::uint32_t>(i);
    // Context examples define the coordinate frame: per-dimension standardization
    // with context statistics, applied to context and prediction roots alike.
    roots = ad::reference_norm(roots, C, w("root.g"), w("root.b"), T(1e-3));
    auto u = add(gather_rows(roots, ci),
                 add(matmul(cst({C, b.label_width}, b.label_feats), w("label.in.w")), w("label.in.b")));
    auto p = add(gather_rows(roots, pi), w("pred.mask"));
    for (std::size_t i = 0; i < cfg_.cross_blocks; ++i) {
      const auto bn = "cross" + std::to_string(i);
      auto ip = gather_rows(w(bn + ".inducing"), ind);
      auto h = add(ip, attend(bn + ".induce", ip, u, b.ctx_induce));
      u = add(u, attend(bn + ".read", u, h, b.ctx_read));
      u = add(u, feed_forward(bn + ".ffn_ctx", u));
      p = add(p, attend(bn + ".pred", p, u, b.pred_ctx));
      p = add(p, feed_forward(bn + ".ffn_pred", p));
    }
    return {ln("head", p), u};
  }

  Output<T> forward(const Batch& b) const {
    using namespace ad;
    if (b.n_context == 0) throw InputError("empty context");
    if (b.n_pred == 0) throw InputError("no prediction rows");
    auto rows = table_encode(b);
    auto roots = graph_encode(b, rows);
    auto [h, u] = cross_sample(b, roots);
    Output<T> o;
    o.embedding = h;
    if (b.type == pql::TaskType::kRegression) {
      o.out = add(matmul(h, w("reg.w")), w("reg.b"));
      return o;
    }
    o.out = classify(b, h, u);
    return o;
  }

  /// Mean training loss over the (labeled) prediction rows.
  Tensor<T> loss(const Batch& b, const Output<T>& o) const {
    for (auto l : b.pred_labeled)
      if (!l) throw InputError("loss needs a label on every prediction row");
    if (b.type == pql::TaskType::kRegression) {
      std::vector<T> y(b.pred_norm.begin(), b.pred_norm.end());
      return ad::huber(o.out, y, T(1));
    }
    return ad::cross_entropy(o.out, b.pred_class);
  }

 private:
  Tensor<T> cst(ad::Shape shape, const std::vector<double>& v) const {
    return Tensor<T>::from(std::move(shape), std::vector<T>(v.begin(), v.end()));
  }
  const Tensor<T>& w(const std::string& name) const { return p_.get(name); }

  void linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    p_.add_normal(name + ".w", {in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    p_.add_const(name + ".b", {1, out}, T(0));
  }
  void norm(const std::string& name) {
    p_.add_const(name + ".g", {1, cfg_.d}, T(1));
    p_.add_const(name + ".b", {1, cfg_.d}, T(0));
  }
  void attention(const std::string& name, Rng& rng) {
    const std::size_t d = cfg_.d;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    norm(name + ".lnq");
    norm(name + ".lnk");
    p_.add_normal(name + ".wq", {d, d}, rng, s);
    p_.add_normal(name + ".wk", {d, d}, rng, s);
    p_.add_normal(name + ".wv", {d, d}, rng, s);
    p_.add_normal(name + ".wo", {d, d}, rng, 0.5 * s);
  }
  void ffn(const std::string& name, Rng& rng) {
    norm(name + ".ln");
    linear(name + ".l1", cfg_.d, 2 * cfg_.d, rng);
    linear(name + ".l2", 2 * cfg_.d, cfg_.d, rng);
    auto& w2 = p_.get(name + ".l2.w").value();
    for (auto& x : w2) x *= T(0.5);
  }

  Tensor<T> ln(const std::string& name, const Tensor<T>& x) const {
    return ad::layer_norm(x, w(name + ".g"), w(name + ".b"));
  }
  Tensor<T> attend(const std::string& name, const Tensor<T>& xq, const Tensor<T>& xkv, const ListsPtr& lists) const {
    using namespace ad;
    auto q = matmul(ln(name + ".lnq", xq), w(name + ".wq"));
    auto s = ln(name + ".lnk", xkv);
    auto k = matmul(s, w(name + ".wk"));
    auto v = matmul(s, w(name + ".wv"));
    return matmul(segment_attention(q, k, v, lists, cfg_.heads), w(name + ".wo"));
  }
  Tensor<T> self_attend(const std::string& name, const Tensor<T>& x, const ListsPtr& lists) const {
    using namespace ad;
    auto s = ln(name + ".lnq", x);
    auto q = matmul(s, w(name + ".wq"));
    auto k = matmul(s, w(name + ".wk"));
    auto v = matmul(s, w(name + ".wv"));
    return matmul(segment_attention(q, k, v, lists, cfg_.heads), w(name + ".wo"));
  }
  Tensor<T> feed_forward(const std::string& name, const Tensor<T>& x) const {
    using namespace ad;
    auto h = gelu(add(matmul(ln(name + ".ln", x), w(name + ".l1.w")), w(name + ".l1.b")));
    return add(matmul(h, w(name + ".l2.w")), w(name + ".l2.b"));
  }

  /// Class embedding = projected class hash + mean final context state of the
  /// class; logits are scaled dot products with the prediction state.
  Tensor<T> classify(const Batch& b, const Tensor<T>& h, const Tensor<T>& u) const {
    using namespace ad;
    const std::size_t K = b.n_classes, d = cfg_.d, P = b.n_pred;
    std::vector<double> inv(K * d, 0.0);
    std::vector<std::size_t> count(K, 0);
    for (auto c : b.context_class) ++count[c];
    for (std::size_t c = 0; c < K; ++c)
      if (count[c])
        for (std::size_t j = 0; j < d; ++j) inv[c * d + j] = 1.0 / static_cast<double>(count[c]);
    auto proto = mul(scatter_add_rows(u, b.context_class, K), cst({K, d}, inv));
    auto e = add(add(matmul(cst({K, cfg_.hash_dim}, b.class_hash), w("cls.class.w")), w("cls.class.b")), proto);
    const T inv_sqrt = T(1) / std::sqrt(T(d));
    auto logits = scale(matmul(matmul(h, w("cls.wq")), transpose(matmul(ln("cls.key", e), w("cls.wk")))), inv_sqrt);
    if (b.buckets.empty()) return log_softmax(logits);
    // Two-stage head: p(class) = p(bucket) * p(class | bucket).
    const std::size_t nb = b.buckets.size();
    std::vector<double> avg(nb * K, 0.0);
    for (std::size_t k = 0; k < nb; ++k)
      for (auto c : b.buckets[k]) avg[k * K + c] = 1.0 / static_cast<double>(b.buckets[k].size());
    auto be = matmul(cst({nb, K}, avg), e);
    auto logp1 = log_softmax(
        scale(matmul(matmul(h, w("bucket.wq")), transpose(matmul(ln("bucket.key", be), w("bucket.wk")))), inv_sqrt));
    auto lt = transpose(logits);
    std::vector<Tensor<T>> parts;
    std::vector<std::uint32_t> order;
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& mem = b.buckets[k];
      auto within = log_softmax(transpose(gather_rows(lt, mem)));
      auto stage1 = matmul(slice_cols(logp1, k, k + 1), cst({1, mem.size()}, std::vector<double>(mem.size(), 1.0)));
      parts.push_back(add(within, stage1));
      order.insert(order.end(), mem.begin(), mem.end());
    }
    std::vector<std::uint32_t> pos(K);
    for (std::size_t i = 0; i < K; ++i) pos[order[i]] = static_cast<std::uint32_t>(i);
    (void)P;
    return transpose(gather_rows(transpose(concat_cols(parts)), pos));
  }

  ModelConfig cfg_;
  ad::ParamStore<T> p_;
};

}  // namespace relicl::model
