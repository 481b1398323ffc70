#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "relicl/autodiff/attention.hpp"
#include "relicl/model/config.hpp"
#include "relicl/model/features.hpp"
#include "relicl/pql/compile.hpp"
#include "relicl/sampler/sampler.hpp"
#include "relicl/taskgen/taskgen.hpp"

namespace relicl::model {

enum TokenType : std::uint32_t {
  kTokNumerical,
  kTokCategorical,
  kTokText,
  kTokTimestamp,
  kTokNullNumerical,
  kTokNullCategorical,
  kTokNullText,
  kTokNullTimestamp,
  kTokTargetValue,
  kTokTargetClass,
  kTokMask,
  kTokNoTarget,
  kTokNullLag,
  kNumTokenTypes
};

struct BatchOptions {
  SamplerConfig sampler;
  std::uint64_t salt = 0;            // salts column, table and class hashes
  std::uint64_t column_shuffle = 0;  // nonzero: seeded permutation of every table's columns
  double feature_drop = 0;           // probability of hiding a context-example cell
  std::uint64_t drop_seed = 0;
};

using ListsPtr = std::shared_ptr<const ad::KeyLists>;

/// Model input for one episode: every context and prediction example
/// tokenized, plus the sparse attention patterns of all three stages.
/// Examples are ordered context first, then prediction.
struct Batch {
  pql::TaskType type = pql::TaskType::kRegression;
  std::size_t n_classes = 0;
  std::size_t n_context = 0, n_pred = 0;
  std::size_t n_nodes = 0, n_tokens = 0, n_groups = 0;
  std::size_t token_width = 0, node_width = 0, label_width = 0;

  std::vector<double> token_feats;  // n_tokens x token_width
  std::vector<std::uint32_t> token_type;
  std::vector<double> node_feats;   // n_nodes x node_width
  std::vector<std::uint32_t> node_hop;
  std::vector<std::uint32_t> node_example;
  std::vector<std::uint32_t> roots;  // root node of every example

  ListsPtr row_lists;     // token -> tokens of its row
  ListsPtr induce_lists;  // inducing query (group, i) -> context tokens of the group
  ListsPtr read_lists;    // token -> inducing outputs of its group
  ListsPtr pool_lists;    // node -> its tokens
  ListsPtr graph_lists;   // node or example-global -> stacked [self | up | down | global] keys
  ListsPtr ctx_induce;    // cross-sample inducing query -> context examples
  ListsPtr ctx_read;      // context example -> inducing outputs
  ListsPtr pred_ctx;      // prediction example -> context examples

  std::vector<double> label_feats;  // n_context x label_width
  std::vector<std::uint32_t> context_class;
  std::vector<double> class_hash;   // n_classes x hash_dim
  std::vector<std::vector<std::uint32_t>> buckets;  // hierarchical head; empty = flat

  double center = 0, norm_scale = 1, out_scale = 1;  // regression normalization

  std::vector<TaskRow> pred_rows;
  std::vector<std::uint8_t> pred_labeled;
  std::vector<std::uint32_t> pred_class;
  std::vector<double> pred_norm;
};

/// Drops the edges rejected by `keep` and every node no longer reachable
/// from the root; local ids are renumbered in original order.
template <class Keep>
SampledSubgraph restrict_edges(const SampledSubgraph& sg, Keep keep) {
  std::vector<std::vector<std::uint32_t>> adj(sg.nodes.size());
  std::vector<std::uint8_t> kept(sg.edges.size());
  for (std::size_t i = 0; i < sg.edges.size(); ++i) {
    kept[i] = keep(i, sg.edges[i]);
    if (!kept[i]) continue;
    adj[sg.edges[i].src].push_back(sg.edges[i].dst);
    adj[sg.edges[i].dst].push_back(sg.edges[i].src);
  }
  std::vector<std::int64_t> id(sg.nodes.size(), -1);
  std::vector<std::uint32_t> stack{0};
  id[0] = 0;
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u])
      if (id[v] < 0) {
        id[v] = 0;
        stack.push_back(v);
      }
  }
  SampledSubgraph out;
  out.anchor = sg.anchor;
  std::int64_t next = 0;
  for (std::size_t i = 0; i < sg.nodes.size(); ++i)
    if (id[i] >= 0) {
      id[i] = next++;
      out.nodes.push_back(sg.nodes[i]);
    }
  for (std::size_t i = 0; i < sg.edges.size(); ++i) {
    const auto& e = sg.edges[i];
    if (!kept[i] || id[e.src] < 0 || id[e.dst] < 0) continue;
    out.edges.push_back({static_cast<std::uint32_t>(id[e.src]), static_cast<std::uint32_t>(id[e.dst]), e.edge_type, e.hop});
  }
  return out;
}

namespace batch_detail {

struct Pending {
  std::size_t token;
  std::size_t stat;
  double value;
};

struct Stat {
  double sum = 0, sumsq = 0;
  std::size_t n = 0;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < sorted.size() ? sorted[i] * (1 - f) + sorted[i + 1] * f : sorted[i];
}

inline std::vector<std::size_t> column_order(std::size_t n, std::uint64_t shuffle, std::size_t table) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(hash_combine(shuffle, table));
    rng.shuffle(order);
  }
  return order;
}

}  // namespace batch_detail

/// Tokenizes pre-sampled subgraphs. `subgraphs` holds one entry per context
/// row followed by one per prediction row. Prediction rows may carry targets,
/// which are used only as training labels.
inline Batch build_batch(const ModelConfig& cfg, const Store& store, const pql::TaskPlan& plan,
                         const std::vector<TaskRow>& context, const std::vector<TaskRow>& prediction,
                         const std::vector<SampledSubgraph>& subgraphs, const BatchOptions& opt = {}) {
  using namespace batch_detail;
  if (context.empty()) throw InputError("empty context: at least one labeled context example is required");
  if (subgraphs.size() != context.size() + prediction.size())
    throw InputError("expected one subgraph per example");
  const auto& g = store.graph;
  const std::size_t dh = cfg.hash_dim;
  HashVectors hv(dh);
  Batch b;
  b.type = plan.type;
  const bool classify = plan.type != pql::TaskType::kRegression;
  b.n_classes = classify ? plan.classes.size() : 0;
  b.n_context = context.size();
  b.n_pred = prediction.size();
  b.token_width = 2 * dh + kNumFeats + kTimeFeats;
  b.node_width = 2 + 2 * dh;
  b.label_width = kNumFeats + dh;
  const std::size_t tw = b.token_width;
  const std::size_t off_name = dh, off_num = 2 * dh, off_time = 2 * dh + kNumFeats;

  // Regression normalization from context targets only.
  if (!classify) {
    std::vector<double> ys;
    for (const auto& r : context) ys.push_back(r.target.value());
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());
    b.center = median(ys);
    double s = (quantile(sorted, 0.75) - quantile(sorted, 0.25)) / 1.349;
    if (!(s > 1e-12)) {
      double m = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size()), v = 0;
      for (double y : ys) v += (y - m) * (y - m);
      s = std::sqrt(v / static_cast<double>(ys.size()));
    }
    b.out_scale = sorted.front() == sorted.back() ? 0.0 : s;
    b.norm_scale = s > 1e-12 ? s : 1.0;
  }
  auto normalized = [&](double y) { return (y - b.center) / b.norm_scale; };
  std::vector<std::uint64_t> class_keys;
  for (const auto& c : plan.classes) class_keys.push_back(hv.key(c, opt.salt));
  for (auto k : class_keys) {
    const auto& v = hv.get(k);
    b.class_hash.insert(b.class_hash.end(), v.begin(), v.end());
  }
  auto class_of = [&](double y) -> std::uint32_t {
    auto c = static_cast<std::uint32_t>(y);
    if (y != c || c >= b.n_classes) throw InputError("class index " + pql::format_number(y) + " out of range");
    return c;
  };

  // Static targets live in the entity table and must never be tokenized.
  std::optional<std::size_t> hidden_col;
  if (!plan.temporal) hidden_col = plan.static_label().column;

  std::map<std::pair<std::size_t, std::string>, std::size_t> groups;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> stat_ids;
  std::vector<Stat> stats;
  std::vector<Pending> pending;
  std::vector<std::uint32_t> token_group;
  std::vector<std::uint8_t> token_ctx;
  std::vector<std::uint64_t> row_off{0};
  auto group_of = [&](std::size_t t, const std::string& slot) {
    return groups.emplace(std::make_pair(t, slot), groups.size()).first->second;
  };
  auto new_token = [&](std::uint32_t type, std::size_t group, bool ctx) {
    b.token_feats.resize(b.token_feats.size() + tw, 0.0);
    b.token_type.push_back(type);
    token_group.push_back(static_cast<std::uint32_t>(group));
    token_ctx.push_back(ctx);
    return b.token_feats.data() + (b.token_type.size() - 1) * tw;
  };
  auto put = [](double* dst, const std::vector<double>& v) { std::copy(v.begin(), v.end(), dst); };

  std::vector<std::vector<std::size_t>> orders(g.num_tables());
  for (std::size_t t = 0; t < g.num_tables(); ++t)
    orders[t] = column_order(g.table(t).columns.size(), opt.column_shuffle, t);

  auto graph = std::make_shared<ad::KeyLists>();
  std::vector<std::vector<std::uint32_t>> neigh;  // per node: stacked key ids
  const std::size_t n_examples = context.size() + prediction.size();
  std::vector<std::vector<std::uint32_t>> example_nodes(n_examples);

  for (std::size_t ex = 0; ex < n_examples; ++ex) {
    const bool is_ctx = ex < context.size();
    const TaskRow& row = is_ctx ? context[ex] : prediction[ex - context.size()];
    const SampledSubgraph& sg = subgraphs[ex];
    if (sg.nodes.empty() || sg.root().id.table != plan.entity_table || sg.root().id.row != row.entity)
      throw InputError("subgraph root does not match its task row");
    const std::size_t base = b.node_hop.size();
    b.roots.push_back(static_cast<std::uint32_t>(base));
    for (std::size_t li = 0; li < sg.nodes.size(); ++li) {
      const auto& nd = sg.nodes[li];
      const std::size_t t = nd.id.table;
      const bool is_root = li == 0;
      example_nodes[ex].push_back(static_cast<std::uint32_t>(base + li));
      b.node_example.push_back(static_cast<std::uint32_t>(ex));
      b.node_hop.push_back(static_cast<std::uint32_t>(std::min<std::size_t>(nd.hop, cfg.max_hops)));
      std::vector<double> nf(b.node_width, 0.0);
      if (nd.delta == kPosInf) {
        nf[0] = 1;
      } else {
        nf[1] = std::log1p(std::max(0.0, static_cast<double>(nd.delta) / static_cast<double>(kMsPerDay))) / 4.0;
      }
      put(nf.data() + 2, hv.get(hv.key(g.meta(t).name, opt.salt)));
      if (nd.via >= 0) put(nf.data() + 2 + dh, hv.get(hv.key(store.index.edge_type(nd.via).name, opt.salt)));
      b.node_feats.insert(b.node_feats.end(), nf.begin(), nf.end());

      // Cell tokens.
      const auto& table = g.table(t);
      const std::uint64_t gid = g.global_id(nd.id);
      for (std::size_t c : orders[t]) {
        const Column& col = table.columns[c];
        if (col.stype == SemanticType::kIdentifier) continue;
        if (t == plan.entity_table && hidden_col && c == *hidden_col) continue;
        const std::size_t grp = group_of(t, col.name);
        const auto& name_vec = hv.get(hv.key(g.meta(t).name + "." + col.name, opt.salt));
        bool null = col.is_null(nd.id.row);
        if (!null && is_ctx && opt.feature_drop > 0) {
          auto h = hash_combine(hash_combine(opt.drop_seed, hash_combine(row.entity, static_cast<std::uint64_t>(row.anchor))),
                                hash_combine(gid, c));
          null = unit_from_hash(h) < opt.feature_drop;
        }
        double* f;
        switch (col.stype) {
          case SemanticType::kNumerical: {
            f = new_token(null ? kTokNullNumerical : kTokNumerical, grp, is_ctx);
            if (!null) {
              auto sid = stat_ids.emplace(std::make_pair(t, c), stats.size()).first->second;
              if (sid == stats.size()) stats.emplace_back();
              const double v = col.numbers[nd.id.row];
              if (is_ctx) {
                stats[sid].sum += v;
                stats[sid].sumsq += v * v;
                ++stats[sid].n;
              }
              pending.push_back({b.token_type.size() - 1, sid, v});
            }
            break;
          }
          case SemanticType::kCategorical: {
            f = new_token(null ? kTokNullCategorical : kTokCategorical, grp, is_ctx);
            if (!null) put(f, hv.get(hv.key(col.str(nd.id.row), 0)));
            break;
          }
          case SemanticType::kText: {
            auto ws = null ? std::vector<std::string>{} : words(col.str(nd.id.row));
            f = new_token(ws.empty() ? kTokNullText : kTokText, grp, is_ctx);
            for (const auto& w : ws) {
              const auto& v = hv.get(hv.key(w, 0));
              for (std::size_t i = 0; i < dh; ++i) f[i] += v[i] / static_cast<double>(ws.size());
            }
            break;
          }
          case SemanticType::kTimestamp: {
            null = null || col.times[nd.id.row] == kPosInf || col.times[nd.id.row] == kNegInf;
            f = new_token(null ? kTokNullTimestamp : kTokTimestamp, grp, is_ctx);
            if (!null) time_features(sg.anchor, col.times[nd.id.row], f + off_time);
            break;
          }
          default: continue;
        }
        put(f + off_name, name_vec);
      }
      // Lagged targets: extra numerical (or class) columns of the root row.
      if (is_root)
        for (std::size_t k = 0; k < row.lags.size(); ++k) {
          const std::string slot = "__lag" + std::to_string(k + 1);
          const std::size_t grp = group_of(t, slot);
          const auto& lag = row.lags[k];
          const bool as_class = classify;
          double* f = new_token(!lag ? kTokNullLag : (as_class ? kTokCategorical : kTokNumerical), grp, is_ctx);
          put(f + off_name, hv.get(hv.key(slot, opt.salt)));
          if (!lag) continue;
          if (as_class) put(f, hv.get(class_keys.at(class_of(*lag))));
          else numeric_features(normalized(*lag), f + off_num);
        }
      // Target token.
      const std::size_t tgrp = group_of(t, "__target");
      if (!is_root) {
        new_token(kTokNoTarget, tgrp, is_ctx);
      } else if (!is_ctx) {
        new_token(kTokMask, tgrp, is_ctx);
      } else if (classify) {
        double* f = new_token(kTokTargetClass, tgrp, is_ctx);
        put(f, hv.get(class_keys.at(class_of(*row.target))));
      } else {
        double* f = new_token(kTokTargetValue, tgrp, is_ctx);
        numeric_features(normalized(*row.target), f + off_num);
      }
      row_off.push_back(b.token_type.size());
    }
    // Graph neighborhoods in stacked-key coordinates, resolved once n is known.
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> nb(sg.nodes.size());
    for (const auto& e : sg.edges) {
      const bool up = !store.index.edge_type(e.edge_type).reverse;
      nb[e.src].push_back({up ? 1u : 2u, e.dst});
      nb[e.dst].push_back({up ? 2u : 1u, e.src});
    }
    for (std::size_t li = 0; li < sg.nodes.size(); ++li) {
      std::vector<std::uint32_t> keys;
      for (auto [dir, j] : nb[li]) keys.push_back(dir << 30 | static_cast<std::uint32_t>(base + j));
      neigh.push_back(std::move(keys));
    }
  }
  b.n_nodes = b.node_hop.size();
  b.n_tokens = b.token_type.size();
  b.n_groups = groups.size();

  // Numerical normalization with context-example statistics.
  for (const auto& p : pending) {
    const auto& s = stats[p.stat];
    double mean = 0, sd = 1;
    if (s.n > 0) {
      mean = s.sum / static_cast<double>(s.n);
      const double var = s.sumsq / static_cast<double>(s.n) - mean * mean;
      sd = var > 1e-12 * std::max(1.0, mean * mean) ? std::sqrt(var) : 1.0;
    }
    numeric_features((p.value - mean) / sd, b.token_feats.data() + p.token * tw + off_num);
  }

  // Table stage lists.
  auto rows = std::make_shared<ad::KeyLists>(), pool = std::make_shared<ad::KeyLists>();
  for (std::size_t n = 0; n < b.n_nodes; ++n) {
    for (auto i = row_off[n]; i < row_off[n + 1]; ++i) {
      for (auto j = row_off[n]; j < row_off[n + 1]; ++j) rows->push(static_cast<std::uint32_t>(j));
      rows->close();
      pool->push(static_cast<std::uint32_t>(i));
    }
    pool->close();
  }
  const std::size_t m = cfg.table_inducing;
  std::vector<std::vector<std::uint32_t>> members(b.n_groups);
  for (std::size_t i = 0; i < b.n_tokens; ++i)
    if (token_ctx[i]) members[token_group[i]].push_back(static_cast<std::uint32_t>(i));
  auto induce = std::make_shared<ad::KeyLists>(), read = std::make_shared<ad::KeyLists>();
  for (std::size_t gi = 0; gi < b.n_groups; ++gi)
    for (std::size_t k = 0; k < m; ++k) {
      for (auto i : members[gi]) induce->push(i);
      induce->close();
    }
  for (std::size_t i = 0; i < b.n_tokens; ++i) {
    for (std::size_t k = 0; k < m; ++k) read->push(static_cast<std::uint32_t>(token_group[i] * m + k));
    read->close();
  }

  // Graph stage lists over stacked keys [self | up | down | global].
  const auto n = static_cast<std::uint32_t>(b.n_nodes);
  for (std::size_t i = 0; i < b.n_nodes; ++i) {
    graph->push(static_cast<std::uint32_t>(i));
    for (auto key : neigh[i]) graph->push((key >> 30) * n + (key & 0x3fffffffu));
    graph->push(3 * n + b.node_example[i]);
    graph->close();
  }
  for (std::size_t ex = 0; ex < n_examples; ++ex) {
    for (auto i : example_nodes[ex]) graph->push(i);
    graph->close();
  }

  // Cross-sample lists.
  const std::size_t C = b.n_context, P = b.n_pred, mc = cfg.cross_inducing;
  auto ci = std::make_shared<ad::KeyLists>(), cr = std::make_shared<ad::KeyLists>(), pc = std::make_shared<ad::KeyLists>();
  for (std::size_t k = 0; k < mc; ++k) {
    for (std::size_t i = 0; i < C; ++i) ci->push(static_cast<std::uint32_t>(i));
    ci->close();
  }
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t k = 0; k < mc; ++k) cr->push(static_cast<std::uint32_t>(k));
    cr->close();
  }
  for (std::size_t j = 0; j < P; ++j) {
    for (std::size_t i = 0; i < C; ++i) pc->push(static_cast<std::uint32_t>(i));
    pc->close();
  }
  b.row_lists = rows, b.pool_lists = pool, b.induce_lists = induce, b.read_lists = read, b.graph_lists = graph;
  b.ctx_induce = ci, b.ctx_read = cr, b.pred_ctx = pc;

  // Labels.
  b.label_feats.assign(C * b.label_width, 0.0);
  for (std::size_t i = 0; i < C; ++i) {
    double* f = b.label_feats.data() + i * b.label_width;
    if (classify) {
      const auto c = class_of(*context[i].target);
      b.context_class.push_back(c);
      put(f + kNumFeats, hv.get(class_keys[c]));
    } else {
      numeric_features(normalized(*context[i].target), f);
    }
  }
  for (const auto& r : prediction) {
    b.pred_rows.push_back(r);
    b.pred_labeled.push_back(r.target.has_value());
    b.pred_class.push_back(classify && r.target ? class_of(*r.target) : 0);
    b.pred_norm.push_back(!classify && r.target ? normalized(*r.target) : 0.0);
  }
  if (classify && b.n_classes > cfg.flat_class_limit) {
    // Frequency buckets: classes ordered by context count (desc), then name.
    std::vector<std::size_t> count(b.n_classes, 0);
    for (auto c : b.context_class) ++count[c];
    std::vector<std::uint32_t> order(b.n_classes);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t c) {
      if (count[a] != count[c]) return count[a] > count[c];
      return plan.classes[a] < plan.classes[c];
    });
    const auto nb = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(b.n_classes))));
    const std::size_t per = (b.n_classes + nb - 1) / nb;
    for (std::size_t i = 0; i < order.size(); i += per)
      b.buckets.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + per)));
  }
  return b;
}

/// Samples one subgraph per example and tokenizes them.
inline Batch make_batch(const ModelConfig& cfg, const Store& store, const pql::TaskPlan& plan,
                        const std::vector<TaskRow>& context, const std::vector<TaskRow>& prediction,
                        const BatchOptions& opt = {}) {
  std::vector<SampledSubgraph> sgs;
  sgs.reserve(context.size() + prediction.size());
  for (const auto* rows : {&context, &prediction})
    for (const auto& r : *rows)
      sgs.push_back(sample_subgraph(store, {static_cast<std::uint32_t>(plan.entity_table), r.entity}, r.anchor, opt.sampler));
  return build_batch(cfg, store, plan, context, prediction, sgs, opt);
}

}  // namespace relicl::model
