#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "relicl/baseline/dfs.hpp"
#include "relicl/core/random.hpp"
#include "relicl/taskgen/taskgen.hpp"

namespace relicl::baseline {

struct LinearConfig {
  std::size_t epochs = 200;
  double lr = 0.1;
  double l2 = 1e-4;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

/// Logistic regression over standardized features. Each raw feature expands
/// to (value with nulls imputed to 0, presence indicator).
struct LinearModel {
  std::vector<double> mean, scale;  // per expanded feature
  std::vector<double> weights;
  double bias = 0;

  std::vector<double> expand(const FlatRow& r) const {
    std::vector<double> x(2 * r.values.size());
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      x[2 * i] = r.values[i].value_or(0.0);
      x[2 * i + 1] = r.values[i] ? 1.0 : 0.0;
    }
    return x;
  }
};

inline double linear_predict(const LinearModel& m, const FlatRow& r) {
  const auto x = m.expand(r);
  if (x.size() != m.weights.size())
    throw InputError("feature count " + std::to_string(r.values.size()) + " does not match the fitted model");
  double z = m.bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += m.weights[j] * (x[j] - m.mean[j]) / m.scale[j];
  return 1.0 / (1.0 + std::exp(-z));
}

/// Mini-batch gradient descent on the logistic loss; deterministic per seed.
inline LinearModel linear_fit(const std::vector<FlatRow>& rows, const std::vector<double>& labels,
                              const LinearConfig& cfg = {}) {
  if (rows.size() != labels.size())
    throw InputError("linear_fit: " + std::to_string(rows.size()) + " rows but " + std::to_string(labels.size()) +
                     " labels");
  if (rows.empty()) throw InputError("linear_fit: no training rows");
  LinearModel m;
  std::vector<std::vector<double>> xs;
  for (const auto& r : rows) {
    xs.push_back(m.expand(r));
    if (xs.back().size() != xs.front().size()) throw InputError("linear_fit: inconsistent feature counts");
  }
  const std::size_t n = xs.size(), d = xs.front().size();
  m.mean.assign(d, 0);
  m.scale.assign(d, 0);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x[j] / static_cast<double>(n);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) m.scale[j] += (x[j] - m.mean[j]) * (x[j] - m.mean[j]) / static_cast<double>(n);
  for (auto& s : m.scale) s = s > 1e-12 ? std::sqrt(s) : 1.0;
  for (auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) x[j] = (x[j] - m.mean[j]) / m.scale[j];
  m.weights.assign(d, 0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_combine(cfg.seed, 0x11ea));
  std::vector<double> gw(d);
  const std::size_t bs = std::max<std::size_t>(cfg.batch, 1);
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    rng.shuffle(order);
    for (std::size_t s = 0; s < n; s += bs) {
      const std::size_t e = std::min(n, s + bs);
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0;
      for (std::size_t k = s; k < e; ++k) {
        const auto& x = xs[order[k]];
        double z = m.bias;
        for (std::size_t j = 0; j < d; ++j) z += m.weights[j] * x[j];
        const double err = 1.0 / (1.0 + std::exp(-z)) - labels[order[k]];
        for (std::size_t j = 0; j < d; ++j) gw[j] += err * x[j];
        gb += err;
      }
      const double inv = 1.0 / static_cast<double>(e - s);
      for (std::size_t j = 0; j < d; ++j) m.weights[j] -= cfg.lr * (gw[j] * inv + cfg.l2 * m.weights[j]);
      m.bias -= cfg.lr * gb * inv;
    }
  }
  return m;
}

/// DFS + logistic regression for a binary task: fits on the labeled context
/// rows and returns P(class 1) for every prediction row.
inline std::vector<double> dfs_linear_scores(const Store& s, const pql::TaskPlan& plan, const std::vector<TaskRow>& context,
                                             const std::vector<TaskRow>& prediction, std::size_t depth = 2,
                                             const LinearConfig& cfg = {}) {
  if (plan.type != pql::TaskType::kBinary) throw InputError("the DFS baseline supports binary tasks only");
  const auto opt = dfs_options(plan, s.graph, depth);
  std::vector<FlatRow> train;
  std::vector<double> y;
  for (const auto& r : context) {
    if (!r.target) throw InputError("DFS baseline: context row without a label");
    train.push_back(dfs_flatten(s, plan.entity_table, r.entity, r.anchor, opt));
    y.push_back(*r.target);
  }
  const auto m = linear_fit(train, y, cfg);
  std::vector<double> out;
  for (const auto& r : prediction) out.push_back(linear_predict(m, dfs_flatten(s, plan.entity_table, r.entity, r.anchor, opt)));
  return out;
}

}  // namespace relicl::baseline
