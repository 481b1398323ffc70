#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "relicl/model/model.hpp"

namespace relicl::model {

struct PredictConfig {
  BatchOptions batch;
  std::size_t chunk = 512;  // prediction rows per forward pass
};

struct Prediction {
  TaskRow row;
  double value = 0;           // regression value, binary P(true) or multiclass argmax index
  std::vector<double> probs;  // class distribution (classification only)
  std::vector<double> embedding;
};

namespace predict_detail {

template <class T>
void decode(const Batch& b, const Output<T>& o, std::vector<Prediction>& out) {
  const std::size_t d = o.embedding.cols();
  for (std::size_t j = 0; j < b.n_pred; ++j) {
    Prediction p;
    p.row = b.pred_rows[j];
    p.embedding.assign(o.embedding.data() + j * d, o.embedding.data() + (j + 1) * d);
    if (b.type == pql::TaskType::kRegression) {
      p.value = b.center + b.out_scale * static_cast<double>(o.out.at(j, 0));
    } else {
      const std::size_t K = b.n_classes;
      p.probs.resize(K);
      double z = 0;
      for (std::size_t c = 0; c < K; ++c) z += p.probs[c] = std::exp(static_cast<double>(o.out.at(j, c)));
      for (auto& x : p.probs) x /= z;
      if (b.type == pql::TaskType::kBinary) p.value = p.probs.at(1);
      else p.value = static_cast<double>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
    }
    out.push_back(std::move(p));
  }
}

}  // namespace predict_detail

/// End-to-end ICL inference: sample, tokenize, encode, attend over context,
/// decode. Prediction rows are independent of each other, so chunking does
/// not change results.
template <class T>
std::vector<Prediction> predict(const Model<T>& model, const Store& store, const pql::TaskPlan& plan,
                                const TaskTable& table, const PredictConfig& cfg = {}) {
  if (table.context.empty()) throw InputError("empty context: at least one labeled context example is required");
  ad::NoGradGuard no_grad;
  std::vector<Prediction> out;
  const std::size_t chunk = std::max<std::size_t>(cfg.chunk, 1);
  for (std::size_t s = 0; s < table.prediction.size(); s += chunk) {
    std::vector<TaskRow> part(table.prediction.begin() + static_cast<std::ptrdiff_t>(s),
                              table.prediction.begin() + static_cast<std::ptrdiff_t>(std::min(table.prediction.size(), s + chunk)));
    auto batch = make_batch(model.config(), store, plan, table.context, part, cfg.batch);
    predict_detail::decode(batch, model.forward(batch), out);
  }
  return out;
}

struct EnsembleConfig {
  std::size_t estimators = 1;
  bool column_shuffle = false;
  bool class_shuffle = false;
  std::vector<std::size_t> hop_list;  // per-estimator depth, cycled; empty = configured fanouts
  std::uint64_t seed = 0;
};

struct EnsembleResult {
  std::vector<Prediction> predictions;
  double spread = 0;  // mean absolute deviation of estimator outputs from the ensemble mean
};

/// Averages estimators that each draw a seeded column permutation, class
/// permutation and/or depth. Class permutations are undone before averaging.
template <class T>
EnsembleResult ensemble_predict(const Model<T>& model, const Store& store, const pql::TaskPlan& plan,
                                const TaskTable& table, const PredictConfig& cfg, const EnsembleConfig& ens) {
  if (ens.estimators == 0) throw InputError("num_estimators must be >= 1");
  const bool classify = plan.type != pql::TaskType::kRegression;
  std::vector<std::vector<Prediction>> runs;
  for (std::size_t i = 0; i < ens.estimators; ++i) {
    PredictConfig pc = cfg;
    pql::TaskPlan p = plan;
    TaskTable t = table;
    if (ens.column_shuffle) pc.batch.column_shuffle = hash_combine(ens.seed, i) | 1;
    if (!ens.hop_list.empty()) {
      const std::size_t depth = ens.hop_list[i % ens.hop_list.size()];
      const auto& base = cfg.batch.sampler.fanouts;
      std::vector<std::size_t> f(depth);
      for (std::size_t h = 0; h < depth; ++h) f[h] = base.empty() ? 32 : base[std::min(h, base.size() - 1)];
      pc.batch.sampler.fanouts = f;
    }
    // perm[new index] = old index
    std::vector<std::uint32_t> perm(classify ? plan.classes.size() : 0);
    std::iota(perm.begin(), perm.end(), 0u);
    if (ens.class_shuffle && classify) {
      Rng rng(hash_combine(ens.seed ^ 0xc1a55, i));
      rng.shuffle(perm);
      std::vector<std::uint32_t> inv(perm.size());
      for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = static_cast<std::uint32_t>(k);
      for (std::size_t k = 0; k < perm.size(); ++k) p.classes[k] = plan.classes[perm[k]];
      auto remap = [&](std::optional<double>& y) {
        if (y) y = static_cast<double>(inv.at(static_cast<std::size_t>(*y)));
      };
      for (auto* rows : {&t.context, &t.prediction})
        for (auto& r : *rows) {
          remap(r.target);
          for (auto& l : r.lags) remap(l);
        }
    }
    auto preds = predict(model, store, p, t, pc);
    if (classify)
      for (std::size_t j = 0; j < preds.size(); ++j) {
        auto& pr = preds[j];
        std::vector<double> orig(pr.probs.size());
        for (std::size_t k = 0; k < perm.size(); ++k) orig[perm[k]] = pr.probs[k];
        pr.probs = std::move(orig);
        pr.row = table.prediction[j];
        pr.value = plan.type == pql::TaskType::kBinary
                       ? pr.probs[1]
                       : static_cast<double>(std::max_element(pr.probs.begin(), pr.probs.end()) - pr.probs.begin());
      }
    runs.push_back(std::move(preds));
  }
  EnsembleResult res;
  res.predictions = runs.front();
  const double n = static_cast<double>(runs.size());
  for (std::size_t j = 0; j < res.predictions.size(); ++j) {
    auto& out = res.predictions[j];
    for (std::size_t r = 1; r < runs.size(); ++r) {
      out.value += runs[r][j].value;
      for (std::size_t k = 0; k < out.probs.size(); ++k) out.probs[k] += runs[r][j].probs[k];
      for (std::size_t k = 0; k < out.embedding.size(); ++k) out.embedding[k] += runs[r][j].embedding[k];
    }
    out.value /= n;
    for (auto& x : out.probs) x /= n;
    for (auto& x : out.embedding) x /= n;
    if (plan.type == pql::TaskType::kMulticlass)
      out.value = static_cast<double>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  }
  double dev = 0;
  std::size_t cnt = 0;
  for (const auto& run : runs)
    for (std::size_t j = 0; j < run.size(); ++j, ++cnt)
      dev += classify && !run[j].probs.empty() ? std::abs(run[j].probs[0] - res.predictions[j].probs[0])
                                               : std::abs(run[j].value - res.predictions[j].value);
  res.spread = cnt ? dev / static_cast<double>(cnt) : 0.0;
  return res;
}

/// One JSON object per prediction row.
inline nlohmann::json prediction_json(const Prediction& p, const pql::TaskPlan& plan, const TemporalGraph& g) {
  nlohmann::json j{{"entity", std::string(g.pk_string(plan.entity_table, p.row.entity))},
                   {"anchor_time", format_timestamp(p.row.anchor)}};
  if (plan.type == pql::TaskType::kMulticlass) j["prediction"] = plan.classes.at(static_cast<std::size_t>(p.value));
  else j["prediction"] = p.value;
  if (!p.probs.empty()) {
    nlohmann::json probs = nlohmann::json::object();
    for (std::size_t k = 0; k < p.probs.size(); ++k) probs[plan.classes[k]] = p.probs[k];
    j["probabilities"] = probs;
  }
  j["embedding"] = p.embedding;
  return j;
}

}  // namespace relicl::model
