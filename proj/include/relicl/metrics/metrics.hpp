#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "relicl/core/error.hpp"

namespace relicl::metrics {

/// Area under the ROC curve: the fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half. Rank-sum formula, O(n log n).
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw InputError("auroc: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) +
                     " labels");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw InputError("auroc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = labels.size(), neg = n - pos;
  if (pos == 0 || neg == 0) throw InputError("auroc: labels must contain both classes");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (average, 1-based) ranks of positives; doubled to stay integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    std::size_t p = 0;
    for (std::size_t k = i; k < j; ++k) p += static_cast<std::size_t>(labels[order[k]]);
    twice_rank_sum += p * (i + 1 + j);  // average rank (i+1+j)/2
    i = j;
  }
  const double u = static_cast<double>(twice_rank_sum) / 2.0 - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

inline double mae(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size())
    throw InputError("mae: " + std::to_string(predictions.size()) + " predictions but " +
                     std::to_string(targets.size()) + " targets");
  if (predictions.empty()) throw InputError("mae: empty input");
  double s = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
  return s / static_cast<double>(predictions.size());
}

/// Mean reciprocal rank of each true class in its ranked list.
inline double mrr(const std::vector<std::vector<std::size_t>>& rankings, const std::vector<std::size_t>& truth) {
  if (rankings.size() != truth.size())
    throw InputError("mrr: " + std::to_string(rankings.size()) + " rankings but " + std::to_string(truth.size()) +
                     " true classes");
  if (rankings.empty()) throw InputError("mrr: empty input");
  double s = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = std::find(rankings[i].begin(), rankings[i].end(), truth[i]);
    if (it == rankings[i].end()) throw InputError("mrr: true class missing from ranking " + std::to_string(i));
    s += 1.0 / static_cast<double>(it - rankings[i].begin() + 1);
  }
  return s / static_cast<double>(truth.size());
}

/// Classes ordered by descending probability, ties by class index.
inline std::vector<std::size_t> ranking(const std::vector<double>& probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return order;
}

/// Mean over tasks of value / baseline.
inline double normalized_average(const std::vector<double>& values, const std::vector<double>& baselines) {
  if (values.size() != baselines.size())
    throw InputError("normalized_average: " + std::to_string(values.size()) + " values but " +
                     std::to_string(baselines.size()) + " baselines");
  if (values.empty()) throw InputError("normalized_average: no tasks");
  double s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (baselines[i] == 0) throw InputError("normalized_average: baseline of task " + std::to_string(i) + " is zero");
    s += values[i] / baselines[i];
  }
  return s / static_cast<double>(values.size());
}

struct EvalReport {
  std::string task;
  std::string metric;
  double value = 0;
  std::size_t n = 0;
  nlohmann::json fingerprint = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"task", task}, {"metric", metric}, {"value", value}, {"n", n}, {"fingerprint", fingerprint}};
  }
};

}  // namespace relicl::metrics
