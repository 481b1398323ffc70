#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/colstore/csv.hpp"
#include "relicl/core/random.hpp"
#include "relicl/pql/compile.hpp"

namespace relicl {

using pql::TaskPlan;
using pql::TaskType;

/// Label of `entity` as of `anchor`. Temporal plans aggregate the linked rows
/// with time in (anchor + start, anchor + end]. Returns nullopt when the label
/// is undefined (AVG/MIN/MAX of nothing, null static cell).
inline std::optional<double> compute_label(const TaskPlan& plan, const Store& store, std::uint32_t entity,
                                           Timestamp anchor, AccessProbe* probe = nullptr) {
  const auto& g = store.graph;
  if (entity >= g.table(plan.entity_table).rows)
    throw InputError("entity row " + std::to_string(entity) + " not found in '" + g.meta(plan.entity_table).name + "'");
  if (!plan.temporal) {
    const Column& c = g.table(plan.entity_table).columns[plan.static_label().column];
    if (c.is_null(entity)) return std::nullopt;
    switch (plan.type) {
      case TaskType::kRegression: return c.numbers[entity];
      case TaskType::kBinary: return infer_detail::lower(c.str(entity)) == "true" ? 1.0 : 0.0;
      case TaskType::kMulticlass: return static_cast<double>(plan.class_index(c.str(entity)));
    }
  }
  const auto& l = plan.temporal_label();
  const Csr& csr = store.index.csr(l.edge_type);
  auto [b, e] = store.index.window(entity, l.edge_type, anchor + l.start, anchor + l.end);
  const TableData& table = g.table(l.table);
  const Column* col = l.column ? &table.columns[*l.column] : nullptr;
  double count = 0, sum = 0, lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = b; i < e; ++i) {
    const std::uint32_t row = csr.neighbors[i];
    if (probe) probe->record(csr.times[i]);
    bool keep = true;
    for (const auto& p : l.filter) keep = keep && p.matches(table, row);
    if (!keep || (col && col->is_null(row))) continue;
    count += 1;
    if (col && col->stype == SemanticType::kNumerical) {
      const double v = col->numbers[row];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  double value = 0;
  switch (l.fn) {
    case pql::AggFn::kCount: value = count; break;
    case pql::AggFn::kSum: value = sum; break;
    case pql::AggFn::kAvg:
      if (count == 0) return std::nullopt;
      value = sum / count;
      break;
    case pql::AggFn::kMin:
      if (count == 0) return std::nullopt;
      value = lo;
      break;
    case pql::AggFn::kMax:
      if (count == 0) return std::nullopt;
      value = hi;
      break;
  }
  if (plan.comparison) return pql::compare(plan.comparison->op, value, std::get<double>(plan.comparison->value)) ? 1.0 : 0.0;
  return value;
}

struct TaskRow {
  std::uint32_t entity = 0;  // row of the entity table
  Timestamp anchor = 0;
  std::optional<double> target;  // label, class index, or nullopt for prediction rows
  std::vector<std::optional<double>> lags;

  bool operator==(const TaskRow&) const = default;
};

/// Labeled context examples plus the rows to predict.
struct TaskTable {
  TaskType type = TaskType::kRegression;
  std::vector<TaskRow> context;
  std::vector<TaskRow> prediction;
  std::size_t lags = 0;
};

struct ContextConfig {
  std::size_t budget = 10000;
  double local_fraction = 0.25;
  std::size_t lag_timesteps = 0;
  /// Oldest anchors considered are this many windows before the prediction
  /// anchor (0 = back to the start of the data).
  std::size_t max_windows = 0;
  std::uint64_t seed = 0;
};

namespace taskgen_detail {

/// Anchor used for static plans: the end of recorded time.
inline Timestamp static_anchor(const TemporalGraph& g) {
  auto [lo, hi] = g.time_range();
  return hi == kNegInf ? 0 : hi;
}

inline Timestamp history_floor(const TemporalGraph& g) {
  auto [lo, hi] = g.time_range();
  return lo == kPosInf ? 0 : lo;
}

inline std::vector<std::optional<double>> lags_of(const TaskPlan& plan, const Store& store, std::uint32_t entity,
                                                  Timestamp anchor, std::size_t count, Timestamp floor) {
  std::vector<std::optional<double>> out(count);
  if (!plan.temporal) return out;
  const auto& l = plan.temporal_label();
  const Timestamp w = l.end - l.start;
  for (std::size_t k = 1; k <= count; ++k) {
    // Window of lag k ends (k - 1) windows before the row's anchor.
    const Timestamp a = anchor - l.end - static_cast<Timestamp>(k - 1) * w;
    if (a + l.start < floor) break;
    out[k - 1] = compute_label(plan, store, entity, a);
  }
  return out;
}

inline bool has_event_before(const Store& store, const pql::TemporalLabel& l, std::uint32_t entity, Timestamp t) {
  const Csr& c = store.index.csr(l.edge_type);
  const auto lo = c.offsets[entity], hi = c.offsets[entity + 1];
  return lo != hi && c.times[lo] <= t;
}

}  // namespace taskgen_detail

/// Prediction anchor to use for static plans.
inline Timestamp default_anchor(const TaskPlan& plan, const TemporalGraph& g) {
  (void)plan;
  return taskgen_detail::static_anchor(g);
}

/// Builds the in-context task table for `prediction_entities` at `anchor`.
/// Temporal plans replay the database at earlier anchors spaced one window
/// apart so that every context label window ends at or before `anchor`.
inline TaskTable generate_context(const TaskPlan& plan, const Store& store,
                                  const std::vector<std::uint32_t>& prediction_entities, Timestamp anchor,
                                  const ContextConfig& config) {
  using namespace taskgen_detail;
  if (config.local_fraction < 0 || config.local_fraction > 1) throw InputError("local fraction must be in [0, 1]");
  const auto& g = store.graph;
  const std::uint32_t n_entities = g.table(plan.entity_table).rows;
  if (n_entities == 0) throw InputError("entity table '" + g.meta(plan.entity_table).name + "' is empty");
  TaskTable out;
  out.type = plan.type;
  out.lags = plan.temporal ? config.lag_timesteps : 0;
  const Timestamp floor = history_floor(g);
  for (auto e : prediction_entities) {
    if (e >= n_entities) throw InputError("prediction entity row " + std::to_string(e) + " out of range");
    out.prediction.push_back({e, anchor, std::nullopt, lags_of(plan, store, e, anchor, out.lags, floor)});
  }
  std::set<std::pair<std::uint32_t, Timestamp>> used;
  Rng rng(hash_combine(config.seed, 0x7a5c));

  if (!plan.temporal) {
    std::set<std::uint32_t> predicted(prediction_entities.begin(), prediction_entities.end());
    std::vector<std::uint32_t> candidates;
    for (std::uint32_t r = 0; r < n_entities; ++r)
      if (!predicted.count(r) && g.node_time(plan.entity_table, r) <= anchor &&
          compute_label(plan, store, r, anchor))
        candidates.push_back(r);
    rng.shuffle(candidates);
    if (candidates.size() > config.budget) candidates.resize(config.budget);
    std::sort(candidates.begin(), candidates.end());
    for (auto r : candidates) out.context.push_back({r, anchor, compute_label(plan, store, r, anchor), {}});
    return out;
  }

  const auto& l = plan.temporal_label();
  const Timestamp w = l.end - l.start;
  const Timestamp newest = anchor - l.end;
  if (newest < floor)
    throw InputError("insufficient history: anchor " + format_timestamp(anchor) +
                     " leaves no complete label window after " + format_timestamp(floor));
  std::vector<Timestamp> anchors;
  for (Timestamp a = newest; a >= floor; a -= w) {
    anchors.push_back(a);
    if (config.max_windows && anchors.size() >= config.max_windows) break;
  }
  auto add = [&](std::uint32_t e, Timestamp a) {
    if (out.context.size() >= config.budget || !used.emplace(e, a).second) return;
    if (g.node_time(plan.entity_table, e) > a) return;
    auto y = compute_label(plan, store, e, a);
    if (!y) return;
    out.context.push_back({e, a, y, lags_of(plan, store, e, a, out.lags, floor)});
  };
  // Local history of the prediction entities, most recent windows first.
  const std::size_t local_budget =
      static_cast<std::size_t>(std::floor(config.local_fraction * static_cast<double>(config.budget)));
  for (std::size_t j = 0; j < anchors.size() && out.context.size() < local_budget; ++j)
    for (auto e : prediction_entities) {
      if (out.context.size() >= local_budget) break;
      add(e, anchors[j]);
    }
  // Global snapshot examples at the most recent anchors.
  std::vector<std::uint32_t> pool;
  for (std::size_t j = 0; j < anchors.size() && out.context.size() < config.budget; ++j) {
    pool.clear();
    for (std::uint32_t r = 0; r < n_entities; ++r)
      if (has_event_before(store, l, r, anchors[j]) && !used.count({r, anchors[j]})) pool.push_back(r);
    rng.shuffle(pool);
    for (auto r : pool) {
      if (out.context.size() >= config.budget) break;
      add(r, anchors[j]);
    }
  }
  std::sort(out.context.begin(), out.context.end(),
            [](const TaskRow& a, const TaskRow& b) { return std::tie(a.entity, a.anchor) < std::tie(b.entity, b.anchor); });
  return out;
}

/// Splits labeled rows into (context, evaluation). Temporal tables are split
/// at an anchor boundary so every evaluation anchor is later than every
/// context anchor; static tables are shuffled with `seed`.
inline std::pair<std::vector<TaskRow>, std::vector<TaskRow>> holdout_split(std::vector<TaskRow> rows, double fraction,
                                                                           bool temporal, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) throw InputError("holdout fraction must be in (0, 1)");
  const std::size_t n = rows.size();
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::size_t cut = n - want;  // rows [cut, n) are evaluation rows
  if (temporal) {
    std::stable_sort(rows.begin(), rows.end(), [](const TaskRow& a, const TaskRow& b) {
      return std::tie(a.anchor, a.entity) < std::tie(b.anchor, b.entity);
    });
    // Move the cut to the nearest anchor boundary.
    std::size_t best = n;
    for (std::size_t c = 1; c < n; ++c) {
      if (rows[c - 1].anchor == rows[c].anchor) continue;
      if (best == n || (c > cut ? c - cut : cut - c) < (best > cut ? best - cut : cut - best)) best = c;
    }
    if (best == n) throw InputError("holdout split: all rows share one anchor");
    cut = best;
  } else {
    Rng rng(hash_combine(seed, 0x5b11));
    rng.shuffle(rows);
  }
  if (cut == 0 || cut >= n) throw InputError("holdout split of " + std::to_string(n) + " rows is degenerate");
  std::vector<TaskRow> eval(rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
  rows.resize(cut);
  return {std::move(rows), std::move(eval)};
}

struct TaskColumns {
  std::string entity = "entity";
  std::string time = "time";
  std::string target = "target";
};

inline std::string format_target(const TaskPlan& plan, double y) {
  if (plan.type == TaskType::kRegression) return pql::format_number(y);
  return plan.classes.at(static_cast<std::size_t>(y));
}

inline std::optional<double> parse_target(const TaskPlan& plan, std::string_view cell) {
  auto s = infer_detail::trim(cell);
  if (s.empty()) return std::nullopt;
  if (plan.type == TaskType::kRegression) {
    if (!infer_detail::parses_as_number(s)) throw CsvError("target '" + std::string(s) + "' is not a number");
    return std::stod(std::string(s));
  }
  if (plan.type == TaskType::kBinary) {
    auto v = infer_detail::lower(s);
    if (v == "true" || v == "1") return 1.0;
    if (v == "false" || v == "0") return 0.0;
    throw CsvError("binary target '" + std::string(s) + "' is not true/false");
  }
  return static_cast<double>(plan.class_index(s));
}

/// Writes rows as CSV (entity key, ISO anchor, target). Prediction rows get
/// an empty target cell.
inline void write_task_csv(const std::vector<TaskRow>& rows, const TaskPlan& plan, const TemporalGraph& g,
                           std::ostream& out, const TaskColumns& names = {}) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({std::string(g.pk_string(plan.entity_table, r.entity)), format_timestamp(r.anchor),
                     r.target ? format_target(plan, *r.target) : std::string()});
  write_csv(out, {names.entity, names.time, names.target}, cells);
}

/// Reads an explicit task table. Rows with a target become context rows,
/// the rest prediction rows.
inline TaskTable read_task_csv(const std::string& path, const TaskPlan& plan, const TemporalGraph& g,
                               const TaskColumns& names = {}) {
  auto raw = read_csv(path, "task");
  const auto* ent = raw.find(names.entity);
  const auto* time = raw.find(names.time);
  const auto* target = raw.find(names.target);
  if (!ent) throw CsvError("task table lacks entity column '" + names.entity + "'");
  TaskTable table;
  table.type = plan.type;
  const Timestamp fallback = default_anchor(plan, g);
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    auto row = g.find_row(plan.entity_table, (*ent)[i]);
    if (!row) throw CsvError("task row " + std::to_string(i + 1) + ": unknown entity '" + (*ent)[i] + "'");
    Timestamp t = fallback;
    if (time && !infer_detail::trim((*time)[i]).empty()) {
      auto parsed = parse_timestamp(infer_detail::trim((*time)[i]));
      if (!parsed) throw CsvError("task row " + std::to_string(i + 1) + ": bad time '" + (*time)[i] + "'");
      t = *parsed;
    }
    auto y = target ? parse_target(plan, (*target)[i]) : std::nullopt;
    (y ? table.context : table.prediction).push_back({*row, t, y, {}});
  }
  return table;
}

}  // namespace relicl
