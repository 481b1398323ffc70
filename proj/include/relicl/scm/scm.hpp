#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/colstore/ingest.hpp"
#include "relicl/core/random.hpp"
#include "relicl/pql/compile.hpp"
#include "relicl/taskgen/taskgen.hpp"

namespace relicl::scm {

enum class Nonlin { kIdentity, kTanh, kStep };

inline double apply(Nonlin f, double x) {
  switch (f) {
    case Nonlin::kIdentity: return x;
    case Nonlin::kTanh: return std::tanh(x);
    case Nonlin::kStep: return x > 0 ? 1.0 : 0.0;
  }
  return x;
}

/// Where a mechanism input comes from, seen from the row being generated.
enum class Source { kLatent, kOwn, kParent };

struct Input {
  Source source = Source::kLatent;
  std::size_t index = 0;  // latent slot, own column or parent column
};

/// value = f(sum_i w_i * input_i + bias) + noise_scale * eps
struct Mechanism {
  std::vector<Input> inputs;
  std::vector<double> weights;
  double bias = 0;
  Nonlin f = Nonlin::kIdentity;
  double noise_scale = 0;
};

struct ColumnSpec {
  std::string name;
  Mechanism mech;
  /// Categorical columns cut the continuous value at `cuts` (ascending) and
  /// name the bins with `labels`.
  std::vector<double> cuts;
  std::vector<std::string> labels;
  bool binary = false;  // numerical 0/1 column written verbatim

  bool categorical() const { return !labels.empty(); }
};

struct TableLatent {
  std::string name;
  std::string pk;
  std::string fk;            // empty for the entity table
  std::size_t parent = 0;    // index of the parent table
  bool timed = false;
  std::vector<ColumnSpec> columns;
  std::vector<std::uint32_t> parent_row;
  std::vector<Timestamp> times;
  std::vector<std::vector<double>> values;  // [column][row], continuous
  std::vector<std::vector<double>> noise;   // [column][row], standard normal draws
};

/// Everything needed to re-run the forward pass of a generated database.
struct LatentRecord {
  std::vector<double> z;     // entity latent driving targets
  std::vector<double> rate;  // entity latent driving child activity
  std::vector<TableLatent> tables;  // tables[0] is the entity table
};

struct ScmConfig {
  std::size_t entities = 200;
  std::size_t min_tables = 1;  // including the entity table
  std::size_t max_tables = 3;
  double rows_per_entity = 4.0;
  /// Per-entity child count range; when lo > 0 counts are drawn uniformly
  /// from [lo, hi] instead of preferential attachment.
  std::size_t child_count_lo = 0;
  std::size_t child_count_hi = 0;
  std::size_t min_features = 1;
  std::size_t max_features = 4;
  double categorical_prob = 0.3;
  double noise_scale = 0.3;
  /// Weight of the hidden latent in entity-table columns; 0 keeps the
  /// entity row uninformative so that signal lives only in child rows.
  double entity_signal = 1.0;
  double child_signal = 1.0;
  double rate_correlation = 0.7;
  double horizon_days = 365;
  std::size_t noise_columns = 0;  // extra pure-noise columns per table
};

namespace scm_detail {

inline std::string num(double v) { return pql::format_number(v); }

inline Nonlin random_nonlin(Rng& rng) {
  switch (rng.below(3)) {
    case 0: return Nonlin::kIdentity;
    case 1: return Nonlin::kTanh;
    default: return Nonlin::kStep;
  }
}

inline std::string random_label(Rng& rng) {
  static const char* syll[] = {"ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "zi", "pe"};
  std::string s;
  for (int i = 0; i < 2; ++i) s += syll[rng.below(10)];
  return s + std::to_string(rng.below(100));
}

inline ColumnSpec random_column(Rng& rng, const std::string& name, std::size_t own_before, std::size_t parent_cols,
                                double latent_weight, const ScmConfig& cfg) {
  ColumnSpec c;
  c.name = name;
  auto& m = c.mech;
  if (latent_weight > 0) {
    m.inputs.push_back({Source::kLatent, 0});
    m.weights.push_back(latent_weight * (rng.bernoulli(0.5) ? 1 : -1) * (0.5 + rng.uniform()));
  }
  for (std::size_t j = 0; j < own_before; ++j)
    if (rng.bernoulli(0.3)) {
      m.inputs.push_back({Source::kOwn, j});
      m.weights.push_back(rng.normal() * 0.7);
    }
  for (std::size_t j = 0; j < parent_cols; ++j)
    if (rng.bernoulli(0.3)) {
      m.inputs.push_back({Source::kParent, j});
      m.weights.push_back(rng.normal() * 0.5);
    }
  m.bias = rng.normal() * 0.2;
  m.f = random_nonlin(rng);
  if (m.f == Nonlin::kStep && m.inputs.empty()) m.f = Nonlin::kIdentity;
  m.noise_scale = cfg.noise_scale * (0.5 + rng.uniform());
  if (rng.bernoulli(cfg.categorical_prob)) {
    const std::size_t k = 2 + rng.below(4);
    for (std::size_t i = 1; i < k; ++i) c.cuts.push_back(rng.normal() * 0.8);
    std::sort(c.cuts.begin(), c.cuts.end());
    for (std::size_t i = 0; i < k; ++i) c.labels.push_back(random_label(rng));
  }
  return c;
}

inline double eval_mechanism(const Mechanism& m, double noise, const LatentRecord& lat, const TableLatent& t,
                             std::size_t col, std::size_t row, std::size_t entity) {
  (void)col;
  double s = m.bias;
  for (std::size_t i = 0; i < m.inputs.size(); ++i) {
    const auto& in = m.inputs[i];
    double v = 0;
    switch (in.source) {
      case Source::kLatent: v = lat.z[entity]; break;
      case Source::kOwn: v = t.values[in.index][row]; break;
      case Source::kParent: v = lat.tables[t.parent].values[in.index][t.parent_row[row]]; break;
    }
    s += m.weights[i] * v;
  }
  return apply(m.f, s) + m.noise_scale * noise;
}

/// Entity (row of table 0) that a row of table `t` ultimately belongs to.
inline std::size_t entity_of(const LatentRecord& lat, std::size_t t, std::size_t row) {
  while (t != 0) {
    row = lat.tables[t].parent_row[row];
    t = lat.tables[t].parent;
  }
  return row;
}

inline std::string render_cell(const ColumnSpec& c, double v) {
  if (c.binary) return v > 0.5 ? "1" : "0";
  if (!c.categorical()) return num(v);
  std::size_t bin = static_cast<std::size_t>(std::upper_bound(c.cuts.begin(), c.cuts.end(), v) - c.cuts.begin());
  return c.labels[bin];
}

/// Evaluates every column of table t in order, reusing stored noise.
inline void forward_table(LatentRecord& lat, std::size_t t) {
  auto& tab = lat.tables[t];
  const std::size_t rows = t == 0 ? lat.z.size() : tab.parent_row.size();
  tab.values.assign(tab.columns.size(), std::vector<double>(rows));
  std::vector<std::size_t> ent(rows);
  for (std::size_t r = 0; r < rows; ++r) ent[r] = entity_of(lat, t, r);
  for (std::size_t c = 0; c < tab.columns.size(); ++c)
    for (std::size_t r = 0; r < rows; ++r)
      tab.values[c][r] = eval_mechanism(tab.columns[c].mech, tab.noise[c][r], lat, tab, c, r, ent[r]);
}

inline void forward(LatentRecord& lat) {
  for (std::size_t t = 0; t < lat.tables.size(); ++t) forward_table(lat, t);
}

}  // namespace scm_detail

/// Converts a latent record into raw tables plus the matching schema.
/// `entity_extra` appends (name, cells, stype) columns to the entity table.
struct ExtraColumn {
  std::string name;
  std::vector<std::string> cells;
  SemanticType stype = SemanticType::kNumerical;
};

inline std::pair<Schema, std::vector<RawTable>> render(const LatentRecord& lat,
                                                       const std::vector<ExtraColumn>& entity_extra = {}) {
  Schema schema;
  std::vector<RawTable> raw;
  for (std::size_t t = 0; t < lat.tables.size(); ++t) {
    const auto& tab = lat.tables[t];
    const std::size_t rows = t == 0 ? lat.z.size() : tab.parent_row.size();
    TableMeta meta;
    meta.name = tab.name;
    RawTable rt;
    rt.name = tab.name;
    auto add = [&](const std::string& name, SemanticType st, std::vector<std::string> cells) {
      meta.columns.push_back({name, st});
      rt.column_names.push_back(name);
      rt.columns.push_back(std::move(cells));
    };
    std::vector<std::string> ids(rows);
    for (std::size_t r = 0; r < rows; ++r) ids[r] = std::to_string(r);
    add(tab.pk, SemanticType::kIdentifier, ids);
    meta.primary_key = tab.pk;
    if (t != 0) {
      std::vector<std::string> fk(rows);
      for (std::size_t r = 0; r < rows; ++r) fk[r] = std::to_string(tab.parent_row[r]);
      add(tab.fk, SemanticType::kIdentifier, std::move(fk));
      schema.links.push_back({tab.name, tab.fk, lat.tables[tab.parent].name});
    }
    if (tab.timed) {
      std::vector<std::string> ts(rows);
      for (std::size_t r = 0; r < rows; ++r) ts[r] = format_timestamp(tab.times[r]);
      add("time", SemanticType::kTimestamp, std::move(ts));
      meta.time_column = "time";
    }
    for (std::size_t c = 0; c < tab.columns.size(); ++c) {
      std::vector<std::string> cells(rows);
      for (std::size_t r = 0; r < rows; ++r) cells[r] = scm_detail::render_cell(tab.columns[c], tab.values[c][r]);
      add(tab.columns[c].name, tab.columns[c].categorical() ? SemanticType::kCategorical : SemanticType::kNumerical,
          std::move(cells));
    }
    if (t == 0)
      for (const auto& e : entity_extra) add(e.name, e.stype, e.cells);
    schema.tables.push_back(std::move(meta));
    raw.push_back(std::move(rt));
  }
  return {std::move(schema), std::move(raw)};
}

/// Star-or-chain database: one entity table and up to max_tables - 1 child
/// tables. Fully determined by (config, seed).
inline LatentRecord sample_latent(const ScmConfig& cfg, std::uint64_t seed) {
  using namespace scm_detail;
  if (cfg.entities == 0 || cfg.min_tables == 0 || cfg.max_tables < cfg.min_tables || cfg.noise_scale < 0)
    throw InputError("invalid SCM config");
  Rng rng(hash_combine(seed, 0x5c3));
  LatentRecord lat;
  const std::size_t n = cfg.entities;
  lat.z.resize(n);
  lat.rate.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    lat.z[e] = rng.normal();
    lat.rate[e] = cfg.rate_correlation * lat.z[e] + std::sqrt(1 - cfg.rate_correlation * cfg.rate_correlation) * rng.normal();
  }
  const std::size_t n_tables = cfg.min_tables + rng.below(cfg.max_tables - cfg.min_tables + 1);
  const bool chain = rng.bernoulli(0.5);
  for (std::size_t t = 0; t < n_tables; ++t) {
    TableLatent tab;
    tab.name = t == 0 ? "entities" : "events" + std::to_string(t);
    tab.pk = t == 0 ? "entity_id" : "event" + std::to_string(t) + "_id";
    if (t > 0) {
      tab.parent = chain ? t - 1 : 0;
      tab.fk = lat.tables[tab.parent].pk;
      tab.timed = true;
    }
    const std::size_t parent_rows = t == 0 ? 0 : (tab.parent == 0 ? n : lat.tables[tab.parent].parent_row.size());
    if (t > 0) {
      // Child counts: fixed range, or preferential attachment weighted by the
      // parent's activity rate with an exact total.
      if (cfg.child_count_lo > 0) {
        for (std::uint32_t p = 0; p < parent_rows; ++p) {
          auto k = cfg.child_count_lo + rng.below(cfg.child_count_hi - cfg.child_count_lo + 1);
          for (std::size_t i = 0; i < k; ++i) tab.parent_row.push_back(p);
        }
      } else {
        const auto total = static_cast<std::size_t>(std::llround(cfg.rows_per_entity * static_cast<double>(parent_rows)));
        std::vector<double> w(parent_rows);
        for (std::size_t p = 0; p < parent_rows; ++p) w[p] = std::exp(0.8 * lat.rate[entity_of(lat, tab.parent, p)]);
        std::vector<double> cum(parent_rows);
        double acc = 0;
        for (std::size_t p = 0; p < parent_rows; ++p) cum[p] = acc += w[p];
        for (std::size_t i = 0; i < total; ++i) {
          auto it = std::upper_bound(cum.begin(), cum.end(), rng.uniform() * acc);
          auto p = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(parent_rows) - 1));
          tab.parent_row.push_back(static_cast<std::uint32_t>(p));
          // Attachment: each pick makes the parent more likely to be picked again.
          const double bump = 0.5 * w[p];
          w[p] += bump;
          for (std::size_t q = p; q < parent_rows; ++q) cum[q] += bump;
          acc += bump;
        }
      }
      const double horizon_ms = cfg.horizon_days * static_cast<double>(kMsPerDay);
      for (std::size_t r = 0; r < tab.parent_row.size(); ++r) {
        Timestamp t0 = lat.tables[tab.parent].timed ? lat.tables[tab.parent].times[tab.parent_row[r]] : 0;
        double span = horizon_ms - static_cast<double>(t0);
        tab.times.push_back(t0 + static_cast<Timestamp>(std::floor(rng.uniform() * std::max(span, 1.0) / 1000.0)) * 1000);
      }
    }
    const std::size_t features = cfg.min_features + rng.below(cfg.max_features - cfg.min_features + 1);
    const std::size_t parent_cols = t == 0 ? 0 : lat.tables[tab.parent].columns.size();
    for (std::size_t c = 0; c < features; ++c) {
      double lw = t == 0 ? cfg.entity_signal : cfg.child_signal;
      if (t == 0 && rng.bernoulli(0.3)) lw = 0;
      tab.columns.push_back(random_column(rng, "f" + std::to_string(c), c, parent_cols, lw, cfg));
    }
    for (std::size_t c = 0; c < cfg.noise_columns; ++c) {
      ColumnSpec s;
      s.name = "noise" + std::to_string(c);
      s.mech.noise_scale = 1.0;
      tab.columns.push_back(s);
    }
    const std::size_t rows = t == 0 ? n : tab.parent_row.size();
    tab.noise.assign(tab.columns.size(), std::vector<double>(rows));
    for (auto& col : tab.noise)
      for (auto& x : col) x = rng.normal();
    lat.tables.push_back(std::move(tab));
    scm_detail::forward_table(lat, lat.tables.size() - 1);
  }
  return lat;
}

/// A generated database together with its latent record.
struct ScmDatabase {
  Store store;
  LatentRecord latent;
};

inline ScmDatabase sample_database(const ScmConfig& cfg, std::uint64_t seed) {
  auto lat = sample_latent(cfg, seed);
  auto [schema, raw] = render(lat);
  return {make_store(build_graph(schema, raw)), std::move(lat)};
}

enum class TaskFamily { kBinary, kMulticlass, kRegression, kCountRegression, kCountBinary };

inline std::string_view to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::kBinary: return "binary";
    case TaskFamily::kMulticlass: return "multiclass";
    case TaskFamily::kRegression: return "regression";
    case TaskFamily::kCountRegression: return "count_regression";
    case TaskFamily::kCountBinary: return "count_binary";
  }
  return "?";
}

/// Static targets are y = f(a * z + b), then thresholded, binned or rescaled.
struct TargetSpec {
  TaskFamily family = TaskFamily::kBinary;
  Nonlin f = Nonlin::kIdentity;
  double a = 1, b = 0;
  double scale = 1, offset = 0;        // regression
  std::vector<double> cuts;            // binary: one cut; multiclass: K - 1 cuts
  std::vector<std::string> class_names;
  Timestamp window = 0;                // temporal families
  double threshold = 0;                // count_binary
};

struct TaskOptions {
  /// Relative weights of binary, multiclass, regression, count_regression, count_binary.
  std::vector<double> family_weights{3, 1, 1, 1, 1};
  double prediction_fraction = 0.3;
  std::size_t max_predictions = 0;  // 0 = no cap
  std::size_t context_budget = 512;
  std::size_t max_windows = 4;
  std::size_t lag_timesteps = 0;  // temporal families only
};

/// A generated task: its own store (static targets live in the entity table),
/// the compiled plan, a context table, and oracle labels for the prediction rows.
struct ScmTask {
  std::string family;
  Store store;
  pql::TaskPlan plan;
  TaskTable table;
  std::vector<double> labels;  // one per table.prediction row
  TargetSpec target;
  LatentRecord latent;
};

/// Latent target value of every entity, before thresholding or binning.
inline std::vector<double> latent_target(const LatentRecord& lat, const TargetSpec& spec) {
  std::vector<double> y(lat.z.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = apply(spec.f, spec.a * lat.z[e] + spec.b);
  return y;
}

/// Emitted static label of every entity: 0/1, class index, or value.
inline std::vector<double> recompute_labels(const LatentRecord& lat, const TargetSpec& spec) {
  auto y = latent_target(lat, spec);
  for (auto& v : y) {
    switch (spec.family) {
      case TaskFamily::kBinary: v = v > spec.cuts.at(0) ? 1.0 : 0.0; break;
      case TaskFamily::kMulticlass:
        v = static_cast<double>(std::upper_bound(spec.cuts.begin(), spec.cuts.end(), v) - spec.cuts.begin());
        break;
      case TaskFamily::kRegression: v = spec.scale * v + spec.offset; break;
      default: throw InputError("temporal families have no static labels");
    }
  }
  return y;
}

namespace scm_detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1 - frac) + v[i + 1] * frac : v[i];
}

/// Prediction entities, context table and oracle labels for a compiled plan.
inline void fill_task(ScmTask& task, Timestamp anchor, const TaskOptions& opt, std::uint64_t seed) {
  const auto n = task.store.graph.table(task.plan.entity_table).rows;
  std::vector<std::uint32_t> ents(n);
  std::iota(ents.begin(), ents.end(), 0u);
  Rng rng(hash_combine(seed, 0x9e1));
  rng.shuffle(ents);
  auto k = static_cast<std::size_t>(std::ceil(opt.prediction_fraction * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n > 1 ? n - 1 : 1);
  if (opt.max_predictions) k = std::min(k, opt.max_predictions);
  ents.resize(k);
  std::sort(ents.begin(), ents.end());
  ContextConfig cc;
  cc.budget = opt.context_budget;
  cc.max_windows = opt.max_windows;
  cc.lag_timesteps = task.plan.temporal ? opt.lag_timesteps : 0;
  cc.seed = hash_combine(seed, 0xc7);
  task.table = generate_context(task.plan, task.store, ents, anchor, cc);
  std::vector<TaskRow> kept;
  for (auto& row : task.table.prediction) {
    auto y = compute_label(task.plan, task.store, row.entity, row.anchor);
    if (!y) continue;
    task.labels.push_back(*y);
    kept.push_back(row);
  }
  task.table.prediction = std::move(kept);
}

}  // namespace scm_detail

/// Draws a task over `db`. Static families append a `target` column to the
/// entity table and recompile; temporal families query COUNT windows of the
/// first child table, whose activity is driven by the latent rate.
inline ScmTask sample_task(const ScmDatabase& db, std::uint64_t seed, const TaskOptions& opt = {}) {
  using namespace scm_detail;
  Rng rng(hash_combine(seed, 0x7a5));
  const auto& lat = db.latent;
  auto weights = opt.family_weights;
  weights.resize(5, 0.0);
  if (lat.tables.size() < 2) weights[3] = weights[4] = 0;
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0)) throw InputError("no task family applicable");
  double u = rng.uniform() * total;
  std::size_t fam = 0;
  while (fam + 1 < weights.size() && (u -= weights[fam]) >= 0) ++fam;
  while (weights[fam] == 0) --fam;

  ScmTask task;
  task.latent = lat;
  auto& spec = task.target;
  spec.family = static_cast<TaskFamily>(fam);
  task.family = std::string(to_string(spec.family));

  if (spec.family == TaskFamily::kCountRegression || spec.family == TaskFamily::kCountBinary) {
    task.store = db.store;
    auto [lo, hi] = task.store.graph.time_range();
    const Timestamp span_days = std::max<Timestamp>((hi - lo) / kMsPerDay, 8);
    spec.window = std::max<Timestamp>(span_days / 8, 1) * kMsPerDay;
    const Timestamp anchor = hi - spec.window;
    const std::string query = "PREDICT COUNT(" + lat.tables[1].name + ".*, 0, " + std::to_string(spec.window / kMsPerDay) +
                              ", DAYS) FOR EACH " + lat.tables[0].name + "." + lat.tables[0].pk;
    task.plan = pql::compile(query, task.store.graph);
    if (spec.family == TaskFamily::kCountBinary) {
      std::vector<double> counts;
      for (std::uint32_t e = 0; e < lat.z.size(); ++e)
        counts.push_back(*compute_label(task.plan, task.store, e, anchor));
      spec.threshold = std::floor(quantile(counts, 0.5));
      if (spec.threshold >= *std::max_element(counts.begin(), counts.end())) spec.threshold -= 1;
      task.plan = pql::compile(query.substr(0, query.find(" FOR EACH")) + " > " + pql::format_number(spec.threshold) +
                                   query.substr(query.find(" FOR EACH")),
                               task.store.graph);
    }
    fill_task(task, anchor, opt, seed);
    return task;
  }

  spec.f = rng.bernoulli(0.5) ? Nonlin::kIdentity : Nonlin::kTanh;
  spec.a = 0.8 + rng.uniform();
  spec.b = 0.3 * rng.normal();
  auto y = latent_target(lat, spec);
  ExtraColumn col{"target", std::vector<std::string>(y.size()), SemanticType::kCategorical};
  if (spec.family == TaskFamily::kBinary) {
    spec.cuts = {quantile(y, 0.5)};
    spec.class_names = {"false", "true"};
  } else if (spec.family == TaskFamily::kMulticlass) {
    const std::size_t k = 3 + rng.below(4);
    for (std::size_t i = 1; i < k; ++i) spec.cuts.push_back(quantile(y, static_cast<double>(i) / static_cast<double>(k)));
    for (std::size_t i = 0; i < k; ++i) spec.class_names.push_back("class" + std::to_string(i) + "_" + random_label(rng));
  } else {
    spec.scale = std::exp(1.5 * rng.normal());
    spec.offset = 10 * rng.normal();
    col.stype = SemanticType::kNumerical;
  }
  auto labels = recompute_labels(lat, spec);
  for (std::size_t e = 0; e < y.size(); ++e)
    col.cells[e] = spec.family == TaskFamily::kRegression ? pql::format_number(labels[e])
                                                          : spec.class_names[static_cast<std::size_t>(labels[e])];
  auto [schema, raw] = render(lat, {col});
  task.store = make_store(build_graph(schema, raw));
  task.plan = pql::compile("PREDICT " + lat.tables[0].name + ".target FOR EACH " + lat.tables[0].name + "." + lat.tables[0].pk,
                           task.store.graph);
  fill_task(task, default_anchor(task.plan, task.store.graph), opt, seed);
  return task;
}

/// Row-interaction task: y = 1 iff some child row has (A, B) = pattern.
/// Negatives are marginal-matched to a paired positive, so per-column
/// aggregates of A and B carry no signal.
struct ExistentialConfig {
  std::size_t entities = 200;
  std::size_t rows_lo = 2, rows_hi = 6;
  std::size_t distractors = 0;  // extra child columns
  bool random_pattern = false;  // pattern (1, 1) otherwise
  bool shuffle_columns = false;
  std::size_t entity_noise_columns = 0;
  bool names_t1_t2 = false;  // tables t1/t2 and columns A/B
};

inline ScmTask make_existential(const ExistentialConfig& cfg, std::uint64_t seed, const TaskOptions& opt = {}) {
  if (cfg.rows_lo < 2 || cfg.rows_hi < cfg.rows_lo)
    throw InputError("marginal matching needs at least 2 rows per entity");
  if (cfg.entities < 2) throw InputError("need at least 2 entities");
  Rng rng(hash_combine(seed, 0xc0));
  const std::size_t n = cfg.entities;
  const int pa = cfg.random_pattern ? static_cast<int>(rng.below(2)) : 1;
  const int pb = cfg.random_pattern ? static_cast<int>(rng.below(2)) : 1;
  std::vector<int> y(n);
  for (std::size_t e = 0; e < n; ++e) y[e] = e % 2 == 0;
  rng.shuffle(y);
  // Pairs (positive, negative) share (r, nA, nB).
  std::vector<std::size_t> pos, neg;
  for (std::size_t e = 0; e < n; ++e) (y[e] ? pos : neg).push_back(e);
  std::vector<std::array<std::size_t, 3>> shape(n);
  for (std::size_t i = 0; i < std::max(pos.size(), neg.size()); ++i) {
    const std::size_t r = cfg.rows_lo + rng.below(cfg.rows_hi - cfg.rows_lo + 1);
    const std::size_t na = 1 + rng.below(r - 1);
    const std::size_t nb = 1 + rng.below(r - na);
    if (i < pos.size()) shape[pos[i]] = {r, na, nb};
    if (i < neg.size()) shape[neg[i]] = {r, na, nb};
  }
  std::vector<std::uint32_t> parent;
  std::vector<int> col_a, col_b;
  for (std::size_t e = 0; e < n; ++e) {
    auto [r, na, nb] = shape[e];
    std::vector<std::pair<int, int>> rows;
    if (y[e]) {
      rows.push_back({1, 1});
      for (std::size_t i = 1; i < na; ++i) rows.push_back({1, 0});
      for (std::size_t i = 1; i < nb; ++i) rows.push_back({0, 1});
    } else {
      for (std::size_t i = 0; i < na; ++i) rows.push_back({1, 0});
      for (std::size_t i = 0; i < nb; ++i) rows.push_back({0, 1});
    }
    while (rows.size() < r) rows.push_back({0, 0});
    rng.shuffle(rows);
    for (auto [a, b] : rows) {
      parent.push_back(static_cast<std::uint32_t>(e));
      col_a.push_back(pa ? a : 1 - a);
      col_b.push_back(pb ? b : 1 - b);
    }
  }
  const std::string t1 = cfg.names_t1_t2 ? "t1" : "entities", t2 = cfg.names_t1_t2 ? "t2" : "events1";
  const std::string pk1 = t1 == "t1" ? "t1_id" : "entity_id", pk2 = t2 == "t2" ? "t2_id" : "event1_id";
  Schema schema;
  RawTable r1{t1, {pk1}, {{}}}, r2{t2, {pk2, pk1}, {{}, {}}};
  TableMeta m1{t1, {{pk1, SemanticType::kIdentifier}}, pk1, std::nullopt, {}};
  TableMeta m2{t2, {{pk2, SemanticType::kIdentifier}, {pk1, SemanticType::kIdentifier}}, pk2, std::nullopt, {}};
  for (std::size_t e = 0; e < n; ++e) r1.columns[0].push_back(std::to_string(e));
  for (std::size_t c = 0; c < cfg.entity_noise_columns; ++c) {
    m1.columns.push_back({"noise" + std::to_string(c), SemanticType::kNumerical});
    r1.column_names.push_back(m1.columns.back().name);
    r1.columns.emplace_back();
    for (std::size_t e = 0; e < n; ++e) r1.columns.back().push_back(pql::format_number(std::round(rng.normal() * 1000) / 1000));
  }
  m1.columns.push_back({"label", SemanticType::kCategorical});
  r1.column_names.push_back("label");
  r1.columns.emplace_back();
  for (std::size_t e = 0; e < n; ++e) r1.columns.back().push_back(y[e] ? "true" : "false");
  for (std::size_t i = 0; i < parent.size(); ++i) {
    r2.columns[0].push_back(std::to_string(i));
    r2.columns[1].push_back(std::to_string(parent[i]));
  }
  // Child feature columns: A, B and distractors, optionally in shuffled order.
  std::vector<std::size_t> order(2 + cfg.distractors);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.shuffle_columns) rng.shuffle(order);
  std::vector<std::vector<std::string>> feats(order.size(), std::vector<std::string>(parent.size()));
  for (std::size_t i = 0; i < parent.size(); ++i) {
    feats[0][i] = std::to_string(col_a[i]);
    feats[1][i] = std::to_string(col_b[i]);
    for (std::size_t d = 0; d < cfg.distractors; ++d) feats[2 + d][i] = std::to_string(rng.below(2));
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t src = order[k];
    std::string name = src == 0 ? (cfg.names_t1_t2 ? "A" : "f" + std::to_string(k))
                       : src == 1 ? (cfg.names_t1_t2 ? "B" : "f" + std::to_string(k))
                                  : "f" + std::to_string(k);
    m2.columns.push_back({name, SemanticType::kNumerical});
    r2.column_names.push_back(name);
    r2.columns.push_back(std::move(feats[src]));
  }
  schema.tables = {m1, m2};
  schema.links = {{t2, pk1, t1}};
  std::vector<RawTable> raw{r1, r2};
  ScmTask task;
  task.family = "existential";
  task.store = make_store(build_graph(schema, raw));
  task.plan = pql::compile("PREDICT " + t1 + ".label FOR EACH " + t1 + "." + pk1, task.store.graph);
  task.target.family = TaskFamily::kBinary;
  task.target.class_names = {"false", "true"};
  scm_detail::fill_task(task, default_anchor(task.plan, task.store.graph), opt, seed);
  return task;
}

/// Conjunction benchmark: tables t1(t1_id, label) and t2(t2_id, t1_id, A, B),
/// balanced, with every negative marginal-matched to a positive.
inline ScmTask make_conjunction(std::size_t n_entities, std::size_t rows_per_entity, std::uint64_t seed,
                                const TaskOptions& opt = {}) {
  if (rows_per_entity < 2) throw InputError("marginal matching needs at least 2 rows per entity");
  ExistentialConfig cfg;
  cfg.entities = n_entities;
  cfg.rows_lo = cfg.rows_hi = rows_per_entity;
  cfg.names_t1_t2 = true;
  auto task = make_existential(cfg, seed, opt);
  task.family = "conjunction";
  return task;
}

}  // namespace relicl::scm
