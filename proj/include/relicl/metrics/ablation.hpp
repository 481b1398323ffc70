#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relicl/metrics/metrics.hpp"
#include "relicl/model/train.hpp"

namespace relicl::metrics {

/// One robustness sweep over SCM tasks. Every grid point evaluates the same
/// (seed, task) pairs, so points are paired samples.
struct AblationSpec {
  std::string sweep = "depth";  // context_size | depth | fanout | feature_drop | edge_drop | noise_columns
  std::vector<double> grid;     // empty = default grid of the sweep
  std::string family = "multi_table";  // multi_table | long_memory | single_table | existential
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t tasks_per_seed = 3;
  std::size_t entities = 300;
  std::size_t context_budget = 256;
  std::size_t max_predictions = 200;
  std::vector<std::size_t> fanouts{16, 8};  // used when the sweep does not set them
  std::string checkpoint;

  nlohmann::json to_json() const {
    return {{"sweep", sweep},     {"grid", grid},
            {"family", family},   {"seeds", seeds},
            {"tasks_per_seed", tasks_per_seed}, {"entities", entities},
            {"context_budget", context_budget}, {"max_predictions", max_predictions},
            {"fanouts", fanouts}, {"checkpoint", checkpoint}};
  }
  static AblationSpec from_json(const nlohmann::json& j) {
    AblationSpec s;
    s.sweep = j.at("sweep");
    s.grid = j.at("grid").get<std::vector<double>>();
    s.family = j.at("family");
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    s.tasks_per_seed = j.at("tasks_per_seed");
    s.entities = j.at("entities");
    s.context_budget = j.at("context_budget");
    s.max_predictions = j.at("max_predictions");
    s.fanouts = j.at("fanouts").get<std::vector<std::size_t>>();
    s.checkpoint = j.value("checkpoint", "");
    return s;
  }
};

inline std::vector<double> default_grid(const AblationSpec& s) {
  if (s.sweep == "context_size") {
    std::vector<double> g;
    for (std::size_t c = 8; c < s.context_budget; c *= 2) g.push_back(static_cast<double>(c));
    g.push_back(static_cast<double>(s.context_budget));
    return g;
  }
  if (s.sweep == "depth") return {0, 1, 2, 3, 4, 5, 6};
  if (s.sweep == "fanout") return {1, 2, 4, 8, 16, 32, 64};
  if (s.sweep == "feature_drop") return {0, 0.1, 0.2, 0.3, 0.5, 0.7};
  if (s.sweep == "edge_drop") return {0, 0.25, 0.5, 0.75, 1.0};
  if (s.sweep == "noise_columns") return {0, 2, 4, 8, 16};
  throw InputError("unknown ablation sweep '" + s.sweep + "'");
}

struct AblationPoint {
  double x = 0;
  double mean = 0;
  double sem = 0;                // standard error over seeds
  std::vector<double> per_seed;  // mean AUROC over the seed's tasks
};

struct AblationResult {
  nlohmann::json fingerprint;
  std::vector<AblationPoint> points;
  std::vector<EvalReport> reports;  // one per (point, seed)
};

namespace ablation_detail {

/// Per-hop fanouts for a depth sweep: wide first hop, narrow beyond.
inline std::vector<std::size_t> depth_fanouts(std::size_t depth) {
  static const std::size_t caps[] = {16, 4, 2, 2, 2, 2, 2, 2};
  std::vector<std::size_t> f;
  for (std::size_t h = 0; h < depth; ++h) f.push_back(caps[std::min<std::size_t>(h, 7)]);
  return f;
}

/// Appends `k` standard-normal numerical columns to every table. The rest of
/// the database, and hence every label, is unchanged.
inline Store inject_noise_columns(const Store& s, std::size_t k, std::uint64_t seed) {
  if (k == 0) return s;
  Schema schema = s.graph.schema();
  auto raw = export_raw(s.graph);
  for (std::size_t t = 0; t < raw.size(); ++t) {
    Rng rng(hash_combine(seed, t));
    auto& meta = schema.table(raw[t].name);
    for (std::size_t c = 0; c < k; ++c) {
      const std::string name = "injected_noise" + std::to_string(c);
      meta.columns.push_back({name, SemanticType::kNumerical});
      raw[t].column_names.push_back(name);
      std::vector<std::string> vals(raw[t].rows());
      for (auto& v : vals) v = pql::format_number(std::round(rng.normal() * 1e6) / 1e6);
      raw[t].columns.push_back(std::move(vals));
    }
  }
  return make_store(build_graph(schema, std::span<const RawTable>(raw)));
}

inline scm::ScmTask make_task(const AblationSpec& s, std::uint64_t seed, std::size_t index) {
  const std::uint64_t ts = hash_combine(hash_combine(seed, 0xab1a), index);
  scm::TaskOptions opt;
  opt.family_weights = {1, 0, 0, 0, 0};
  opt.context_budget = s.context_budget;
  opt.max_predictions = s.max_predictions;
  opt.prediction_fraction = 0.4;
  if (s.family == "existential") {
    scm::ExistentialConfig ex;
    ex.entities = s.entities;
    ex.random_pattern = true;
    ex.shuffle_columns = true;
    return scm::make_existential(ex, ts, opt);
  }
  scm::ScmConfig cfg;
  cfg.entities = s.entities;
  if (s.family == "multi_table") {
    cfg.min_tables = 2, cfg.max_tables = 3;
    cfg.entity_signal = 0;
  } else if (s.family == "long_memory") {
    cfg.min_tables = cfg.max_tables = 2;
    cfg.child_count_lo = 12, cfg.child_count_hi = 28;
    cfg.entity_signal = 0;
    cfg.noise_scale = 1.0;
    cfg.max_features = 2;
  } else if (s.family == "single_table") {
    cfg.min_tables = cfg.max_tables = 1;
  } else {
    throw InputError("unknown ablation family '" + s.family + "'");
  }
  return scm::sample_task(scm::sample_database(cfg, ts), ts, opt);
}

}  // namespace ablation_detail

/// Hash of every parameter value; identifies the evaluated weights.
template <class T>
std::uint64_t params_hash(const model::Model<T>& m) {
  std::uint64_t h = 0x9a7a;
  for (const auto& t : m.params().tensors())
    for (T v : t.value()) {
      const double d = static_cast<double>(v);
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      h = hash_combine(h, bits);
    }
  return h;
}

/// Runs the sweep. Perturbations act on model inputs only: feature drop hides
/// context cells, edge drop hides PK-FK edges, noise columns are appended
/// to every table; labels are never perturbed.
template <class T>
AblationResult run_ablation(const model::Model<T>& m, const AblationSpec& spec) {
  using namespace ablation_detail;
  if (spec.seeds.empty() || spec.tasks_per_seed == 0) throw InputError("ablation needs at least one seed and task");
  const auto grid = spec.grid.empty() ? default_grid(spec) : spec.grid;
  AblationResult res;
  res.fingerprint = spec.to_json();
  res.fingerprint["grid"] = grid;
  res.fingerprint["model"] = m.config().to_json();
  res.fingerprint["params_hash"] = std::to_string(params_hash(m));

  std::vector<std::vector<scm::ScmTask>> tasks;
  for (auto seed : spec.seeds) {
    tasks.emplace_back();
    for (std::size_t i = 0; i < spec.tasks_per_seed; ++i) tasks.back().push_back(make_task(spec, seed, i));
  }

  for (double x : grid) {
    AblationPoint pt;
    pt.x = x;
    for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
      double sum = 0;
      std::size_t n = 0, rows = 0;
      for (std::size_t i = 0; i < spec.tasks_per_seed; ++i) {
        const auto& task = tasks[si][i];
        std::optional<Store> noisy;
        if (spec.sweep == "noise_columns")
          noisy = inject_noise_columns(task.store, static_cast<std::size_t>(x), hash_combine(spec.seeds[si], i));
        const Store& store = noisy ? *noisy : task.store;
        model::PredictConfig pc;
        pc.batch.sampler.fanouts = spec.fanouts;
        auto table = task.table;
        if (spec.sweep == "context_size") {
          Rng rng(hash_combine(spec.seeds[si], i));
          rng.shuffle(table.context);
          table.context.resize(std::min(table.context.size(), static_cast<std::size_t>(x)));
        } else if (spec.sweep == "depth") {
          pc.batch.sampler.fanouts = depth_fanouts(static_cast<std::size_t>(x));
        } else if (spec.sweep == "fanout") {
          const auto f = static_cast<std::size_t>(x);
          pc.batch.sampler.fanouts = {f, f};
        } else if (spec.sweep == "feature_drop") {
          pc.batch.feature_drop = x;
          pc.batch.drop_seed = hash_combine(spec.seeds[si], 0xd7);
        } else if (spec.sweep == "edge_drop") {
          pc.batch.sampler.edge_drop_rate = x;
          pc.batch.sampler.seed = hash_combine(spec.seeds[si], 0xed);
        }
        std::vector<int> y(task.labels.begin(), task.labels.end());
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) continue;
        std::vector<double> scores;
        for (const auto& p : model::predict(m, store, task.plan, table, pc)) scores.push_back(p.value);
        sum += auroc(scores, y);
        rows += y.size();
        ++n;
      }
      const double v = n ? sum / static_cast<double>(n) : 0.5;
      pt.per_seed.push_back(v);
      EvalReport r;
      r.task = spec.family;
      r.metric = "auroc";
      r.value = v;
      r.n = rows;
      r.fingerprint = {{"sweep", spec.sweep}, {"x", x}, {"seed", spec.seeds[si]}};
      res.reports.push_back(r);
    }
    const double k = static_cast<double>(pt.per_seed.size());
    for (double v : pt.per_seed) pt.mean += v / k;
    double var = 0;
    for (double v : pt.per_seed) var += (v - pt.mean) * (v - pt.mean);
    pt.sem = k > 1 ? std::sqrt(var / (k - 1) / k) : 0.0;
    res.points.push_back(pt);
  }
  return res;
}

/// Loads the checkpoint named in the spec and runs the sweep.
inline AblationResult run_ablation(const AblationSpec& spec) {
  if (spec.checkpoint.empty()) throw InputError("ablation needs a checkpoint");
  if (!std::ifstream(spec.checkpoint)) throw InputError("checkpoint '" + spec.checkpoint + "' not found");
  auto m = model::load_model<float>(spec.checkpoint);
  return run_ablation(m, spec);
}

inline nlohmann::json to_json(const AblationResult& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) pts.push_back({{"x", p.x}, {"mean", p.mean}, {"stderr", p.sem}, {"per_seed", p.per_seed}});
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& e : r.reports) reps.push_back(e.to_json());
  return {{"fingerprint", r.fingerprint}, {"points", pts}, {"reports", reps}};
}

/// Long-form CSV: one line per (point, seed).
inline void write_csv(std::ostream& out, const AblationResult& r) {
  out << "sweep,family,x,seed,auroc\n";
  const auto seeds = r.fingerprint.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& p : r.points)
    for (std::size_t s = 0; s < p.per_seed.size(); ++s)
      out << r.fingerprint.at("sweep").get<std::string>() << ',' << r.fingerprint.at("family").get<std::string>() << ','
          << pql::format_number(p.x) << ',' << seeds[s] << ',' << pql::format_number(p.per_seed[s]) << '\n';
}

/// Plot data: x, y (mean over seeds), stderr.
inline void write_plot_data(std::ostream& out, const AblationResult& r) {
  out << "x,y,stderr\n";
  for (const auto& p : r.points)
    out << pql::format_number(p.x) << ',' << pql::format_number(p.mean) << ',' << pql::format_number(p.sem) << '\n';
}

}  // namespace relicl::metrics
