#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relicl/baseline/linear.hpp"
#include "relicl/colstore/ingest.hpp"
#include "relicl/colstore/store_file.hpp"
#include "relicl/colstore/synthetic.hpp"
#include "relicl/metrics/ablation.hpp"
#include "relicl/metrics/metrics.hpp"
#include "relicl/model/predict.hpp"
#include "relicl/model/train.hpp"
#include "relicl/relgraph/infer.hpp"

namespace relicl::cli {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// What one command produced. Output files are bit-reproducible from the
/// config; timings live in the summary only.
struct RunResult {
  std::vector<std::string> outputs;
  std::vector<std::string> inputs;
  json summary = json::object();
};

namespace cli_detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// FNV-1a over the file bytes.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ull;
  }
  return hex64(h);
}

inline std::string text_digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) h = (h ^ c) * 1099511628211ull;
  return hex64(h);
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " path is empty");
  if (!std::filesystem::is_regular_file(path)) throw InputError(what + " '" + path + "' not found");
}

inline std::string default_checkpoint() {
  if (const char* p = std::getenv("RELICL_CHECKPOINT"); p && *p) return p;
  const char* home = std::getenv("HOME");
  return (std::filesystem::path(home ? home : ".") / ".cache" / "relicl" / "toy.ckpt").string();
}

inline Timestamp parse_anchor(const std::string& text) {
  auto t = parse_timestamp(text);
  if (!t) throw InputError("anchor time '" + text + "' is not an ISO-8601 date or datetime");
  return *t;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

/// Model from a checkpoint, falling back to the default toy checkpoint.
inline model::Model<float> load_checkpoint_model(json& c) {
  if (c.value("checkpoint", "").empty()) c["checkpoint"] = default_checkpoint();
  const std::string path = c["checkpoint"];
  if (!std::filesystem::is_regular_file(path))
    throw InputError("checkpoint '" + path + "' not found (run `relicl pretrain` or pass --checkpoint)");
  return model::load_model<float>(path);
}

inline std::vector<std::uint32_t> resolve_entities(const pql::TaskPlan& plan, const TemporalGraph& g,
                                                   const json& indices) {
  std::vector<std::uint32_t> out;
  if (indices.empty()) {
    for (std::uint32_t r = 0; r < g.table(plan.entity_table).rows; ++r) out.push_back(r);
    return out;
  }
  for (const auto& key : indices) {
    auto row = g.find_row(plan.entity_table, key.get<std::string>());
    if (!row)
      throw InputError("unknown entity '" + key.get<std::string>() + "' in table '" + g.meta(plan.entity_table).name + "'");
    out.push_back(*row);
  }
  return out;
}

inline std::size_t resolve_lags(json& c, const pql::TaskPlan& plan) {
  if (c["lag_timesteps"].get<long long>() < 0) c["lag_timesteps"] = plan.temporal ? 10 : 0;
  return c["lag_timesteps"].get<std::size_t>();
}

inline Timestamp resolve_anchor(json& c, const pql::TaskPlan& plan, const TemporalGraph& g) {
  if (c.value("anchor_time", "").empty()) {
    if (plan.temporal) throw InputError("a temporal query needs --anchor-time");
    c["anchor_time"] = format_timestamp(default_anchor(plan, g));
  }
  return parse_anchor(c["anchor_time"]);
}

inline model::PredictConfig predict_config(const json& c) {
  model::PredictConfig pc;
  pc.batch.sampler.fanouts = c.at("num_neighbors").get<std::vector<std::size_t>>();
  pc.batch.sampler.seed = c.at("seed");
  return pc;
}

inline std::string entity_column(const json& c, const pql::TaskPlan& plan, const TemporalGraph& g) {
  const std::string e = c.value("entity_column", "");
  return e.empty() ? g.meta(plan.entity_table).columns[plan.entity_column].name : e;
}

/// Task table for the prediction commands: explicit CSVs or generated context.
/// Without --indices every entity is predicted, unless `predict_all` is off
/// (fine-tuning), in which case every entity is eligible as context.
inline TaskTable task_table(json& c, const Store& store, const pql::TaskPlan& plan, std::size_t lags,
                            bool predict_all = true) {
  const auto& g = store.graph;
  TaskTable table;
  table.type = plan.type;
  if (!c.value("context_csv", "").empty()) {
    require_file(c["context_csv"], "context CSV");
    require_file(c["pred_csv"], "prediction CSV");
    TaskColumns cols{entity_column(c, plan, g), c["time_column"], c["target_column"]};
    table.context = read_task_csv(c["context_csv"], plan, g, cols).context;
    auto pred = read_task_csv(c["pred_csv"], plan, g, cols);
    table.prediction = pred.context;
    table.prediction.insert(table.prediction.end(), pred.prediction.begin(), pred.prediction.end());
    for (auto& r : table.prediction) r.target.reset();
    if (plan.temporal && lags) {
      table.lags = lags;
      const Timestamp floor = taskgen_detail::history_floor(g);
      for (auto* rows : {&table.context, &table.prediction})
        for (auto& r : *rows) r.lags = taskgen_detail::lags_of(plan, store, r.entity, r.anchor, lags, floor);
    }
    return table;
  }
  const Timestamp anchor = resolve_anchor(c, plan, g);
  ContextConfig cc;
  cc.budget = model::preset(c["run_mode"].get<std::string>()).context_budget;
  cc.lag_timesteps = lags;
  cc.seed = c["seed"];
  std::vector<std::uint32_t> entities;
  if (predict_all || !c["indices"].empty()) entities = resolve_entities(plan, g, c["indices"]);
  return generate_context(plan, store, entities, anchor, cc);
}

}  // namespace cli_detail

// ---------------------------------------------------------------- commands

inline RunResult cmd_ingest(json& c) {
  using namespace cli_detail;
  auto raw = read_csv_dir(c["csv_dir"]);
  Schema schema = infer_schema(std::span<const RawTable>(raw));
  RunResult res;
  if (!c.value("schema_edits", "").empty()) {
    require_file(c["schema_edits"], "schema edits");
    std::ifstream in(c["schema_edits"].get<std::string>());
    json edits;
    try {
      edits = json::parse(in);
    } catch (const json::exception& e) {
      throw SchemaError("schema edits: " + std::string(e.what()));
    }
    const auto list = schema_edits_from_json(edits);
    schema = override_schema(std::move(schema), std::span<const SchemaEdit>(list));
    res.inputs.push_back(c["schema_edits"]);
  }
  IngestReport rep;
  auto store = make_store(build_graph(schema, std::span<const RawTable>(raw), &rep));
  rep.links.clear();
  for (std::size_t l = 0; l < store.graph.schema().links.size(); ++l) {
    const auto& link = store.graph.schema().links[l];
    std::size_t edges = 0;
    for (std::size_t e = 0; e < store.index.num_edge_types(); ++e)
      if (store.index.edge_type(e).link == l && !store.index.edge_type(e).reverse) edges = store.index.csr(e).neighbors.size();
    rep.links.push_back({link.src_table, link.fkey_column, link.dst_table, edges, store.index.dangling()[l]});
  }
  save_store(store, c["store"]);
  json report{{"schema", schema_to_json(store.graph.schema())}, {"ingest", rep.to_json()}};
  write_text(c["report"], report.dump(2) + "\n");
  res.outputs = {c["store"], c["report"]};
  res.summary = {{"tables", store.graph.num_tables()}, {"links", store.graph.schema().links.size()}};
  return res;
}

inline RunResult cmd_predict(json& c) {
  using namespace cli_detail;
  require_file(c["store"], "store");
  auto store = load_store(c["store"]);
  auto m = load_checkpoint_model(c);
  auto plan = pql::compile(c["query"].get<std::string>(), store.graph);
  const std::size_t lags = resolve_lags(c, plan);
  auto table = task_table(c, store, plan, lags);
  model::EnsembleConfig ens;
  ens.estimators = c["estimators"];
  ens.column_shuffle = c["column_shuffle"];
  ens.class_shuffle = c["class_shuffle"];
  ens.seed = c["seed"];
  const auto t0 = std::chrono::steady_clock::now();
  auto out = model::ensemble_predict(m, store, plan, table, predict_config(c), ens);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  const std::string key = entity_column(c, plan, store.graph);
  std::string lines;
  for (const auto& p : out.predictions) {
    auto j = model::prediction_json(p, plan, store.graph);
    j[key] = j["entity"];
    if (key != "entity") j.erase("entity");
    lines += j.dump() + "\n";
  }
  write_text(c["out"], lines);
  RunResult res;
  res.outputs = {c["out"]};
  res.inputs = {c["store"], c["checkpoint"]};
  for (const char* k : {"context_csv", "pred_csv"})
    if (!c.value(k, "").empty()) res.inputs.push_back(c[k]);
  res.summary = {{"rows", out.predictions.size()},
                 {"context_rows", table.context.size()},
                 {"task_type", pql::to_string(plan.type)},
                 {"ensemble_spread", out.spread},
                 {"latency_ms", ms}};
  return res;
}

inline RunResult cmd_pretrain(json& c) {
  using namespace cli_detail;
  model::PretrainConfig pc;
  pc.steps = c["steps"];
  pc.seed = c["seed"];
  pc.checkpoint_every = c["checkpoint_every"];
  pc.checkpoint_path = c["out"];
  const bool resume = c["resume"] && std::filesystem::is_regular_file(pc.checkpoint_path);
  auto m = resume ? model::load_model<float>(pc.checkpoint_path) : model::Model<float>(model::preset(c["preset"].get<std::string>()), pc.seed);
  if (resume) {
    auto prev = ad::read_checkpoint_manifest(pc.checkpoint_path);
    if (prev.value("pretrain", json()) != pc.to_json())
      throw InputError("checkpoint '" + pc.checkpoint_path + "' was written with a different pre-training config");
  }
  if (auto dir = std::filesystem::path(pc.checkpoint_path).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  const auto evals = model::evaluation_episodes(pc, 20, hash_combine(pc.seed, 0xe7a1));
  const double before = model::mean_loss(m, evals);
  auto rep = model::pretrain(m, pc);
  const double after = model::mean_loss(m, evals);
  RunResult res;
  res.outputs = {pc.checkpoint_path};
  res.summary = {{"start_step", rep.start_step}, {"end_step", rep.end_step}, {"eval_loss_before", before},
                 {"eval_loss_after", after},     {"seconds", rep.seconds}};
  return res;
}

inline RunResult cmd_finetune(json& c) {
  using namespace cli_detail;
  require_file(c["store"], "store");
  auto store = load_store(c["store"]);
  auto m = load_checkpoint_model(c);
  const std::string base = c["checkpoint"];
  auto plan = pql::compile(c["query"].get<std::string>(), store.graph);
  const std::size_t lags = resolve_lags(c, plan);
  auto table = task_table(c, store, plan, lags, false);
  model::FineTuneConfig fc;
  fc.steps = c["steps"];
  fc.lr = c["lr"];
  fc.seed = c["seed"];
  fc.max_seconds = c["max_seconds"];
  fc.batch.sampler.fanouts = c["num_neighbors"].get<std::vector<std::size_t>>();
  auto rep = model::fine_tune(m, store, plan, table, fc);
  json manifest{{"kind", "finetune"},
                {"model", m.config().to_json()},
                {"base_checkpoint", file_digest(base)},
                {"query", c["query"]},
                {"fine_tune", {{"steps", fc.steps}, {"lr", fc.lr}, {"seed", fc.seed}}}};
  if (auto dir = std::filesystem::path(c["out"].get<std::string>()).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  ad::save_checkpoint(m.params(), manifest, c["out"]);
  RunResult res;
  res.outputs = {c["out"]};
  res.inputs = {c["store"], base};
  res.summary = {{"steps_run", rep.steps_run}, {"base_loss", rep.base_loss}, {"tuned_loss", rep.tuned_loss},
                 {"kept", rep.kept},           {"seconds", rep.seconds}};
  return res;
}

inline RunResult cmd_evaluate(json& c, std::ostream& out) {
  using namespace cli_detail;
  auto m = load_checkpoint_model(c);
  RunResult res;
  res.inputs = {c["checkpoint"]};
  std::vector<metrics::EvalReport> reports;
  const auto pc = predict_config(c);
  if (c["store"].get<std::string>().empty()) {
    if (c["benchmark"] != "conjunction") throw InputError("unknown benchmark '" + c["benchmark"].get<std::string>() + "'");
    out << "seed  model_auroc  dfs_auroc\n";
    for (auto seed : c["seeds"].get<std::vector<std::uint64_t>>()) {
      scm::TaskOptions o;
      o.context_budget = c["context_budget"];
      o.prediction_fraction = 0.3;
      auto task = scm::make_conjunction(c["entities"], c["rows_per_entity"], seed, o);
      std::vector<int> y(task.labels.begin(), task.labels.end());
      std::vector<double> ms, ds;
      for (const auto& p : model::predict(m, task.store, task.plan, task.table, pc)) ms.push_back(p.value);
      baseline::LinearConfig lc;
      lc.seed = seed;
      ds = baseline::dfs_linear_scores(task.store, task.plan, task.table.context, task.table.prediction, 2, lc);
      const double a = metrics::auroc(ms, y), b = metrics::auroc(ds, y);
      out << std::setw(4) << seed << "  " << std::fixed << std::setprecision(4) << std::setw(11) << a << "  "
          << std::setw(9) << b << "\n";
      out.unsetf(std::ios::fixed);
      for (auto [name, v] : {std::pair{"icl", a}, std::pair{"dfs_linear", b}})
        reports.push_back({"conjunction", "auroc", v, y.size(), {{"seed", seed}, {"model", name}}});
    }
  } else {
    require_file(c["store"], "store");
    auto store = load_store(c["store"]);
    res.inputs.push_back(c["store"]);
    auto plan = pql::compile(c["query"].get<std::string>(), store.graph);
    const std::size_t lags = resolve_lags(c, plan);
    const Timestamp anchor = resolve_anchor(c, plan, store.graph);
    ContextConfig cc;
    cc.budget = c["context_budget"];
    cc.lag_timesteps = lags;
    cc.seed = c["seed"];
    auto all = generate_context(plan, store, {}, anchor, cc);
    auto [ctx, eval] = holdout_split(all.context, c["holdout"], plan.temporal, c["seed"]);
    TaskTable table{plan.type, ctx, eval, all.lags};
    for (auto& r : table.prediction) r.target.reset();
    auto preds = model::predict(m, store, plan, table, pc);
    const std::string task = c["query"];
    if (plan.type == pql::TaskType::kRegression) {
      std::vector<double> p, t;
      for (std::size_t i = 0; i < preds.size(); ++i) p.push_back(preds[i].value), t.push_back(*eval[i].target);
      reports.push_back({task, "mae", metrics::mae(p, t), p.size(), {{"model", "icl"}}});
    } else if (plan.type == pql::TaskType::kMulticlass) {
      std::vector<std::vector<std::size_t>> rk;
      std::vector<std::size_t> t;
      for (std::size_t i = 0; i < preds.size(); ++i)
        rk.push_back(metrics::ranking(preds[i].probs)), t.push_back(static_cast<std::size_t>(*eval[i].target));
      reports.push_back({task, "mrr", metrics::mrr(rk, t), t.size(), {{"model", "icl"}}});
    } else {
      std::vector<double> s;
      std::vector<int> y;
      for (std::size_t i = 0; i < preds.size(); ++i) s.push_back(preds[i].value), y.push_back(static_cast<int>(*eval[i].target));
      reports.push_back({task, "auroc", metrics::auroc(s, y), y.size(), {{"model", "icl"}}});
      auto d = baseline::dfs_linear_scores(store, plan, ctx, table.prediction, 2);
      reports.push_back({task, "auroc", metrics::auroc(d, y), y.size(), {{"model", "dfs_linear"}}});
    }
    for (const auto& r : reports)
      out << r.fingerprint["model"].get<std::string>() << " " << r.metric << " " << r.value << " (n=" << r.n << ")\n";
  }
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  write_text(c["out"], json{{"reports", arr}}.dump(2) + "\n");
  res.outputs = {c["out"]};
  res.summary = {{"reports", arr}};
  return res;
}

inline RunResult cmd_ablate(json& c) {
  using namespace cli_detail;
  auto m = load_checkpoint_model(c);
  const std::string dir = c["out"];
  std::filesystem::create_directories(dir);
  RunResult res;
  res.inputs = {c["checkpoint"]};
  json all = json::object();
  for (const auto& sweep : split_list(c["sweeps"])) {
    metrics::AblationSpec s;
    s.sweep = sweep;
    s.family = c["family"];
    if (s.family == "auto") s.family = sweep == "fanout" ? "long_memory" : "multi_table";
    s.seeds = c["seeds"].get<std::vector<std::uint64_t>>();
    s.tasks_per_seed = c["tasks_per_seed"];
    s.entities = c["entities"];
    s.context_budget = c["context_budget"];
    s.checkpoint = c["checkpoint"];
    auto r = metrics::run_ablation(m, s);
    std::ostringstream csv, plot;
    metrics::write_csv(csv, r);
    metrics::write_plot_data(plot, r);
    const std::string base = (std::filesystem::path(dir) / sweep).string();
    write_text(base + ".csv", csv.str());
    write_text(base + ".plot.csv", plot.str());
    res.outputs.push_back(base + ".csv");
    res.outputs.push_back(base + ".plot.csv");
    all[sweep] = metrics::to_json(r);
  }
  const std::string j = (std::filesystem::path(dir) / "ablation.json").string();
  write_text(j, all.dump(2) + "\n");
  res.outputs.push_back(j);
  for (auto& [sweep, r] : all.items()) {
    json pts = json::array();
    for (const auto& p : r["points"]) pts.push_back({p["x"], p["mean"], p["stderr"]});
    res.summary[sweep] = pts;
  }
  return res;
}

inline RunResult cmd_bench_store(json& c, std::ostream& out) {
  using namespace cli_detail;
  const auto t0 = std::chrono::steady_clock::now();
  auto store = make_synthetic_store(c["entities"], c["edges"], c["seed"]);
  const double build = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto b = bench_lookups(store, c["lookups"], c["k"], c["seed"]);
  out << "edges " << c["edges"].get<std::size_t>() << ", lookups " << b.lookups << ": "
      << static_cast<std::uint64_t>(b.lookups_per_sec) << " lookups/sec\n";
  json det{{"entities", c["entities"]}, {"edges", c["edges"]}, {"lookups", b.lookups},
           {"k", c["k"]},               {"neighbors", b.neighbors}, {"checksum", hex64(b.checksum)}};
  write_text(c["out"], det.dump(2) + "\n");
  RunResult res;
  res.outputs = {c["out"]};
  res.summary = {{"lookups_per_sec", b.lookups_per_sec}, {"lookup_seconds", b.seconds}, {"build_seconds", build}};
  return res;
}

// ---------------------------------------------------------------- dispatch

/// Output-path keys of each command; replay redirects them.
inline std::vector<std::string> output_keys(const std::string& command) {
  if (command == "ingest") return {"store", "report"};
  return {"out"};
}

inline std::string manifest_path(const json& c) {
  const std::string command = c["command"];
  if (command == "ablate") return (std::filesystem::path(c["out"].get<std::string>()) / "manifest.json").string();
  if (command == "ingest") return c["store"].get<std::string>() + ".manifest.json";
  return c["out"].get<std::string>() + ".manifest.json";
}

/// Runs a resolved configuration. Values resolved at run time (defaults that
/// depend on the data) are written back into `c`.
inline RunResult execute(json& c, std::ostream& out) {
  const std::string command = c.at("command");
  if (command == "ingest") return cmd_ingest(c);
  if (command == "predict") return cmd_predict(c);
  if (command == "pretrain") return cmd_pretrain(c);
  if (command == "finetune") return cmd_finetune(c);
  if (command == "evaluate") return cmd_evaluate(c, out);
  if (command == "ablate") return cmd_ablate(c);
  if (command == "bench-store") return cmd_bench_store(c, out);
  throw InputError("unknown command '" + command + "'");
}

inline json write_manifest(const json& c, const RunResult& r) {
  using namespace cli_detail;
  json outputs = json::array(), inputs = json::array();
  for (const auto& p : r.outputs) outputs.push_back({{"path", p}, {"digest", file_digest(p)}});
  for (const auto& p : r.inputs) inputs.push_back({{"path", p}, {"digest", file_digest(p)}});
  json seeds = json::array();
  if (c.contains("seed")) seeds.push_back(c["seed"]);
  if (c.contains("seeds"))
    for (const auto& s : c["seeds"]) seeds.push_back(s);
  json m{{"tool", "relicl"},           {"version", kVersion},   {"command", c["command"]},
         {"config", c},                {"config_hash", text_digest(c.dump())},
         {"seeds", seeds},             {"inputs", inputs},      {"outputs", outputs},
         {"summary", r.summary}};
  write_text(manifest_path(c), m.dump(2) + "\n");
  return m;
}

/// Re-executes a manifest with every output redirected to `<path>.replay`
/// and compares output digests. Returns true when all match.
inline bool replay(const std::string& path, std::ostream& out) {
  using namespace cli_detail;
  require_file(path, "manifest");
  std::ifstream in(path);
  json m = json::parse(in);
  json c = m.at("config");
  for (const auto& in_file : m.at("inputs")) {
    const std::string p = in_file.at("path");
    if (!std::filesystem::is_regular_file(p) || file_digest(p) != in_file.at("digest"))
      out << "warning: input '" << p << "' changed since the recorded run\n";
  }
  for (const auto& k : output_keys(c.at("command"))) c[k] = c[k].get<std::string>() + ".replay";
  std::ostringstream sink;
  auto r = execute(c, sink);
  const auto& recorded = m.at("outputs");
  bool same = recorded.size() == r.outputs.size();
  for (std::size_t i = 0; same && i < r.outputs.size(); ++i) {
    const bool eq = file_digest(r.outputs[i]) == recorded[i].at("digest");
    out << (eq ? "match    " : "MISMATCH ") << recorded[i].at("path").get<std::string>() << "\n";
    same = same && eq;
  }
  out << (same ? "reproduced" : "not reproduced") << "\n";
  return same;
}

/// Entry point. Exit codes: 0 success, 1 runtime failure, 2 input error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Relational in-context learning toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string store, query, context_csv, pred_csv, anchor, run_mode = "fast", out_path, checkpoint, indices;
  std::string entity_col, time_col = "anchor_time", target_col = "target";
  std::vector<std::size_t> neighbors{32, 32};
  long long lag = -1;
  std::size_t estimators = 1;
  bool col_shuffle = false, cls_shuffle = false;
  std::uint64_t seed = 0;

  auto add_task = [&](CLI::App* s) {
    s->add_option("--store", store, "Store file")->required();
    s->add_option("--query", query, "Predictive query")->required();
    s->add_option("--anchor-time", anchor, "Prediction anchor (ISO-8601); required for temporal queries");
    s->add_option("--indices", indices, "Comma list of entity keys (default: all)");
    s->add_option("--context-csv", context_csv, "Explicit labeled context rows");
    s->add_option("--pred-csv", pred_csv, "Explicit rows to predict");
    s->add_option("--entity-column", entity_col, "Entity key column of the task CSVs (default: primary key name)");
    s->add_option("--time-column", time_col, "Anchor column of the task CSVs")->capture_default_str();
    s->add_option("--target-column", target_col, "Target column of the task CSVs")->capture_default_str();
    s->add_option("--num-neighbors", neighbors, "Per-hop fanouts")->delimiter(',')->capture_default_str();
    s->add_option("--run-mode", run_mode, "Context budget preset: fast, normal or best")->capture_default_str();
    s->add_option("--lag-timesteps", lag, "Lagged targets (default 10 temporal, 0 static)");
    s->add_option("--checkpoint", checkpoint, "Model checkpoint (default $RELICL_CHECKPOINT or ~/.cache/relicl/toy.ckpt)");
    s->add_option("--seed", seed, "Seed")->capture_default_str();
    s->add_option("--out", out_path, "Output file")->required();
  };

  std::string csv_dir, edits, report;
  auto* ingest = app.add_subcommand("ingest", "Build a store from a directory of CSV files");
  ingest->add_option("--csv-dir", csv_dir, "Directory of <table>.csv files")->required();
  ingest->add_option("--store", store, "Output store file")->required();
  ingest->add_option("--schema-edits", edits, "JSON list of schema overrides");
  ingest->add_option("--report", report, "Ingest report (default <store>.report.json)");

  auto* predict = app.add_subcommand("predict", "Predict with in-context learning");
  add_task(predict);
  predict->add_option("--estimators", estimators, "Ensemble size")->capture_default_str();
  predict->add_flag("--column-shuffle", col_shuffle, "Shuffle column order per estimator");
  predict->add_flag("--class-shuffle", cls_shuffle, "Shuffle class order per estimator");

  std::size_t steps = 3000, ckpt_every = 0;
  std::string preset = "toy";
  bool resume = false;
  auto* pretrain = app.add_subcommand("pretrain", "Pre-train on synthetic relational tasks");
  pretrain->add_option("--steps", steps, "Optimizer steps")->capture_default_str();
  pretrain->add_option("--seed", seed, "Seed")->capture_default_str();
  pretrain->add_option("--preset", preset, "Architecture preset")->capture_default_str();
  pretrain->add_option("--checkpoint-every", ckpt_every, "Save every N steps (0 = end only)");
  pretrain->add_flag("--resume", resume, "Continue from --out if it exists");
  pretrain->add_option("--out", out_path, "Checkpoint to write (default: the default checkpoint path)");

  std::size_t ft_steps = 100;
  double ft_lr = 5e-4, ft_seconds = 110;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint on one task");
  add_task(finetune);
  finetune->add_option("--steps", ft_steps, "Fine-tuning steps")->capture_default_str();
  finetune->add_option("--lr", ft_lr, "Learning rate")->capture_default_str();
  finetune->add_option("--max-seconds", ft_seconds, "Wall-clock budget")->capture_default_str();

  std::string benchmark = "conjunction", seeds = "0,1,2";
  std::size_t entities = 2000, rows_per = 4, ctx_budget = 512;
  double holdout = 0.2;
  auto* evaluate = app.add_subcommand("evaluate", "Compare the model with the DFS+linear baseline");
  evaluate->add_option("--benchmark", benchmark, "Synthetic benchmark (conjunction)")->capture_default_str();
  evaluate->add_option("--seeds", seeds, "Comma list of seeds")->capture_default_str();
  evaluate->add_option("--entities", entities, "Entities per benchmark instance")->capture_default_str();
  evaluate->add_option("--rows-per-entity", rows_per, "Child rows per entity")->capture_default_str();
  evaluate->add_option("--context-budget", ctx_budget, "Context examples")->capture_default_str();
  evaluate->add_option("--store", store, "Evaluate a query on a store instead of the benchmark");
  evaluate->add_option("--query", query, "Query for --store");
  evaluate->add_option("--anchor-time", anchor, "Anchor for --store");
  evaluate->add_option("--holdout", holdout, "Held-out fraction for --store")->capture_default_str();
  evaluate->add_option("--lag-timesteps", lag, "Lagged targets for --store");
  evaluate->add_option("--num-neighbors", neighbors, "Per-hop fanouts")->delimiter(',');
  evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint");
  evaluate->add_option("--seed", seed, "Seed for --store splits")->capture_default_str();
  evaluate->add_option("--out", out_path, "Report JSON")->required();

  std::string sweeps = "context_size,depth,fanout,feature_drop,edge_drop,noise_columns", family = "auto";
  std::size_t tasks_per_seed = 3, abl_entities = 300, abl_budget = 256;
  auto* ablate = app.add_subcommand("ablate", "Robustness sweeps on synthetic tasks");
  ablate->add_option("--sweeps", sweeps, "Comma list of sweeps")->capture_default_str();
  ablate->add_option("--family", family, "Task family (auto: long_memory for fanout, else multi_table)")->capture_default_str();
  ablate->add_option("--seeds", seeds, "Comma list of seeds")->capture_default_str();
  ablate->add_option("--tasks-per-seed", tasks_per_seed, "Tasks per seed")->capture_default_str();
  ablate->add_option("--entities", abl_entities, "Entities per task")->capture_default_str();
  ablate->add_option("--context-budget", abl_budget, "Context examples")->capture_default_str();
  ablate->add_option("--checkpoint", checkpoint, "Model checkpoint");
  ablate->add_option("--out", out_path, "Output directory")->required();

  std::size_t b_entities = 1000000, b_edges = 10000000, b_lookups = 2000000, b_k = 32;
  auto* bench = app.add_subcommand("bench-store", "Time neighbors_before on a generated store");
  bench->add_option("--entities", b_entities, "Entity rows")->capture_default_str();
  bench->add_option("--edges", b_edges, "Linked event rows")->capture_default_str();
  bench->add_option("--lookups", b_lookups, "Timed lookups")->capture_default_str();
  bench->add_option("--k", b_k, "Neighbors per lookup")->capture_default_str();
  bench->add_option("--seed", seed, "Seed")->capture_default_str();
  bench->add_option("--out", out_path, "Report JSON")->required();

  std::string manifest;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a manifest and compare its outputs");
  replay_cmd->add_option("manifest", manifest, "Manifest JSON")->required();

  auto* inspect = app.add_subcommand("inspect", "Print the schema and edge types of a store");
  inspect->add_option("--store", store, "Store file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    auto seed_list = [&](const std::string& s) {
      std::vector<std::uint64_t> v;
      for (const auto& x : cli_detail::split_list(s)) {
        try {
          v.push_back(std::stoull(x));
        } catch (const std::exception&) {
          throw InputError("bad seed '" + x + "'");
        }
      }
      if (v.empty()) throw InputError("no seeds given");
      return v;
    };
    auto key_list = [&] {
      json a = json::array();
      for (const auto& k : cli_detail::split_list(indices)) a.push_back(k);
      return a;
    };
    auto task_json = [&](const char* command) {
      if (context_csv.empty() != pred_csv.empty()) throw InputError("--context-csv and --pred-csv go together");
      if (!context_csv.empty() && !indices.empty()) throw InputError("--indices and task CSVs are mutually exclusive");
      model::preset(run_mode);
      return json{{"command", command},        {"store", store},         {"query", query},
                  {"anchor_time", anchor},     {"indices", key_list()},  {"context_csv", context_csv},
                  {"pred_csv", pred_csv},      {"entity_column", entity_col}, {"time_column", time_col},
                  {"target_column", target_col}, {"num_neighbors", neighbors}, {"run_mode", run_mode},
                  {"lag_timesteps", lag},      {"checkpoint", checkpoint}, {"seed", seed},
                  {"out", out_path}};
    };

    if (inspect->parsed()) {
      cli_detail::require_file(store, "store");
      auto s = load_store(store);
      json edges = json::array();
      for (std::size_t e = 0; e < s.index.num_edge_types(); ++e)
        edges.push_back({{"name", s.index.edge_type(e).name}, {"edges", s.index.csr(e).neighbors.size()}});
      json rows = json::object();
      for (std::size_t t = 0; t < s.graph.num_tables(); ++t) rows[s.graph.meta(t).name] = s.graph.table(t).rows;
      out << json{{"schema", schema_to_json(s.graph.schema())}, {"rows", rows}, {"edge_types", edges}}.dump(2) << "\n";
      return 0;
    }
    if (replay_cmd->parsed()) return replay(manifest, out) ? 0 : 1;

    json c;
    if (ingest->parsed()) {
      c = {{"command", "ingest"}, {"csv_dir", csv_dir}, {"store", store}, {"schema_edits", edits},
           {"report", report.empty() ? store + ".report.json" : report}};
    } else if (predict->parsed()) {
      c = task_json("predict");
      if (estimators == 0) throw InputError("--estimators must be >= 1");
      c["estimators"] = estimators;
      c["column_shuffle"] = col_shuffle;
      c["class_shuffle"] = cls_shuffle;
    } else if (pretrain->parsed()) {
      c = {{"command", "pretrain"}, {"steps", steps}, {"seed", seed}, {"preset", preset},
           {"checkpoint_every", ckpt_every}, {"resume", resume},
           {"out", out_path.empty() ? cli_detail::default_checkpoint() : out_path}};
      model::preset(preset);
    } else if (finetune->parsed()) {
      c = task_json("finetune");
      c["steps"] = ft_steps;
      c["lr"] = ft_lr;
      c["max_seconds"] = ft_seconds;
    } else if (evaluate->parsed()) {
      if (!store.empty() && query.empty()) throw InputError("--store needs --query");
      if (evaluate->count("--num-neighbors") == 0) neighbors = store.empty() ? std::vector<std::size_t>{16, 4} : neighbors;
      c = {{"command", "evaluate"}, {"benchmark", benchmark}, {"seeds", seed_list(seeds)},
           {"entities", entities},  {"rows_per_entity", rows_per}, {"context_budget", ctx_budget},
           {"store", store},        {"query", query},         {"anchor_time", anchor},
           {"holdout", holdout},    {"lag_timesteps", lag},   {"num_neighbors", neighbors},
           {"checkpoint", checkpoint}, {"seed", seed},        {"out", out_path}};
    } else if (ablate->parsed()) {
      c = {{"command", "ablate"},   {"sweeps", sweeps},     {"family", family},
           {"seeds", seed_list(seeds)}, {"tasks_per_seed", tasks_per_seed}, {"entities", abl_entities},
           {"context_budget", abl_budget}, {"checkpoint", checkpoint}, {"out", out_path}};
    } else {
      c = {{"command", "bench-store"}, {"entities", b_entities}, {"edges", b_edges}, {"lookups", b_lookups},
           {"k", b_k},                 {"seed", seed},           {"out", out_path}};
    }
    auto r = execute(c, out);
    auto m = write_manifest(c, r);
    out << json{{"config", c}, {"config_hash", m["config_hash"]}, {"summary", r.summary}}.dump() << "\n";
    return 0;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace relicl::cli
