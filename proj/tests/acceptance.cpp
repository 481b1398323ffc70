// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   acceptance [criterion numbers...]      (default: all)
// The toy checkpoint is cached next to the binary (RELICL_ACCEPTANCE_CHECKPOINT
// overrides the path); it is pre-trained on first use.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "pql_gen.hpp"
#include "relicl/cli/cli.hpp"
#include "relicl/colstore/snapshot.hpp"
#include "test_util.hpp"

#ifndef RELICL_ACCEPTANCE_DIR
#define RELICL_ACCEPTANCE_DIR "."
#endif

namespace relicl::acceptance {
namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string list(const std::vector<double>& v, int prec = 3) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], prec);
  return s + "]";
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ------------------------------------------------------------ checkpoint

struct Toy {
  std::string path;
  double pretrain_seconds = 0;
  double loss_before = 0, loss_after = 0;
  bool trained_now = false;
};

model::PretrainConfig toy_recipe() {
  model::PretrainConfig pc;
  pc.steps = 3000;
  pc.seed = 1;
  return pc;
}

/// Loads the cached toy checkpoint or pre-trains it. The sidecar records the
/// wall-clock time and the held-out loss before and after pre-training.
Toy toy_checkpoint() {
  Toy t;
  const char* env = std::getenv("RELICL_ACCEPTANCE_CHECKPOINT");
  t.path = env && *env ? env : (std::filesystem::path(RELICL_ACCEPTANCE_DIR) / "toy.ckpt").string();
  const std::string side = t.path + ".json";
  auto pc = toy_recipe();
  if (std::filesystem::exists(t.path) && std::filesystem::exists(side)) {
    auto manifest = ad::read_checkpoint_manifest(t.path);
    std::ifstream in(side);
    json j = json::parse(in);
    if (manifest.value("pretrain", json()) == pc.to_json() && manifest.value("model", json()) == model::preset("toy").to_json()) {
      t.pretrain_seconds = j.at("seconds");
      t.loss_before = j.at("loss_before");
      t.loss_after = j.at("loss_after");
      return t;
    }
  }
  std::filesystem::create_directories(std::filesystem::path(t.path).parent_path());
  std::cout << "pre-training the toy checkpoint (" << pc.steps << " steps) ..." << std::endl;
  pc.checkpoint_path = t.path;
  const auto t0 = Clock::now();
  model::Model<float> m(model::preset("toy"), pc.seed);
  const auto evals = model::evaluation_episodes(pc, 20, hash_combine(pc.seed, 0xe7a1));
  t.loss_before = model::mean_loss(m, evals);
  model::pretrain(m, pc);
  t.loss_after = model::mean_loss(m, evals);
  t.pretrain_seconds = since(t0);
  t.trained_now = true;
  std::ofstream(side) << json{{"seconds", t.pretrain_seconds}, {"loss_before", t.loss_before}, {"loss_after", t.loss_after}}.dump(2);
  return t;
}

// ------------------------------------------------------------ 1 conjunction

Verdict conjunction(const Toy& toy) {
  const auto t0 = Clock::now();
  auto m = model::load_model<float>(toy.path);
  std::vector<double> icl, dfs;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    scm::TaskOptions o;
    o.context_budget = 512;
    o.prediction_fraction = 0.3;
    auto task = scm::make_conjunction(2000, 4, seed, o);
    std::vector<int> y(task.labels.begin(), task.labels.end());
    model::PredictConfig pc;
    pc.batch.sampler.fanouts = {16, 4};
    std::vector<double> s;
    for (const auto& p : model::predict(m, task.store, task.plan, task.table, pc)) s.push_back(p.value);
    icl.push_back(metrics::auroc(s, y));
    baseline::LinearConfig lc;
    lc.seed = seed;
    dfs.push_back(metrics::auroc(
        baseline::dfs_linear_scores(task.store, task.plan, task.table.context, task.table.prediction, 2, lc), y));
  }
  const double total = toy.pretrain_seconds + since(t0);
  bool ok = total <= 900;
  for (double v : icl) ok = ok && v >= 0.95;
  for (double v : dfs) ok = ok && v >= 0.45 && v <= 0.60;
  return {ok, "model AUROC " + list(icl) + " (>= 0.95), DFS+linear AUROC " + list(dfs) + " (in [0.45, 0.60]), " +
                  fmt(total, 0) + " s end-to-end (<= 900)"};
}

// ------------------------------------------------------------ 2 no leakage

/// Copy of the store without any row stamped after `anchor`.
Store cut_store(const Store& s, Timestamp anchor) {
  const auto& g = s.graph;
  auto raw = export_raw(g);
  for (std::size_t t = 0; t < g.num_tables(); ++t) {
    auto& rt = raw[t];
    RawTable kept{rt.name, rt.column_names, std::vector<std::vector<std::string>>(rt.columns.size())};
    for (std::size_t r = 0; r < rt.rows(); ++r)
      if (g.node_time(t, r) <= anchor)
        for (std::size_t c = 0; c < rt.columns.size(); ++c) kept.columns[c].push_back(rt.columns[c][r]);
    rt = std::move(kept);
  }
  return make_store(build_graph(g.schema(), std::span<const RawTable>(raw)));
}

Verdict no_leakage(const Toy& toy) {
  std::size_t draws = 0, input_violations = 0, label_violations = 0, context_violations = 0;
  const char* templates[] = {
      "PREDICT COUNT(orders.*, 0, {E}, days) FOR EACH users.user_id",
      "PREDICT SUM(orders.amount, {S}, {E}, days) > 20 FOR EACH users.user_id",
      "PREDICT MAX(orders.amount, {S}, {E}, days, WHERE amount >= 10) FOR EACH users.user_id",
      "PREDICT COUNT(reviews.*, 0, {E}, days) = 0 FOR EACH orders.order_id",
      "PREDICT users.age FOR EACH users.user_id",
  };
  Rng rng(2024);
  for (std::uint64_t db = 0; draws < 1000; ++db) {
    auto store = testing::random_shop_store(100 + db);
    const auto& g = store.graph;
    for (int q = 0; q < 100; ++q) {
      std::string text = templates[rng.below(std::size(templates))];
      const auto s = rng.below(10), e = s + 1 + rng.below(30);
      for (auto [key, v] : {std::pair{std::string("{S}"), s}, std::pair{std::string("{E}"), e}})
        if (auto p = text.find(key); p != std::string::npos) text.replace(p, key.size(), std::to_string(v));
      auto plan = pql::compile(text, g);
      const auto entity = static_cast<std::uint32_t>(rng.below(g.table(plan.entity_table).rows));
      const Timestamp root_time = g.node_time(plan.entity_table, entity);
      if (root_time == kPosInf) continue;
      Timestamp anchor = static_cast<Timestamp>(rng.below(110)) * kMsPerDay + static_cast<Timestamp>(rng.below(3)) * 3600000;
      anchor = std::max(anchor, root_time);
      ++draws;
      SamplerConfig sc;
      sc.fanouts = {8, 8, 4};
      AccessProbe probe;
      auto sg = sample_subgraph(store, {static_cast<std::uint32_t>(plan.entity_table), entity}, anchor, sc, &probe);
      bool bad = probe.reads && probe.max_time > anchor;
      for (const auto& n : sg.nodes) bad = bad || g.node_time(n.id) > anchor;
      input_violations += bad;
      if (plan.temporal) {
        AccessProbe lp;
        compute_label(plan, store, entity, anchor, &lp);
        label_violations += lp.reads && lp.min_time <= anchor;
      }
      if (draws % 10 == 0 && plan.temporal) {
        ContextConfig cc;
        cc.budget = 24;
        cc.lag_timesteps = 2;
        cc.seed = draws;
        TaskTable tt;
        try {
          tt = generate_context(plan, store, {entity}, anchor, cc);
        } catch (const InputError&) {
          continue;  // anchor too early for one complete window
        }
        const Timestamp end = plan.temporal_label().end;
        for (const auto& r : tt.context) {
          AccessProbe cp, lp;
          sample_subgraph(store, {static_cast<std::uint32_t>(plan.entity_table), r.entity}, r.anchor, sc, &cp);
          compute_label(plan, store, r.entity, r.anchor, &lp);
          context_violations += r.anchor + end > anchor || (cp.reads && cp.max_time > r.anchor) ||
                                (lp.reads && (lp.max_time > anchor || lp.min_time <= r.anchor));
        }
      }
      if (draws >= 1000) break;
    }
  }
  // End to end: deleting every post-anchor row leaves predictions bit-identical.
  auto m = model::load_model<float>(toy.path);
  std::size_t compared = 0, differing = 0;
  scm::ScmConfig cfg;
  cfg.entities = 80;
  cfg.min_tables = cfg.max_tables = 3;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    scm::TaskOptions o;
    o.family_weights = {0, 0, 0, seed == 1 ? 0.0 : 1.0, seed == 1 ? 1.0 : 0.0};
    o.context_budget = 60;
    auto task = scm::sample_task(scm::sample_database(cfg, seed), seed, o);
    const Timestamp anchor = task.table.prediction.at(0).anchor - 45 * kMsPerDay;
    std::vector<std::uint32_t> ents;
    for (const auto& r : task.table.prediction) ents.push_back(r.entity);
    ContextConfig cc;
    cc.budget = 60;
    cc.lag_timesteps = 2;
    auto table = generate_context(task.plan, task.store, ents, anchor, cc);
    auto cut = cut_store(task.store, anchor);
    model::PredictConfig pc;
    pc.batch.sampler.fanouts = {8, 8};
    auto a = model::predict(m, task.store, task.plan, table, pc);
    auto b = model::predict(m, cut, task.plan, table, pc);
    for (std::size_t i = 0; i < a.size(); ++i, ++compared)
      differing += a[i].value != b[i].value || a[i].embedding != b[i].embedding;
  }
  const bool ok = draws >= 1000 && !input_violations && !label_violations && !context_violations && !differing;
  return {ok, std::to_string(draws) + " draws: " + std::to_string(input_violations) + " input reads past anchor, " +
                  std::to_string(label_violations) + " label events at/before anchor, " +
                  std::to_string(context_violations) + " context-row violations; " + std::to_string(differing) + "/" +
                  std::to_string(compared) + " predictions changed after deleting post-anchor rows"};
}

// ------------------------------------------------------------ 3 oracles

/// users/orders database with ground truth kept outside the store.
struct OracleDb {
  std::size_t users = 0;
  std::vector<std::uint32_t> owner;
  std::vector<std::optional<Timestamp>> time;  // nullopt = null cell
  std::vector<double> amount;
  Store store;
};

OracleDb oracle_db(std::uint64_t seed) {
  Rng rng(seed);
  OracleDb d;
  d.users = 5 + rng.below(30);
  const std::size_t orders = 50 + rng.below(300);
  RawTable u{"users", {"user_id"}, {{}}};
  for (std::size_t i = 0; i < d.users; ++i) u.columns[0].push_back("u" + std::to_string(i));
  RawTable o{"orders", {"order_id", "user_id", "amount", "order_time"}, {{}, {}, {}, {}}};
  for (std::size_t i = 0; i < orders; ++i) {
    d.owner.push_back(static_cast<std::uint32_t>(rng.below(d.users)));
    d.amount.push_back(static_cast<double>(rng.below(40)) + 0.25 * static_cast<double>(rng.below(4)));
    if (rng.below(40) == 0) d.time.push_back(std::nullopt);
    else d.time.push_back(static_cast<Timestamp>(rng.below(60)) * kMsPerDay + static_cast<Timestamp>(rng.below(2)) * 3600000);
    o.columns[0].push_back("o" + std::to_string(i));
    o.columns[1].push_back("u" + std::to_string(d.owner.back()));
    o.columns[2].push_back(pql::format_number(d.amount.back()));
    o.columns[3].push_back(d.time.back() ? format_timestamp(*d.time.back()) : "");
  }
  Schema schema;
  schema.tables.push_back({"users", {{"user_id", SemanticType::kIdentifier}}, "user_id", std::nullopt, {}});
  schema.tables.push_back({"orders",
                           {{"order_id", SemanticType::kIdentifier},
                            {"user_id", SemanticType::kIdentifier},
                            {"amount", SemanticType::kNumerical},
                            {"order_time", SemanticType::kTimestamp}},
                           "order_id",
                           "order_time",
                           {}});
  schema.links.push_back({"orders", "user_id", "users"});
  IngestOptions opt;
  opt.max_timestamp_failure_ratio = 1.0;
  std::vector<RawTable> raw{u, o};
  d.store = make_store(build_graph(schema, std::span<const RawTable>(raw), nullptr, opt));
  return d;
}

Verdict oracles() {
  std::size_t nb = 0, nb_bad = 0, snap = 0, snap_bad = 0, lab = 0, lab_bad = 0, au = 0, au_bad = 0, mr = 0, mr_bad = 0;
  double mrr_err = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto d = oracle_db(seed);
    const auto& g = d.store.graph;
    const auto e = d.store.index.edge_types_from(0).at(0);
    Rng rng(hash_combine(seed, 1));
    for (int q = 0; q < 10; ++q, ++nb) {
      const auto user = static_cast<std::uint32_t>(rng.below(d.users));
      const Timestamp t = static_cast<Timestamp>(rng.below(64)) * kMsPerDay - kMsPerDay;
      const std::size_t k = rng.below(12);
      std::vector<std::pair<Timestamp, std::uint32_t>> el;
      for (std::uint32_t r = 0; r < d.owner.size(); ++r)
        if (d.owner[r] == user && d.time[r] && *d.time[r] <= t) el.emplace_back(*d.time[r], r);
      std::sort(el.rbegin(), el.rend());
      if (el.size() > k) el.resize(k);
      auto got = d.store.index.neighbors_before(user, e, t, k);
      bool same = got.size() == el.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i] == el[i].second;
      nb_bad += !same;
    }
    for (int q = 0; q < 6; ++q, ++snap) {
      const Timestamp t = static_cast<Timestamp>(rng.below(64)) * kMsPerDay - kMsPerDay;
      auto view = snapshot(g, t);
      std::vector<std::uint32_t> visible;
      for (std::uint32_t r = 0; r < d.owner.size(); ++r)
        if (d.time[r] && *d.time[r] <= t) visible.push_back(r);
      bool same = view.rows(1) == visible && view.num_nodes() == d.users + visible.size();
      const auto user = static_cast<std::uint32_t>(rng.below(d.users));
      std::vector<std::pair<Timestamp, std::uint32_t>> el;
      for (auto r : visible)
        if (d.owner[r] == user) el.emplace_back(*d.time[r], r);
      std::sort(el.rbegin(), el.rend());
      auto got = view.neighbors(d.store.index, {0, user}, e, 1000);
      same = same && got.size() == el.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i] == el[i].second;
      snap_bad += !same;
    }
    const char* fns[] = {"COUNT", "SUM", "AVG", "MIN", "MAX"};
    const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
    for (int q = 0; q < 8; ++q, ++lab) {
      const std::string fn = fns[rng.below(5)], op = ops[rng.below(6)];
      const bool cmp = rng.bernoulli(0.5);
      const long s = static_cast<long>(rng.below(20)) - 10, en = s + 1 + static_cast<long>(rng.below(30));
      const double lit = static_cast<double>(rng.below(60)), floor = static_cast<double>(rng.below(30));
      const std::string query = "PREDICT " + fn + "(orders." + (fn == "COUNT" ? "*" : "amount") + ", " +
                                std::to_string(s) + ", " + std::to_string(en) + ", days, WHERE amount >= " +
                                pql::format_number(floor) + ")" + (cmp ? " " + op + " " + pql::format_number(lit) : "") +
                                " FOR EACH users.user_id";
      auto plan = pql::compile(query, g);
      const auto user = static_cast<std::uint32_t>(rng.below(d.users));
      const Timestamp a = static_cast<Timestamp>(rng.below(70)) * kMsPerDay;
      std::vector<double> vals;
      for (std::size_t r = 0; r < d.owner.size(); ++r)
        if (d.owner[r] == user && d.time[r] && *d.time[r] > a + s * kMsPerDay && *d.time[r] <= a + en * kMsPerDay &&
            d.amount[r] >= floor)
          vals.push_back(d.amount[r]);
      std::optional<double> want;
      if (fn == "COUNT") want = static_cast<double>(vals.size());
      else if (fn == "SUM") want = std::accumulate(vals.begin(), vals.end(), 0.0);
      else if (!vals.empty()) {
        if (fn == "AVG") want = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
        else if (fn == "MIN") want = *std::min_element(vals.begin(), vals.end());
        else want = *std::max_element(vals.begin(), vals.end());
      }
      if (want && cmp) {
        const double v = *want;
        const bool r = op == "=" ? v == lit : op == "!=" ? v != lit : op == "<" ? v < lit : op == "<=" ? v <= lit
                       : op == ">" ? v > lit : v >= lit;
        want = r ? 1.0 : 0.0;
      }
      auto got = compute_label(plan, d.store, user, a);
      const bool same = got.has_value() == want.has_value() && (!got || std::abs(*got - *want) <= 1e-12 * std::max(1.0, std::abs(*want)));
      lab_bad += !same;
    }
    // AUROC: exact rational comparison against all positive/negative pairs.
    for (int q = 0; q < 6; ++q, ++au) {
      const std::size_t n = 2 + rng.below(40);
      std::vector<double> sc(n);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) sc[i] = static_cast<double>(rng.below(8)), y[i] = static_cast<int>(rng.below(2));
      y[0] = 0, y[1] = 1;
      std::uint64_t twice = 0, pos = 0, neg = 0;
      for (std::size_t i = 0; i < n; ++i) (y[i] ? pos : neg)++;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (y[i] && !y[j]) twice += sc[i] > sc[j] ? 2 : sc[i] == sc[j] ? 1 : 0;
      const double want = (static_cast<double>(twice) / 2.0) / (static_cast<double>(pos) * static_cast<double>(neg));
      au_bad += metrics::auroc(sc, y) != want;
    }
    // MRR: ranks <= 8 divide 840, so 840 * sum(1/rank) is an integer.
    for (int q = 0; q < 6; ++q, ++mr) {
      const std::size_t n = 1 + rng.below(30), K = 2 + rng.below(7);
      std::vector<std::vector<std::size_t>> rankings;
      std::vector<std::size_t> truth;
      std::uint64_t num = 0;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p(K);
        for (auto& x : p) x = static_cast<double>(rng.below(5));
        const std::size_t t = rng.below(K);
        std::size_t rank = 1;
        for (std::size_t c = 0; c < K; ++c) rank += p[c] > p[t] || (p[c] == p[t] && c < t);
        num += 840 / rank;
        rankings.push_back(metrics::ranking(p));
        truth.push_back(t);
      }
      const double want = static_cast<double>(num) / (840.0 * static_cast<double>(n));
      const double err = std::abs(metrics::mrr(rankings, truth) - want);
      mrr_err = std::max(mrr_err, err);
      mr_bad += err > 1e-12;
    }
  }
  const bool ok = nb >= 200 && snap >= 200 && lab >= 200 && au >= 200 && mr >= 200 && !nb_bad && !snap_bad && !lab_bad &&
                  !au_bad && !mr_bad;
  auto part = [](const char* name, std::size_t n, std::size_t bad) {
    return std::string(name) + " " + std::to_string(n - bad) + "/" + std::to_string(n);
  };
  return {ok, part("neighbors_before", nb, nb_bad) + ", " + part("snapshot", snap, snap_bad) + ", " +
                  part("compute_label", lab, lab_bad) + ", " + part("auroc", au, au_bad) + " exact, " +
                  part("mrr", mr, mr_bad) + " (max err " + fmt(mrr_err * 1e15, 2) + "e-15)"};
}

// ------------------------------------------------------------ 4 gradients

model::ModelConfig tiny() {
  auto c = model::preset("toy");
  c.d = 8, c.heads = 2, c.hash_dim = 4, c.table_inducing = 2, c.cross_inducing = 2;
  return c;
}

scm::ScmTask small_task(std::size_t fam, std::uint64_t seed, std::size_t entities = 30, std::size_t budget = 16) {
  scm::ScmConfig cfg;
  cfg.entities = entities;
  cfg.min_tables = cfg.max_tables = 3;
  cfg.categorical_prob = 0.5;
  cfg.rows_per_entity = 2;
  scm::TaskOptions o;
  o.family_weights.assign(5, 0.0);
  o.family_weights[fam] = 1;
  o.context_budget = budget;
  o.max_predictions = 6;
  return scm::sample_task(scm::sample_database(cfg, seed), seed, o);
}

model::BatchOptions opts(std::vector<std::size_t> fanouts = {4, 4}) {
  model::BatchOptions o;
  o.sampler.fanouts = std::move(fanouts);
  return o;
}

/// Max relative error per parameter group (table, graph, cross, head).
std::map<std::string, double> group_errors(const model::ModelConfig& cfg, const scm::ScmTask& task) {
  model::Model<double> m(cfg, 5);
  auto rows = task.table.prediction;
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].target = task.labels[i];
  auto batch = model::make_batch(cfg, task.store, task.plan, task.table.context, rows, opts());
  auto loss = [&] { return m.loss(batch, m.forward(batch)); };
  std::map<std::string, std::vector<ad::Tensor<double>>> groups;
  const auto& names = m.params().names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& n = names[i];
    std::string grp = "other";
    for (const char* p : {"table", "graph", "cross"})
      if (n.rfind(p, 0) == 0) grp = p;
    for (const char* p : {"reg.", "cls.", "bucket.", "head."})
      if (n.rfind(p, 0) == 0) grp = "head";
    groups[grp].push_back(m.params().tensors()[i]);
  }
  std::map<std::string, double> out;
  for (auto& [g, ts] : groups) out[g] = testing::gradcheck(loss, ts, 1e-5, 3, 1e-6).max_rel_error;
  return out;
}

Verdict gradients() {
  struct Case {
    const char* name;
    std::size_t fam;
    std::uint64_t seed;
    bool hierarchical;
  };
  const Case cases[] = {{"regression", 2, 1, false}, {"binary", 0, 2, false}, {"multiclass", 1, 3, false}, {"hierarchical", 1, 4, true}, {"temporal count", 3, 5, false}};
  bool ok = true;
  std::string detail;
  double worst = 0;
  for (const auto& c : cases) {
    auto cfg = tiny();
    if (c.hierarchical) cfg.flat_class_limit = 2;
    auto errs = group_errors(cfg, small_task(c.fam, c.seed));
    double head = 0;
    for (const char* g : {"table", "graph", "cross", "head"}) {
      if (!errs.count(g)) {
        ok = false;
        detail += std::string(" missing ") + g;
        continue;
      }
      worst = std::max(worst, errs[g]);
      ok = ok && errs[g] < 1e-4;
    }
    if (errs.count("other")) worst = std::max(worst, errs["other"]), ok = ok && errs["other"] < 1e-4;
    head = errs.count("head") ? errs["head"] : 1;
    detail += std::string(c.name) + ": head " + fmt(head * 1e6, 2) + "e-6 ";
    for (const char* g : {"table", "graph", "cross"})
      if (errs.count(g)) detail += std::string(g) + " " + fmt(errs[g] * 1e6, 2) + "e-6 ";
    detail += "| ";
  }
  return {ok, "max rel error " + fmt(worst * 1e6, 2) + "e-6 (< 1e-4); " + detail.substr(0, detail.size() - 3)};
}

// ------------------------------------------------------------ 5 symmetry

std::vector<std::vector<double>> outputs(const model::Model<double>& m, const model::Batch& b) {
  auto o = m.forward(b);
  std::vector<std::vector<double>> rows(o.out.rows());
  for (std::size_t i = 0; i < o.out.rows(); ++i)
    for (std::size_t j = 0; j < o.out.cols(); ++j) rows[i].push_back(o.out.at(i, j));
  return rows;
}

double max_rel(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) e = std::max(e, std::abs(a[i][j] - b[i][j]) / std::max(1.0, std::abs(a[i][j])));
  return e;
}

Verdict symmetry() {
  auto cfg = model::preset("toy");
  cfg.d = 16;
  cfg.hash_dim = 8;
  double col = 0, order = 0, dup = 0, cls = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    model::Model<double> m(cfg, seed + 1);
    for (std::size_t fam : {0u, 1u, 2u, 3u}) {
      auto task = small_task(fam, 10 * seed + fam, 40, 24);
      const auto& ctx = task.table.context;
      const auto& pred = task.table.prediction;
      auto base = outputs(m, model::make_batch(cfg, task.store, task.plan, ctx, pred, opts()));
      auto o = opts();
      o.column_shuffle = 7919 * (seed + 1);
      col = std::max(col, max_rel(base, outputs(m, model::make_batch(cfg, task.store, task.plan, ctx, pred, o))));
      auto shuffled = ctx;
      Rng rng(seed + 17);
      rng.shuffle(shuffled);
      order = std::max(order, max_rel(base, outputs(m, model::make_batch(cfg, task.store, task.plan, shuffled, pred, opts()))));
      auto doubled = ctx;
      doubled.insert(doubled.end(), ctx.begin(), ctx.end());
      dup = std::max(dup, max_rel(base, outputs(m, model::make_batch(cfg, task.store, task.plan, doubled, pred, opts()))));
      if (fam != 1) continue;
      model::PredictConfig pc;
      pc.batch = opts();
      auto p0 = model::predict(m, task.store, task.plan, task.table, pc);
      const std::size_t K = task.plan.classes.size();
      std::vector<std::uint32_t> perm(K), inv(K);
      std::iota(perm.begin(), perm.end(), 0u);
      rng.shuffle(perm);
      for (std::size_t k = 0; k < K; ++k) inv[perm[k]] = static_cast<std::uint32_t>(k);
      auto plan = task.plan;
      for (std::size_t k = 0; k < K; ++k) plan.classes[k] = task.plan.classes[perm[k]];
      auto table = task.table;
      for (auto& r : table.context) r.target = inv[static_cast<std::size_t>(*r.target)];
      auto p1 = model::predict(m, task.store, plan, table, pc);
      for (std::size_t j = 0; j < p0.size(); ++j)
        for (std::size_t k = 0; k < K; ++k) cls = std::max(cls, std::abs(p1[j].probs[k] - p0[j].probs[perm[k]]));
    }
  }
  const bool ok = col < 1e-9 && order < 1e-9 && cls < 1e-6 && dup < 1e-6;
  auto e = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.1e", v);
    return std::string(b);
  };
  return {ok, "column permutation " + e(col) + " (< 1e-9), context order " + e(order) + " (< 1e-9), class permutation " +
                  e(cls) + " (< 1e-6), context duplication " + e(dup) + " (< 1e-6)"};
}

// ------------------------------------------------------------ 6 training

/// Task metric oriented so that larger is better.
double task_score(const scm::ScmTask& task, const std::vector<model::Prediction>& preds, std::string& name) {
  if (task.plan.type == pql::TaskType::kBinary) {
    std::vector<double> s;
    std::vector<int> y(task.labels.begin(), task.labels.end());
    for (const auto& p : preds) s.push_back(p.value);
    name = "auroc";
    return metrics::auroc(s, y);
  }
  if (task.plan.type == pql::TaskType::kMulticlass) {
    std::vector<std::vector<std::size_t>> rk;
    std::vector<std::size_t> t;
    for (std::size_t i = 0; i < preds.size(); ++i)
      rk.push_back(metrics::ranking(preds[i].probs)), t.push_back(static_cast<std::size_t>(task.labels[i]));
    name = "mrr";
    return metrics::mrr(rk, t);
  }
  std::vector<double> p;
  for (const auto& x : preds) p.push_back(x.value);
  name = "-mae";
  return -metrics::mae(p, task.labels);
}

Verdict training(const Toy& toy) {
  const double ratio = toy.loss_before / toy.loss_after;
  bool ok = ratio >= 2.0 && toy.pretrain_seconds <= 600;
  std::string detail = "pre-training loss " + fmt(toy.loss_before) + " -> " + fmt(toy.loss_after) + " (" + fmt(ratio, 2) +
                       "x >= 2) in " + fmt(toy.pretrain_seconds, 0) + " s (<= 600); fine-tune vs base:";
  const char* names[] = {"binary", "multiclass", "regression", "count_regression", "count_binary"};
  std::size_t wins = 0;
  double slowest = 0;
  for (std::size_t fam = 0; fam < 5; ++fam) {
    scm::ScmConfig cfg;
    cfg.entities = 240;
    cfg.min_tables = 2, cfg.max_tables = 3;
    scm::TaskOptions o;
    o.family_weights.assign(5, 0.0);
    o.family_weights[fam] = 1;
    o.context_budget = 200;
    o.max_predictions = 150;
    auto task = scm::sample_task(scm::sample_database(cfg, 300 + fam), 300 + fam, o);
    model::PredictConfig pc;
    pc.batch.sampler.fanouts = {16, 8};
    auto m = model::load_model<float>(toy.path);
    std::string metric;
    const double base = task_score(task, model::predict(m, task.store, task.plan, task.table, pc), metric);
    model::FineTuneConfig fc;
    fc.seed = fam;
    fc.batch.sampler.fanouts = {16, 8};
    const auto t0 = Clock::now();
    auto rep = model::fine_tune(m, task.store, task.plan, task.table, fc);
    const double secs = since(t0);
    slowest = std::max(slowest, secs);
    const double tuned = task_score(task, model::predict(m, task.store, task.plan, task.table, pc), metric);
    wins += tuned >= base;
    detail += std::string(" ") + names[fam] + " " + metric + " " + fmt(base, 3) + "->" + fmt(tuned, 3) +
              (rep.kept ? "" : " (kept base)") + ";";
  }
  ok = ok && wins >= 4 && slowest < 120;
  return {ok, detail + " " + std::to_string(wins) + "/5 match or beat (>= 4), slowest " + fmt(slowest, 1) + " s (< 120)"};
}

// ------------------------------------------------------------ 7 robustness

Verdict robustness(const Toy& toy) {
  auto m = model::load_model<float>(toy.path);
  auto sweep = [&](const char* name, const char* family, std::vector<double> grid) {
    metrics::AblationSpec s;
    s.sweep = name;
    s.family = family;
    s.grid = std::move(grid);
    return metrics::run_ablation(m, s);
  };
  auto fan = sweep("fanout", "long_memory", {1, 2, 4, 8, 16, 32});
  bool mono = true;
  std::vector<double> fm;
  for (std::size_t i = 0; i < fan.points.size(); ++i) {
    fm.push_back(fan.points[i].mean);
    if (i) mono = mono && fan.points[i].mean >= fan.points[i - 1].mean;
  }
  auto depth = sweep("depth", "multi_table", {0, 2});
  const auto& d0 = depth.points[0];
  const auto& d2 = depth.points[1];
  double paired = 0;
  for (std::size_t s = 0; s < d0.per_seed.size(); ++s) paired += (d2.per_seed[s] - d0.per_seed[s]) / static_cast<double>(d0.per_seed.size());
  const bool deeper = paired > 0;
  auto drop = sweep("edge_drop", "multi_table", {1.0});
  const double gap = std::abs(drop.points[0].mean - d0.mean);
  const bool same = gap <= std::max(d0.sem, drop.points[0].sem);
  auto noise = sweep("noise_columns", "multi_table", {0, 16});
  const double degrade = noise.points[0].mean - noise.points[1].mean;
  const bool robust = degrade <= 0.05;
  return {mono && deeper && same && robust,
          "fanout 1..32 on long_memory " + list(fm) + (mono ? " non-decreasing" : " NOT monotone") + "; depth 2 vs 0 on multi_table " +
              fmt(d2.mean, 3) + " vs " + fmt(d0.mean, 3) + " (paired gain " + fmt(paired, 3) + " > 0); edge drop 100% " +
              fmt(drop.points[0].mean, 3) + " vs depth 0 " + fmt(d0.mean, 3) + " (gap " + fmt(gap, 3) + " <= dispersion " +
              fmt(std::max(d0.sem, drop.points[0].sem), 3) + "); 16 noise columns " + fmt(noise.points[0].mean, 3) + " -> " +
              fmt(noise.points[1].mean, 3) + " (drop " + fmt(100 * degrade, 1) + " <= 5 points)"};
}

// ------------------------------------------------------------ 8 formats

std::string read_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict formats(const Toy& toy) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("relicl_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto at = [&](const std::string& n) { return (dir / n).string(); };

  // Store round trip: save, load, save again; bytes and queries agree.
  std::size_t stores = 0, store_bad = 0;
  std::vector<Store> samples;
  samples.push_back(testing::random_shop_store(5));
  samples.push_back(small_task(3, 9, 60).store);
  samples.push_back(make_synthetic_store(500, 5000, 3));
  for (const auto& s : samples) {
    const auto a = at("a.rlct"), b = at("b.rlct");
    save_store(s, a);
    auto loaded = load_store(a);
    save_store(loaded, b);
    bool same = read_bytes(a) == read_bytes(b) && export_raw(loaded.graph)[0].columns == export_raw(s.graph)[0].columns;
    for (std::size_t e = 0; e < s.index.num_edge_types(); ++e)
      same = same && std::equal(s.index.csr(e).neighbors.begin(), s.index.csr(e).neighbors.end(),
                                loaded.index.csr(e).neighbors.begin(), loaded.index.csr(e).neighbors.end());
    ++stores;
    store_bad += !same;
  }

  // CLI runs replayed from their manifests.
  const fs::path csv = dir / "shop";
  fs::create_directories(csv);
  for (const auto& t : testing::shop_tables()) write_raw_csv(t, (csv / (t.name + ".csv")).string());
  save_store(testing::random_shop_store(8), at("rshop.rlct"));
  const std::string ckpt = toy.path;
  std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
      {at("shop.rlct.manifest.json"), {"ingest", "--csv-dir", csv.string(), "--store", at("shop.rlct")}},
      {at("pred.jsonl.manifest.json"),
       {"predict", "--store", at("rshop.rlct"), "--query", "PREDICT COUNT(orders.*, 0, 30, days) = 0 FOR EACH users.user_id",
        "--indices", "u0,u1,u2", "--anchor-time", "1970-03-20", "--checkpoint", ckpt, "--estimators", "2",
        "--column-shuffle", "--class-shuffle", "--out", at("pred.jsonl")}},
      {at("eval.json.manifest.json"),
       {"evaluate", "--entities", "200", "--seeds", "0", "--context-budget", "100", "--checkpoint", ckpt, "--out",
        at("eval.json")}},
      {at("abl/manifest.json"),
       {"ablate", "--sweeps", "depth,noise_columns", "--seeds", "0,1", "--tasks-per-seed", "1", "--entities", "80",
        "--context-budget", "48", "--checkpoint", ckpt, "--out", at("abl")}},
      {at("bench.json.manifest.json"),
       {"bench-store", "--entities", "1000", "--edges", "20000", "--lookups", "5000", "--out", at("bench.json")}},
      {at("p.ckpt.manifest.json"), {"pretrain", "--steps", "4", "--seed", "3", "--out", at("p.ckpt")}},
      {at("ft.ckpt.manifest.json"),
       {"finetune", "--store", at("rshop.rlct"), "--query", "PREDICT users.age FOR EACH users.user_id", "--checkpoint",
        at("p.ckpt"), "--steps", "3", "--out", at("ft.ckpt")}},
  };
  std::size_t cli_ok = 0;
  std::string failed;
  for (auto& [manifest, args] : runs) {
    std::vector<const char*> argv{"relicl"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    std::ostringstream rep;
    const bool replayed = code == 0 && cli::replay(manifest, rep);
    if (replayed) ++cli_ok;
    else failed += " " + args[0] + (code ? " (exit " + std::to_string(code) + ": " + err.str() + ")" : " (" + rep.str() + ")");
  }

  // PQL parse / pretty-print fixpoint.
  Rng rng(77);
  std::size_t fix = 0;
  for (int i = 0; i < 1000; ++i) {
    auto ast = testing::random_ast(rng);
    const auto text = pql::pretty_print(ast);
    const auto again = pql::parse(text);
    fix += again == ast && pql::pretty_print(again) == text;
  }
  fs::remove_all(dir);
  const bool ok = !store_bad && cli_ok == runs.size() && fix == 1000;
  return {ok, "store round trips " + std::to_string(stores - store_bad) + "/" + std::to_string(stores) +
                  " byte-identical; CLI runs reproduced from manifest " + std::to_string(cli_ok) + "/" +
                  std::to_string(runs.size()) + failed + "; PQL fixpoint " + std::to_string(fix) + "/1000"};
}

// ------------------------------------------------------------ 9 store speed

Verdict store_speed() {
  const auto t0 = Clock::now();
  auto store = make_synthetic_store(1000000, 10000000, 1);
  const double build = since(t0);
  auto b = bench_lookups(store, 2000000, 32, 1);
  return {b.lookups_per_sec >= 1e6, fmt(b.lookups_per_sec / 1e6, 2) + "M neighbors_before lookups/sec single-thread on " +
                                        "10M edges (>= 1M; soft gate), store built in " + fmt(build, 1) + " s"};
}

}  // namespace
}  // namespace relicl::acceptance

int main(int argc, char** argv) {
  using namespace relicl::acceptance;
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  auto on = [&](int c) { return want.empty() || want.count(c); };
  const char* titles[] = {"",
                          "conjunction expressivity",
                          "no leakage",
                          "oracle equivalence",
                          "gradient checks",
                          "symmetry",
                          "training signal",
                          "robustness shapes",
                          "formats and determinism",
                          "store performance"};
  Toy toy;
  bool need_toy = false;
  for (int c : {1, 2, 6, 7, 8}) need_toy = need_toy || on(c);
  try {
    if (need_toy) toy = toy_checkpoint();
  } catch (const std::exception& e) {
    std::cout << "FAIL  toy checkpoint: " << e.what() << std::endl;
    return 1;
  }
  std::vector<std::function<Verdict()>> checks = {
      [] { return Verdict{}; },  [&] { return conjunction(toy); }, [&] { return no_leakage(toy); },
      [] { return oracles(); },  [] { return gradients(); },       [] { return symmetry(); },
      [&] { return training(toy); }, [&] { return robustness(toy); }, [&] { return formats(toy); },
      [] { return store_speed(); }};
  int run = 0, passed = 0;
  for (int c = 1; c <= 9; ++c) {
    if (!on(c)) continue;
    ++run;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = checks[c]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    passed += v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << c << ". " << titles[c] << ": " << v.detail << " [" << fmt(since(t0), 1)
              << " s]" << std::endl;
  }
  std::cout << passed << "/" << run << " criteria passed" << std::endl;
  return passed == run ? 0 : 1;
}
