#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "relicl/model/predict.hpp"
#include "relicl/scm/scm.hpp"
#include "test_util.hpp"

namespace relicl {
namespace {

using model::Batch;
using model::BatchOptions;
using model::Model;
using model::ModelConfig;

ModelConfig tiny() {
  ModelConfig c = model::preset("toy");
  c.d = 8, c.heads = 2, c.hash_dim = 4, c.table_inducing = 2, c.cross_inducing = 2;
  return c;
}

scm::TaskOptions family(std::size_t f, std::size_t budget = 16) {
  scm::TaskOptions o;
  o.family_weights.assign(5, 0.0);
  o.family_weights[f] = 1;
  o.context_budget = budget;
  o.max_predictions = 6;
  return o;
}

scm::ScmTask small_task(std::size_t fam, std::uint64_t seed, std::size_t entities = 30) {
  scm::ScmConfig cfg;
  cfg.entities = entities;
  cfg.min_tables = cfg.max_tables = 3;
  cfg.categorical_prob = 0.5;
  cfg.rows_per_entity = 2;
  auto db = scm::sample_database(cfg, seed);
  return scm::sample_task(db, seed, family(fam));
}

std::vector<TaskRow> labeled(const scm::ScmTask& t) {
  auto rows = t.table.prediction;
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].target = t.labels[i];
  return rows;
}

BatchOptions opts(std::vector<std::size_t> fanouts = {4, 4}) {
  BatchOptions o;
  o.sampler.fanouts = std::move(fanouts);
  return o;
}

double check_model(const ModelConfig& cfg, const scm::ScmTask& task, std::size_t per_tensor = 3) {
  Model<double> m(cfg, 5);
  auto batch = model::make_batch(cfg, task.store, task.plan, task.table.context, labeled(task), opts());
  auto loss = [&] { return m.loss(batch, m.forward(batch)); };
  auto r = testing::gradcheck(loss, m.params().tensors(), 1e-5, per_tensor, 1e-6);
  EXPECT_GT(r.checked, 100u);
  return r.max_rel_error;
}

TEST(ModelGradient, RegressionHead) { EXPECT_LT(check_model(tiny(), small_task(2, 1)), 1e-4); }
TEST(ModelGradient, BinaryHead) { EXPECT_LT(check_model(tiny(), small_task(0, 2)), 1e-4); }
TEST(ModelGradient, MulticlassHead) { EXPECT_LT(check_model(tiny(), small_task(1, 3)), 1e-4); }
TEST(ModelGradient, HierarchicalHead) {
  auto cfg = tiny();
  cfg.flat_class_limit = 2;
  auto task = small_task(1, 4);
  ASSERT_GT(task.plan.classes.size(), 2u);
  EXPECT_LT(check_model(cfg, task), 1e-4);
}
TEST(ModelGradient, TemporalTaskWithLags) {
  auto task = small_task(3, 6);
  ContextConfig cc;
  cc.lag_timesteps = 2;
  cc.budget = 16;
  std::vector<std::uint32_t> ents;
  for (const auto& r : task.table.prediction) ents.push_back(r.entity);
  task.table = generate_context(task.plan, task.store, ents, task.table.prediction.at(0).anchor, cc);
  EXPECT_LT(check_model(tiny(), task), 1e-4);
}

std::vector<std::vector<double>> outputs(const Model<double>& m, const Batch& b) {
  auto o = m.forward(b);
  std::vector<std::vector<double>> rows(o.out.rows());
  for (std::size_t i = 0; i < o.out.rows(); ++i)
    for (std::size_t j = 0; j < o.out.cols(); ++j) rows[i].push_back(o.out.at(i, j));
  return rows;
}

double max_rel(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      e = std::max(e, std::abs(a[i][j] - b[i][j]) / std::max(1.0, std::abs(a[i][j])));
  return e;
}

ModelConfig sym_config() {
  auto c = model::preset("toy");
  c.d = 16;
  c.hash_dim = 8;
  return c;
}

TEST(ModelSymmetry, ColumnPermutation) {
  for (std::size_t fam : {0u, 2u}) {
    auto task = small_task(fam, 10 + fam, 40);
    auto cfg = sym_config();
    Model<double> m(cfg, 1);
    auto base = outputs(m, model::make_batch(cfg, task.store, task.plan, task.table.context, task.table.prediction, opts()));
    for (std::uint64_t s = 1; s < 4; ++s) {
      auto o = opts();
      o.column_shuffle = s * 7919;
      auto perm = outputs(m, model::make_batch(cfg, task.store, task.plan, task.table.context, task.table.prediction, o));
      EXPECT_LT(max_rel(base, perm), 1e-9);
    }
  }
}

TEST(ModelSymmetry, ContextOrder) {
  auto task = small_task(1, 12, 40);
  auto cfg = sym_config();
  Model<double> m(cfg, 2);
  auto base = outputs(m, model::make_batch(cfg, task.store, task.plan, task.table.context, task.table.prediction, opts()));
  auto ctx = task.table.context;
  std::mt19937 rng(3);
  for (int r = 0; r < 3; ++r) {
    std::shuffle(ctx.begin(), ctx.end(), rng);
    auto perm = outputs(m, model::make_batch(cfg, task.store, task.plan, ctx, task.table.prediction, opts()));
    EXPECT_LT(max_rel(base, perm), 1e-9);
  }
}

TEST(ModelSymmetry, ContextDuplication) {
  for (std::size_t fam : {0u, 1u, 2u}) {
    auto task = small_task(fam, 20 + fam, 40);
    auto cfg = sym_config();
    Model<double> m(cfg, 3);
    auto base = outputs(m, model::make_batch(cfg, task.store, task.plan, task.table.context, task.table.prediction, opts()));
    auto ctx = task.table.context;
    ctx.insert(ctx.end(), task.table.context.begin(), task.table.context.end());
    auto dup = outputs(m, model::make_batch(cfg, task.store, task.plan, ctx, task.table.prediction, opts()));
    EXPECT_LT(max_rel(base, dup), 1e-6) << fam;
  }
}

TEST(ModelSymmetry, ClassPermutation) {
  auto task = small_task(1, 31, 40);
  auto cfg = sym_config();
  Model<double> m(cfg, 4);
  model::PredictConfig pc;
  pc.batch = opts();
  auto base = model::predict(m, task.store, task.plan, task.table, pc);
  const std::size_t K = task.plan.classes.size();
  std::vector<std::uint32_t> perm(K);  // perm[new] = old
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937 rng(9);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::uint32_t> inv(K);
  for (std::size_t k = 0; k < K; ++k) inv[perm[k]] = static_cast<std::uint32_t>(k);
  auto plan = task.plan;
  for (std::size_t k = 0; k < K; ++k) plan.classes[k] = task.plan.classes[perm[k]];
  auto table = task.table;
  for (auto& r : table.context) r.target = inv[static_cast<std::size_t>(*r.target)];
  auto shuffled = model::predict(m, task.store, plan, table, pc);
  for (std::size_t j = 0; j < base.size(); ++j)
    for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(shuffled[j].probs[k], base[j].probs[perm[k]], 1e-6);
}

TEST(ModelHeads, ProbabilitiesNormalized) {
  for (std::size_t fam : {0u, 1u, 4u}) {
    auto task = small_task(fam, 40 + fam, 40);
    auto cfg = sym_config();
    Model<double> m(cfg, 5);
    model::PredictConfig pc;
    pc.batch = opts();
    for (const auto& p : model::predict(m, task.store, task.plan, task.table, pc)) {
      double s = 0;
      for (double x : p.probs) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        s += x;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(ModelHeads, ConstantRegressionTarget) {
  auto task = small_task(2, 50, 40);
  for (auto& r : task.table.context) r.target = 7.25;
  auto cfg = sym_config();
  Model<double> m(cfg, 6);
  model::PredictConfig pc;
  pc.batch = opts();
  for (const auto& p : model::predict(m, task.store, task.plan, task.table, pc)) EXPECT_NEAR(p.value, 7.25, 1e-6);
}

// Entity table with a 600-value categorical target.
Store many_class_store(std::size_t classes, std::size_t entities) {
  RawTable t{"things", {"thing_id", "size", "kind"}, {{}, {}, {}}};
  for (std::size_t i = 0; i < entities; ++i) {
    t.columns[0].push_back("t" + std::to_string(i));
    t.columns[1].push_back(std::to_string(i % 17));
    t.columns[2].push_back("k" + std::to_string(i % classes));
  }
  Schema s;
  s.tables.push_back({"things",
                      {{"thing_id", SemanticType::kIdentifier}, {"size", SemanticType::kNumerical}, {"kind", SemanticType::kCategorical}},
                      "thing_id", std::nullopt, {}});
  std::vector<RawTable> raw{t};
  return make_store(build_graph(s, raw));
}

TEST(ModelHeads, HierarchicalSumsToOneOver600Classes) {
  auto store = many_class_store(600, 700);
  auto plan = pql::compile("PREDICT things.kind FOR EACH things.thing_id", store.graph);
  ASSERT_EQ(plan.classes.size(), 601u);
  TaskTable table;
  for (std::uint32_t e = 0; e < 650; ++e) table.context.push_back({e, 0, compute_label(plan, store, e, 0), {}});
  for (std::uint32_t e = 650; e < 660; ++e) table.prediction.push_back({e, 0, std::nullopt, {}});
  auto cfg = tiny();
  Model<double> m(cfg, 7);
  auto batch = model::make_batch(cfg, store, plan, table.context, table.prediction, opts({}));
  EXPECT_EQ(batch.buckets.size(), 25u);  // ceil(sqrt(601))
  for (const auto& p : model::predict(m, store, plan, table, {})) {
    EXPECT_EQ(p.probs.size(), 601u);
    EXPECT_NEAR(std::accumulate(p.probs.begin(), p.probs.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(ModelHeads, FlatBelowThreshold) {
  auto task = small_task(1, 60, 40);
  auto cfg = tiny();
  auto b = model::make_batch(cfg, task.store, task.plan, task.table.context, task.table.prediction, opts());
  EXPECT_TRUE(b.buckets.empty());
  cfg.flat_class_limit = 1;
  b = model::make_batch(cfg, task.store, task.plan, task.table.context, task.table.prediction, opts());
  EXPECT_FALSE(b.buckets.empty());
}

TEST(ModelHeads, EmptyContextRejected) {
  auto task = small_task(0, 61);
  task.table.context.clear();
  Model<double> m(tiny(), 1);
  EXPECT_THROW(model::predict(m, task.store, task.plan, task.table, {}), InputError);
}

TEST(ModelHeads, ClassIndexOutOfRangeRejected) {
  auto task = small_task(0, 62);
  task.table.context[0].target = 5;
  Model<double> m(tiny(), 1);
  EXPECT_THROW(model::predict(m, task.store, task.plan, task.table, {}), InputError);
}

// Three-node chain entities <- events1 <- events2 via a chain schema.
Store chain_store(double leaf_value) {
  RawTable a{"accounts", {"account_id", "x"}, {{"a0", "a1"}, {"1", "2"}}};
  RawTable b{"cards", {"card_id", "account_id", "y"}, {{"c0", "c1"}, {"a0", "a1"}, {"3", "4"}}};
  RawTable c{"swipes", {"swipe_id", "card_id", "z", "time"},
             {{"s0", "s1"}, {"c0", "c1"}, {pql::format_number(leaf_value), "6"}, {"2026-01-01", "2026-01-02"}}};
  Schema s;
  s.tables = {{"accounts", {{"account_id", SemanticType::kIdentifier}, {"x", SemanticType::kNumerical}}, "account_id", std::nullopt, {}},
              {"cards",
               {{"card_id", SemanticType::kIdentifier}, {"account_id", SemanticType::kIdentifier}, {"y", SemanticType::kNumerical}},
               "card_id", std::nullopt, {}},
              {"swipes",
               {{"swipe_id", SemanticType::kIdentifier}, {"card_id", SemanticType::kIdentifier}, {"z", SemanticType::kNumerical},
                {"time", SemanticType::kTimestamp}},
               "swipe_id", "time", {}}};
  s.links = {{"cards", "account_id", "accounts"}, {"swipes", "card_id", "cards"}};
  std::vector<RawTable> raw{a, b, c};
  return make_store(build_graph(s, raw));
}

TEST(ModelGraph, TwoHopReceptiveField) {
  auto cfg = sym_config();
  Model<double> m(cfg, 8);
  auto run = [&](double leaf, std::vector<std::size_t> fanouts) {
    auto store = chain_store(leaf);
    auto plan = pql::compile("PREDICT accounts.x FOR EACH accounts.account_id", store.graph);
    const Timestamp t = *parse_timestamp("2026-02-01");
    std::vector<TaskRow> ctx{{1, t, 2.0, {}}}, pred{{0, t, std::nullopt, {}}};
    return outputs(m, model::make_batch(cfg, store, plan, ctx, pred, opts(fanouts)));
  };
  // Changing the hop-2 swipe of account a0 moves its prediction at depth 2 only.
  EXPECT_GT(max_rel(run(5, {4, 4}), run(-50, {4, 4})), 1e-6);
  EXPECT_EQ(run(5, {4}), run(-50, {4}));
  EXPECT_EQ(run(5, {}), run(-50, {}));
}

TEST(ModelGraph, MaskingAllEdgesEqualsRootOnly) {
  auto task = small_task(0, 70, 40);
  auto cfg = sym_config();
  Model<double> m(cfg, 9);
  const auto& plan = task.plan;
  std::vector<SampledSubgraph> full, masked, root;
  SamplerConfig deep;
  deep.fanouts = {4, 4};
  SamplerConfig none;
  none.fanouts = {};
  for (const auto* rows : {&task.table.context, &task.table.prediction})
    for (const auto& r : *rows) {
      NodeId id{static_cast<std::uint32_t>(plan.entity_table), r.entity};
      auto sg = sample_subgraph(task.store, id, r.anchor, deep);
      masked.push_back(model::restrict_edges(sg, [](std::size_t, const SampledEdge&) { return false; }));
      root.push_back(sample_subgraph(task.store, id, r.anchor, none));
      full.push_back(sg);
    }
  auto out = [&](const std::vector<SampledSubgraph>& sgs) {
    return outputs(m, model::build_batch(cfg, task.store, plan, task.table.context, task.table.prediction, sgs));
  };
  EXPECT_EQ(out(masked), out(root));
  EXPECT_NE(out(full), out(root));
  // Edge-drop 100% in the sampler is the same configuration.
  auto o = opts();
  o.sampler.edge_drop_rate = 1.0;
  EXPECT_EQ(outputs(m, model::make_batch(cfg, task.store, plan, task.table.context, task.table.prediction, o)), out(root));
}

TEST(ModelGraph, ZeroHopIgnoresRelatedRows) {
  auto cfg = sym_config();
  Model<double> m(cfg, 10);
  auto run = [&](double leaf) {
    auto store = chain_store(leaf);
    auto plan = pql::compile("PREDICT accounts.x FOR EACH accounts.account_id", store.graph);
    std::vector<TaskRow> ctx{{1, 0, 2.0, {}}}, pred{{0, 0, std::nullopt, {}}};
    return outputs(m, model::make_batch(cfg, store, plan, ctx, pred, opts({})));
  };
  EXPECT_EQ(run(5), run(99));
}

TEST(ModelCost, LinearInRowsAndColumns) {
  // Single-table store with r rows and c numerical columns.
  auto make = [](std::size_t rows, std::size_t cols) {
    RawTable t{"wide", {"wide_id"}, {{}}};
    TableMeta meta{"wide", {{"wide_id", SemanticType::kIdentifier}}, "wide_id", std::nullopt, {}};
    for (std::size_t c = 0; c < cols; ++c) {
      t.column_names.push_back("c" + std::to_string(c));
      meta.columns.push_back({"c" + std::to_string(c), SemanticType::kNumerical});
      t.columns.emplace_back();
    }
    t.column_names.push_back("y");
    meta.columns.push_back({"y", SemanticType::kNumerical});
    t.columns.emplace_back();
    for (std::size_t r = 0; r < rows; ++r) {
      t.columns[0].push_back(std::to_string(r));
      for (std::size_t c = 0; c <= cols; ++c) t.columns[1 + c].push_back(std::to_string((r * 31 + c * 7) % 13));
    }
    Schema s;
    s.tables = {meta};
    std::vector<RawTable> raw{t};
    return make_store(build_graph(s, raw));
  };
  auto cfg = tiny();
  Model<double> m(cfg, 11);
  auto count = [&](std::size_t rows, std::size_t cols) {
    auto store = make(rows, cols);
    auto plan = pql::compile("PREDICT wide.y FOR EACH wide.wide_id", store.graph);
    TaskTable table;
    for (std::uint32_t r = 0; r + 1 < rows; ++r) table.context.push_back({r, 0, compute_label(plan, store, r, 0), {}});
    table.prediction.push_back({static_cast<std::uint32_t>(rows - 1), 0, std::nullopt, {}});
    auto b = model::make_batch(cfg, store, plan, table.context, table.prediction, opts({}));
    ad::op_count() = {};
    ad::NoGradGuard ng;
    m.forward(b);
    return ad::op_count();
  };
  auto a = count(200, 8), b = count(400, 8), c = count(200, 16);
  // Doubling rows doubles work (up to the context-sized cross-sample term).
  EXPECT_LT(static_cast<double>(b.attention_scores) / static_cast<double>(a.attention_scores), 2.2);
  EXPECT_LT(static_cast<double>(b.matmul_madds) / static_cast<double>(a.matmul_madds), 2.2);
  // Cells never attend to all cells: far below (rows * cols)^2.
  const double cells = 400.0 * 9;
  EXPECT_LT(static_cast<double>(b.attention_scores), 0.05 * cells * cells);
  // Within-row attention is the only super-linear term in columns.
  EXPECT_LT(static_cast<double>(c.attention_scores) / static_cast<double>(a.attention_scores), 4.0);
  EXPECT_LT(static_cast<double>(c.matmul_madds) / static_cast<double>(a.matmul_madds), 2.2);
}

TEST(ModelLeakage, PredictionsIgnorePostAnchorRows) {
  scm::ScmConfig cfg;
  cfg.entities = 60;
  cfg.min_tables = cfg.max_tables = 3;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto db = scm::sample_database(cfg, seed);
    auto task = scm::sample_task(db, seed, family(3, 40));
    ASSERT_TRUE(task.plan.temporal);
    // Predict at an anchor in the middle of history, not at the end.
    const Timestamp anchor = task.table.prediction[0].anchor - 60 * kMsPerDay;
    std::vector<std::uint32_t> ents;
    for (const auto& r : task.table.prediction) ents.push_back(r.entity);
    ContextConfig cc;
    cc.budget = 40;
    cc.lag_timesteps = 2;
    auto table = generate_context(task.plan, task.store, ents, anchor, cc);
    // Rebuild the database without any row stamped after the anchor.
    const auto& g = task.store.graph;
    auto raw = export_raw(g);
    for (std::size_t t = 0; t < g.num_tables(); ++t) {
      auto& rt = raw[t];
      RawTable kept{rt.name, rt.column_names, std::vector<std::vector<std::string>>(rt.columns.size())};
      for (std::size_t r = 0; r < rt.rows(); ++r)
        if (g.node_time(t, r) <= anchor)
          for (std::size_t c = 0; c < rt.columns.size(); ++c) kept.columns[c].push_back(rt.columns[c][r]);
      rt = std::move(kept);
    }
    auto cut = make_store(build_graph(g.schema(), raw));
    ASSERT_LT(cut.graph.num_nodes(), g.num_nodes());
    auto mcfg = model::preset("toy");
    Model<float> m(mcfg, seed);
    model::PredictConfig pc;
    pc.batch = opts({8, 8});
    auto a = model::predict(m, task.store, task.plan, table, pc);
    auto b = model::predict(m, cut, task.plan, table, pc);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].value, b[i].value);
      EXPECT_EQ(a[i].embedding, b[i].embedding);
    }
  }
}

TEST(ModelPredict, ChunkingDoesNotChangeResults) {
  auto task = small_task(0, 80, 60);
  auto cfg = sym_config();
  Model<double> m(cfg, 12);
  model::PredictConfig one, many;
  one.batch = many.batch = opts();
  many.chunk = 2;
  auto a = model::predict(m, task.store, task.plan, task.table, one);
  auto b = model::predict(m, task.store, task.plan, task.table, many);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].probs, b[i].probs);
}

TEST(ModelEnsemble, SingleEstimatorIsPredict) {
  auto task = small_task(1, 90, 40);
  auto cfg = sym_config();
  Model<double> m(cfg, 13);
  model::PredictConfig pc;
  pc.batch = opts();
  auto base = model::predict(m, task.store, task.plan, task.table, pc);
  auto ens = model::ensemble_predict(m, task.store, task.plan, task.table, pc, {});
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base[i].probs, ens.predictions[i].probs);
}

TEST(ModelEnsemble, ShufflesAreExactNoOps) {
  for (std::size_t fam : {0u, 1u, 2u}) {
    auto task = small_task(fam, 91 + fam, 40);
    auto cfg = sym_config();
    Model<double> m(cfg, 14);
    model::PredictConfig pc;
    pc.batch = opts();
    auto base = model::predict(m, task.store, task.plan, task.table, pc);
    model::EnsembleConfig ec;
    ec.estimators = 4;
    ec.column_shuffle = ec.class_shuffle = true;
    ec.seed = 3;
    auto ens = model::ensemble_predict(m, task.store, task.plan, task.table, pc, ec);
    EXPECT_LT(ens.spread, 1e-6);
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_NEAR(base[i].value, ens.predictions[i].value, 1e-6);
      for (std::size_t k = 0; k < base[i].probs.size(); ++k) EXPECT_NEAR(base[i].probs[k], ens.predictions[i].probs[k], 1e-6);
    }
  }
}

TEST(ModelEnsemble, HopListVariesDepth) {
  auto task = small_task(0, 95, 40);
  auto cfg = sym_config();
  Model<double> m(cfg, 15);
  model::PredictConfig pc;
  pc.batch = opts();
  model::EnsembleConfig ec;
  ec.estimators = 2;
  ec.hop_list = {0, 2};
  auto ens = model::ensemble_predict(m, task.store, task.plan, task.table, pc, ec);
  EXPECT_GT(ens.spread, 0.0);
}

}  // namespace
}  // namespace relicl
