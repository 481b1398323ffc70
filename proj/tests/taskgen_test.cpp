#include <gtest/gtest.h>

#include <sstream>

#include "relicl/taskgen/taskgen.hpp"
#include "test_util.hpp"

namespace relicl {
namespace {

Timestamp day(int d) { return static_cast<Timestamp>(d) * kMsPerDay; }

Store two_order_store() {
  RawTable users{"users", {"user_id", "age"}, {{"a", "b"}, {"30", ""}}};
  RawTable orders{"orders", {"order_id", "user_id", "order_time"},
                  {{"o1", "o2"}, {"a", "a"}, {format_timestamp(day(5)), format_timestamp(day(40))}}};
  auto raw = std::vector{users, orders};
  return make_store(build_graph(infer_schema(raw), raw));
}

TEST(ComputeLabel, WindowExamples) {
  auto store = two_order_store();
  auto plan = pql::compile("PREDICT COUNT(orders.*, 0, 30, days)=0 FOR EACH users.user_id", store.graph);
  EXPECT_EQ(compute_label(plan, store, 0, day(0)), 0.0);
  EXPECT_EQ(compute_label(plan, store, 0, day(35)), 0.0);
  EXPECT_EQ(compute_label(plan, store, 0, day(60)), 1.0);
  EXPECT_EQ(compute_label(plan, store, 1, day(0)), 1.0);  // no orders: 0 = 0
  EXPECT_EQ(compute_label(plan, store, 0, day(5)), 1.0);  // day 5 sits on the open end
  EXPECT_THROW(compute_label(plan, store, 7, day(0)), InputError);
}

TEST(ComputeLabel, StaticReadsStoredValue) {
  auto store = two_order_store();
  auto plan = pql::compile("PREDICT users.age FOR EACH users.user_id", store.graph);
  EXPECT_EQ(compute_label(plan, store, 0, 0), 30.0);
  EXPECT_FALSE(compute_label(plan, store, 1, 0).has_value());
}

// Brute-force oracle: scan every order and match the foreign key string.
std::optional<double> oracle_label(const Store& store, const std::string& fn, const std::string& op, double lit,
                                   bool with_cmp, std::uint32_t user, Timestamp a, Timestamp s, Timestamp e,
                                   double min_amount) {
  const auto& g = store.graph;
  auto ot = g.table_index("orders");
  const auto& t = g.table(ot);
  std::vector<double> vals;
  for (std::uint32_t r = 0; r < t.rows; ++r) {
    if (t.find("user_id")->str(r) != g.pk_string(0, user)) continue;
    Timestamp rt = g.node_time(ot, r);
    if (!(rt > a + s && rt <= a + e)) continue;
    if (!(t.find("amount")->numbers[r] >= min_amount)) continue;
    vals.push_back(t.find("amount")->numbers[r]);
  }
  double v = 0;
  if (fn == "COUNT") v = static_cast<double>(vals.size());
  else if (fn == "SUM") for (double x : vals) v += x;
  else {
    if (vals.empty()) return std::nullopt;
    if (fn == "AVG") {
      for (double x : vals) v += x;
      v /= static_cast<double>(vals.size());
    } else if (fn == "MIN") v = *std::min_element(vals.begin(), vals.end());
    else v = *std::max_element(vals.begin(), vals.end());
  }
  if (!with_cmp) return v;
  bool r = op == "=" ? v == lit : op == "!=" ? v != lit : op == "<" ? v < lit : op == "<=" ? v <= lit : op == ">" ? v > lit : v >= lit;
  return r ? 1.0 : 0.0;
}

TEST(ComputeLabel, MatchesFullScanOracle) {
  auto store = testing::random_shop_store(21);
  ASSERT_EQ(store.graph.meta(0).name, "users");
  Rng rng(2);
  const char* fns[] = {"COUNT", "SUM", "AVG", "MIN", "MAX"};
  const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
  for (int q = 0; q < 400; ++q) {
    std::string fn = fns[rng.below(5)];
    std::string op = ops[rng.below(6)];
    bool with_cmp = rng.bernoulli(0.5);
    int s = static_cast<int>(rng.below(20)) - 10, e = s + 1 + static_cast<int>(rng.below(40));
    double lit = static_cast<double>(rng.below(60));
    double min_amount = static_cast<double>(rng.below(30));
    std::string query = "PREDICT " + fn + "(orders." + (fn == "COUNT" && rng.bernoulli(0.5) ? "*" : "amount") + ", " +
                        std::to_string(s) + ", " + std::to_string(e) + ", days, WHERE amount >= " +
                        pql::format_number(min_amount) + ")" + (with_cmp ? " " + op + " " + pql::format_number(lit) : "") +
                        " FOR EACH users.user_id";
    auto plan = pql::compile(query, store.graph);
    auto user = static_cast<std::uint32_t>(rng.below(store.graph.table(0).rows));
    Timestamp a = day(static_cast<int>(rng.below(110)));
    auto got = compute_label(plan, store, user, a);
    auto want = oracle_label(store, fn, op, lit, with_cmp, user, a, day(s), day(e), min_amount);
    ASSERT_EQ(got.has_value(), want.has_value()) << query;
    if (got) EXPECT_DOUBLE_EQ(*got, *want) << query;
  }
}

TEST(GenerateContext, NoLeakageAndDeterminism) {
  auto store = testing::random_shop_store(13);
  auto plan = pql::compile("PREDICT COUNT(orders.*, 0, 10, days) > 1 FOR EACH users.user_id", store.graph);
  ContextConfig cfg;
  cfg.budget = 150;
  cfg.lag_timesteps = 3;
  cfg.seed = 4;
  const Timestamp anchor = day(90);
  std::vector<std::uint32_t> pred{0, 1, 2};
  auto tt = generate_context(plan, store, pred, anchor, cfg);
  EXPECT_LE(tt.context.size(), cfg.budget);
  EXPECT_EQ(tt.context.size(), cfg.budget);
  EXPECT_EQ(tt.prediction.size(), 3u);
  std::set<std::pair<std::uint32_t, Timestamp>> pairs;
  for (const auto& r : tt.context) {
    EXPECT_LE(r.anchor + day(10), anchor);
    EXPECT_TRUE(pairs.emplace(r.entity, r.anchor).second);
    AccessProbe probe;
    EXPECT_EQ(compute_label(plan, store, r.entity, r.anchor, &probe), r.target);
    if (probe.reads) {
      EXPECT_LE(probe.max_time, anchor);
      EXPECT_GT(probe.min_time, r.anchor);
    }
    ASSERT_EQ(r.lags.size(), 3u);
  }
  for (const auto& p : tt.prediction) EXPECT_FALSE(pairs.count({p.entity, p.anchor}));
  auto again = generate_context(plan, store, pred, anchor, cfg);
  EXPECT_EQ(again.context, tt.context);
  // Local rows of the prediction entities come at one-window strides.
  std::size_t local = 0;
  for (const auto& r : tt.context)
    if (r.entity <= 2) {
      ++local;
      EXPECT_EQ((anchor - day(10) - r.anchor) % day(10), 0);
    }
  EXPECT_GT(local, 0u);
  // Lag 1 of a prediction row is the label of the window ending at the anchor.
  EXPECT_EQ(tt.prediction[0].lags[0], compute_label(plan, store, 0, anchor - day(10)));
}

TEST(GenerateContext, SingleEntityOneWindow) {
  auto store = two_order_store();
  auto plan = pql::compile("PREDICT COUNT(orders.*, 0, 30, days) FOR EACH users.user_id", store.graph);
  ContextConfig cfg;
  cfg.local_fraction = 1.0;
  cfg.max_windows = 1;
  auto tt = generate_context(plan, store, {0}, day(40), cfg);
  ASSERT_EQ(tt.context.size(), 1u);
  EXPECT_EQ(tt.context[0].anchor, day(10));
  EXPECT_EQ(tt.context[0].target, compute_label(plan, store, 0, day(10)));
  EXPECT_THROW(generate_context(plan, store, {0}, day(20), cfg), InputError);
}

TEST(GenerateContext, StaticBudget) {
  RawTable t{"persons", {"person_id", "score"}, {{}, {}}};
  for (int i = 0; i < 120000; ++i) {
    t.columns[0].push_back(std::to_string(i));
    t.columns[1].push_back(std::to_string(i % 7));
  }
  auto raw = std::vector{t};
  auto store = make_store(build_graph(infer_schema(raw), raw));
  auto plan = pql::compile("PREDICT persons.score FOR EACH persons.person_id", store.graph);
  ContextConfig cfg;
  cfg.lag_timesteps = 10;
  auto tt = generate_context(plan, store, {5, 6}, default_anchor(plan, store.graph), cfg);
  EXPECT_EQ(tt.context.size(), 10000u);
  for (const auto& r : tt.context) EXPECT_TRUE(r.entity != 5 && r.entity != 6);
}

TEST(GenerateContext, LagVectorsHaveRequestedLength) {
  auto store = testing::random_shop_store(3);
  auto plan = pql::compile("PREDICT COUNT(orders.*, 0, 5, days) FOR EACH users.user_id", store.graph);
  ContextConfig cfg;
  cfg.lag_timesteps = 10;
  cfg.budget = 50;
  auto tt = generate_context(plan, store, {0}, day(80), cfg);
  for (const auto& r : tt.context) EXPECT_EQ(r.lags.size(), 10u);
  EXPECT_EQ(tt.prediction[0].lags.size(), 10u);
  // Lags reaching before the data are null.
  auto early = generate_context(plan, store, {0}, day(12), cfg);
  EXPECT_FALSE(early.prediction[0].lags.back().has_value());
}

TEST(HoldoutSplit, SizesAndOrder) {
  std::vector<TaskRow> rows;
  for (std::uint32_t i = 0; i < 100; ++i) rows.push_back({i, day(static_cast<int>(i)), 1.0, {}});
  auto [ctx, ev] = holdout_split(rows, 0.2, true, 1);
  EXPECT_EQ(ctx.size(), 80u);
  EXPECT_EQ(ev.size(), 20u);
  Timestamp max_ctx = kNegInf, min_ev = kPosInf;
  for (const auto& r : ctx) max_ctx = std::max(max_ctx, r.anchor);
  for (const auto& r : ev) min_ev = std::min(min_ev, r.anchor);
  EXPECT_LT(max_ctx, min_ev);
  auto [c1, e1] = holdout_split(rows, 0.2, false, 9);
  auto [c2, e2] = holdout_split(rows, 0.2, false, 9);
  EXPECT_EQ(e1.size(), 20u);
  EXPECT_EQ(e1, e2);
  EXPECT_THROW(holdout_split(rows, 0.0, false, 1), InputError);
  EXPECT_THROW(holdout_split(std::vector<TaskRow>(3, rows[0]), 0.5, true, 1), InputError);
}

TEST(TaskCsv, RoundTrip) {
  auto store = testing::shop_store();
  auto plan = pql::compile("PREDICT items.category FOR EACH items.item_id", store.graph);
  std::vector<TaskRow> rows{{0, 0, 0.0, {}}, {1, 0, std::nullopt, {}}};
  auto path = testing::temp_path("task.csv");
  {
    std::ofstream out(path);
    write_task_csv(rows, plan, store.graph, out);
  }
  auto tt = read_task_csv(path, plan, store.graph);
  ASSERT_EQ(tt.context.size(), 1u);
  ASSERT_EQ(tt.prediction.size(), 1u);
  EXPECT_EQ(tt.context[0].target, 0.0);
  EXPECT_EQ(tt.prediction[0].entity, 1u);
}

}  // namespace
}  // namespace relicl
