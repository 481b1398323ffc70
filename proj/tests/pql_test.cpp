#include <gtest/gtest.h>

#include "relicl/core/random.hpp"
#include "relicl/pql/compile.hpp"
#include "pql_gen.hpp"
#include "test_util.hpp"

namespace relicl::pql {
namespace {

constexpr const char* kListing = "PREDICT COUNT(orders.*, 0, 30, days)=0 FOR EACH users.user_id";

std::vector<Tok> kinds(std::string_view text) {
  std::vector<Tok> out;
  for (const auto& t : tokenize(text)) out.push_back(t.kind);
  return out;
}

TEST(Tokenize, Basics) {
  EXPECT_EQ(kinds("PREDICT COUNT("), (std::vector<Tok>{Tok::kPredict, Tok::kCount, Tok::kLParen, Tok::kEnd}));
  auto toks = tokenize("users.user_id");
  ASSERT_EQ(toks.size(), 4u);
  EXPECT_EQ(toks[0].kind, Tok::kIdent);
  EXPECT_EQ(toks[0].text, "users");
  EXPECT_EQ(toks[1].kind, Tok::kDot);
  EXPECT_EQ(toks[2].text, "user_id");
  EXPECT_EQ(toks[2].span.begin, 6u);
  EXPECT_EQ(kinds("predict Predict"), (std::vector<Tok>{Tok::kPredict, Tok::kPredict, Tok::kEnd}));
  EXPECT_EQ(kinds("≤ ≥ ≠ <= >= != <>"),
            (std::vector<Tok>{Tok::kLe, Tok::kGe, Tok::kNe, Tok::kLe, Tok::kGe, Tok::kNe, Tok::kNe, Tok::kEnd}));
}

TEST(Tokenize, IllegalCharacterReportsColumn) {
  try {
    tokenize("PREDICT @");
    FAIL();
  } catch (const QueryError& e) {
    EXPECT_EQ(e.column(), 9u);
  }
  EXPECT_THROW(tokenize("'open"), QueryError);
}

TEST(Parse, ListingQuery) {
  auto ast = parse(kListing);
  ASSERT_TRUE(ast.is_aggregate());
  const auto& agg = std::get<AggExpr>(ast.target);
  EXPECT_EQ(agg.fn, AggFn::kCount);
  EXPECT_EQ(agg.table, "orders");
  EXPECT_FALSE(agg.column.has_value());
  EXPECT_EQ(agg.start, 0);
  EXPECT_EQ(agg.end, 30);
  EXPECT_EQ(agg.unit, TimeUnit::kDays);
  ASSERT_TRUE(ast.comparison.has_value());
  EXPECT_EQ(ast.comparison->op, CmpOp::kEq);
  EXPECT_EQ(std::get<double>(ast.comparison->value), 0.0);
  EXPECT_EQ(ast.entity.table, "users");
  EXPECT_EQ(ast.entity.column, "user_id");
  EXPECT_EQ(agg.column_span.begin, 14u);
}

TEST(Parse, StaticAndErrors) {
  auto ast = parse("PREDICT users.age FOR EACH users.user_id");
  ASSERT_FALSE(ast.is_aggregate());
  EXPECT_EQ(std::get<ColumnRef>(ast.target).column, "age");
  try {
    parse("PREDICT FOR EACH users.user_id");
    FAIL();
  } catch (const QueryError& e) {
    EXPECT_EQ(e.column(), 9u);
    EXPECT_NE(std::string(e.what()).find("expected expression"), std::string::npos);
  }
  EXPECT_THROW(parse("PREDICT COUNT(orders.*, 30, 0, days) FOR EACH users.user_id"), QueryError);
  EXPECT_THROW(parse("PREDICT COUNT(orders.*, 0, 30, weeks) FOR EACH users.user_id"), QueryError);
  EXPECT_THROW(parse("PREDICT COUNT(orders.*, 0, 1.5, days) FOR EACH users.user_id"), QueryError);
  EXPECT_THROW(parse("PREDICT users.age FOR EACH users.user_id extra"), QueryError);
}

TEST(Parse, WhereClause) {
  auto ast = parse("predict sum(orders.price, -7, 0, hours, where status = 'it''s' and price >= 2.5) > 10 "
                   "for each users.user_id");
  const auto& agg = std::get<AggExpr>(ast.target);
  EXPECT_EQ(agg.start, -7);
  ASSERT_EQ(agg.filter.size(), 2u);
  EXPECT_EQ(std::get<std::string>(agg.filter[0].value), "it's");
  EXPECT_EQ(agg.filter[1].op, CmpOp::kGe);
  EXPECT_EQ(pretty_print(ast),
            "PREDICT SUM(orders.price, -7, 0, HOURS, WHERE status = 'it''s' AND price >= 2.5) > 10 FOR EACH "
            "users.user_id");
}

TEST(PrettyPrint, CanonicalFixpoint) {
  auto text = pretty_print(parse(kListing));
  EXPECT_EQ(text, "PREDICT COUNT(orders.*, 0, 30, DAYS) = 0 FOR EACH users.user_id");
  EXPECT_EQ(pretty_print(parse(text)), text);
  EXPECT_EQ(pretty_print(parse("  predict   users.age\n for  each users.user_id ")),
            "PREDICT users.age FOR EACH users.user_id");
}

TEST(PrettyPrint, ParseInvertsPrettyPrintOnRandomAsts) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    auto ast = testing::random_ast(rng);
    auto text = pretty_print(ast);
    ASSERT_EQ(parse(text), ast) << text;
  }
}

class CompileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto raw = relicl::testing::shop_tables();
    auto schema = override_schema(infer_schema(raw), std::vector<SchemaEdit>{
                                                         AddDerivedColumn{"orders", "total", "price * quantity"}});
    store_ = make_store(build_graph(schema, raw));
  }
  const TemporalGraph& g() const { return store_.graph; }
  Store store_;
};

TEST_F(CompileTest, ListingIsBinaryTemporal) {
  auto plan = compile(kListing, g());
  EXPECT_EQ(plan.type, TaskType::kBinary);
  EXPECT_TRUE(plan.temporal);
  const auto& l = plan.temporal_label();
  EXPECT_EQ(l.table, g().table_index("orders"));
  EXPECT_EQ(store_.index.edge_type(l.edge_type).name, "users<-orders.user_id");
  EXPECT_EQ(l.start, 0);
  EXPECT_EQ(l.end, 30 * kMsPerDay);
  EXPECT_EQ(plan.entity_table, g().table_index("users"));
}

TEST_F(CompileTest, TypeRules) {
  EXPECT_EQ(compile("PREDICT SUM(orders.total, 0, 7, days) FOR EACH users.user_id", g()).type, TaskType::kRegression);
  auto mc = compile("PREDICT items.category FOR EACH items.item_id", g());
  EXPECT_EQ(mc.type, TaskType::kMulticlass);
  EXPECT_FALSE(mc.temporal);
  EXPECT_EQ(mc.classes, (std::vector<std::string>{"toys", "books", std::string(kOtherClass)}));
  EXPECT_EQ(mc.class_index("books"), 1u);
  EXPECT_EQ(mc.class_index("garden"), 2u);
  EXPECT_EQ(compile("PREDICT users.age FOR EACH users.user_id", g()).type, TaskType::kRegression);
  EXPECT_EQ(compile("PREDICT MAX(orders.price, 0, 7, hours, WHERE item_id = 'i1') FOR EACH users.user_id", g()).type,
            TaskType::kRegression);
}

TEST_F(CompileTest, Errors) {
  auto col = [&](const char* q) {
    try {
      compile(q, g());
    } catch (const QueryError& e) {
      return e.column();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(col("PREDICT COUNT(nope.*, 0, 30, days) FOR EACH users.user_id"), 15u);
  EXPECT_EQ(col("PREDICT COUNT(orders.*, 0, 30, days) FOR EACH users.nope"), 47u);
  EXPECT_NE(col("PREDICT SUM(orders.item_id, 0, 30, days) FOR EACH users.user_id"), 0u);
  EXPECT_NE(col("PREDICT SUM(orders.*, 0, 30, days) FOR EACH users.user_id"), 0u);
  EXPECT_NE(col("PREDICT COUNT(orders.*, 0, 30, days) FOR EACH items.category"), 0u);
  EXPECT_NE(col("PREDICT orders.user_id FOR EACH orders.order_id"), 0u);  // identifier target
  EXPECT_NE(col("PREDICT COUNT(users.*, 0, 30, days) FOR EACH items.item_id"), 0u);  // no time, no link
  EXPECT_NE(col("PREDICT COUNT(orders.*, 0, 30, days, WHERE price = 'x') FOR EACH users.user_id"), 0u);
}

TEST_F(CompileTest, BooleanStaticColumnIsBinary) {
  RawTable t{"acc", {"acc_id", "churned"}, {{"a", "b", "c"}, {"true", "false", "TRUE"}}};
  auto raw = std::vector{t};
  auto graph = build_graph(infer_schema(raw), raw);
  auto plan = compile("PREDICT acc.churned FOR EACH acc.acc_id", graph);
  EXPECT_EQ(plan.type, TaskType::kBinary);
}

}  // namespace
}  // namespace relicl::pql
