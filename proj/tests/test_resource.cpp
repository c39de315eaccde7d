#include <gtest/gtest.h>

#include <sstream>

#include "tinylight/resource.hpp"

using namespace tinylight;

namespace {

struct Row {
  const char* description;
  std::int64_t params;
  std::int64_t flops;
};

void expect_rows(const ResourceReport& r, const std::vector<Row>& rows) {
  ASSERT_EQ(r.items.size(), rows.size()) << r.model;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(r.items[k].description, rows[k].description);
    EXPECT_EQ(r.items[k].total().params, rows[k].params) << r.model << ": " << rows[k].description;
    EXPECT_EQ(r.items[k].total().flops, rows[k].flops) << r.model << ": " << rows[k].description;
  }
}

}  // namespace

TEST(AtomicCost, Formulas) {
  EXPECT_EQ(cost(linear_op(12, 18)), (Cost{234, 450}));
  EXPECT_EQ(cost(conv2d_op(32, 20, 9, 8)), (Cost{660, 93600}));
  EXPECT_EQ(cost(relu_op(18)), (Cost{0, 36}));
  EXPECT_EQ(cost(matmul_op(16, 36, 9)), (Cost{0, 10368}));
  EXPECT_EQ(cost(softmax_op(5)), (Cost{0, 15}));
  EXPECT_THROW(cost(linear_op(0, 3)), ShapeError);
}

TEST(AtomicCost, ExpressionText) {
  const auto item = make_item("x", {linear_op(12, 18)}, {linear_op(12, 18), relu_op(18)});
  EXPECT_EQ(item.params_expr, "Linear(12, 18)");
  EXPECT_EQ(item.flops_expr, "relu(Linear(12, 18))");
}

TEST(ResourceReport, TinyLightRows) {
  const auto r = report("TinyLight");
  expect_rows(r, {{"Feature 1 to layer 2", 234, 486},
                  {"Feature 2 to layer 2", 198, 378},
                  {"Element-wise sum on layer 2", 0, 18},
                  {"Layer 2 to layer 3", 380, 780},
                  {"Layer 3 to output layer", 189, 369}});
  EXPECT_EQ(r.total(), (Cost{1001, 2031}));
  EXPECT_EQ(r.footprint_bytes(), 4004);
}

TEST(ResourceReport, EcoLightRows) {
  const auto r = report("EcoLight");
  expect_rows(r, {{"Layer 1 to layer 2", 30, 70}, {"Layer 2 to layer 3", 110, 230}, {"Layer 3 to output layer", 22, 42}});
  EXPECT_EQ(r.total(), (Cost{162, 342}));
}

TEST(ResourceReport, FrapRows) {
  const auto r = report("FRAP");
  expect_rows(r, {{"Phase embedding", 8, 20},
                  {"Vehicle embedding", 8, 20},
                  {"Lane-link embedding", 144, 304},
                  {"Relationship embedding", 8, 20},
                  {"Pair of phases", 660, 93600},
                  {"Competition mask", 100, 12960},
                  {"Q layer 1 to layer 2", 420, 61920},
                  {"Q layer 2 to layer 3", 21, 2952},
                  {"Phase-based aggregation", 0, 10368},
                  {"Mask over cube", 0, 1440},
                  {"Summation over phase", 0, 72}});
  EXPECT_EQ(r.total(), (Cost{1369, 183676}));
  EXPECT_EQ(report("MPLight").total(), r.total());
}

TEST(ResourceReport, CoLightRows) {
  const auto r = report("CoLight");
  expect_rows(r, {{"Embedding layer 1 to layer 2", 1088, 2208},
                  {"Embedding layer 2 to layer 3", 1056, 2144},
                  {"Embedding layers for neighbors", 0, 17408},
                  {"Observation to attention heads", 5280, 10720},
                  {"Neighbors to attention heads", 5280, 0},
                  {"Neighbor dense layer", 0, 53600},
                  {"Computing logits", 0, 1600},
                  {"Softmax", 0, 75},
                  {"Hidden representation per head", 5280, 10720},
                  {"Weighting by attention", 0, 1600},
                  {"Averaging over heads", 0, 192},
                  {"Q layer 1 to layer 2", 1056, 2144},
                  {"Q layer 2 to layer 3", 297, 585}});
  EXPECT_EQ(r.total(), (Cost{19337, 102996}));
}

TEST(ResourceReport, RuleBased) {
  EXPECT_EQ(report("SOTL").total(), (Cost{2, 14}));
  EXPECT_EQ(report("MaxPressure").total(), (Cost{0, 33}));
  EXPECT_EQ(report("FixedTime").total(), (Cost{0, 0}));
  IntersectionMeta small;
  small.lanes_in = 8;
  small.lanes_out = 8;
  small.phases = 4;
  EXPECT_EQ(report("MaxPressure", small).total().flops, 20);
  EXPECT_THROW(report("DQN"), Error);
}

TEST(ResourceReport, Ratios) {
  const double params_ratio = 19337.0 / 1001.0, flops_ratio = 183676.0 / 2031.0;
  EXPECT_NEAR(static_cast<double>(report("CoLight").total().params) / report("TinyLight").total().params, params_ratio, 1e-12);
  EXPECT_NEAR(static_cast<double>(report("FRAP").total().flops) / report("TinyLight").total().flops, flops_ratio, 1e-12);
  EXPECT_NEAR(params_ratio, 19.32, 0.01);
  EXPECT_NEAR(flops_ratio, 90.43, 0.01);
}

// Hand-counted: (12+1)*18 + (9+1)*18 + (18+1)*20 + (20+1)*9 parameters.
TEST(ResourceReport, ShapeMatchesHandCount) {
  const auto r = report_shape({{12, 9}, {18}, {20}, 9});
  EXPECT_EQ(r.total().params, 234 + 180 + 380 + 189);
  EXPECT_EQ(r.total().flops, 486 + 378 + 18 + 780 + 369);
  const auto wide = report_shape({{4}, {6, 8}, {5}, 3});
  // 4->6, 4->8, 6->5, 8->5, sum of two layer-3 contributions, 5->3.
  EXPECT_EQ(wide.total().params, 30 + 40 + 35 + 45 + 18);
  EXPECT_EQ(wide.total().flops, (9 * 6 + 12) + (9 * 8 + 16) + (13 * 5 + 10) + (17 * 5 + 10) + 5 + 11 * 3);
}

TEST(ResourceReport, CsvAndTable) {
  std::ostringstream csv, table;
  write_report_csv(csv, report("EcoLight"));
  EXPECT_EQ(csv.str(),
            "description,params,flops\n\"Layer 1 to layer 2\",30,70\n\"Layer 2 to layer 3\",110,230\n"
            "\"Layer 3 to output layer\",22,42\nTotal,162,342\n");
  write_report_table(table, report("CoLight"));
  EXPECT_NE(table.str().find("19,337"), std::string::npos);
  EXPECT_NE(table.str().find("102,996"), std::string::npos);
  EXPECT_EQ(with_commas(1000000), "1,000,000");
  EXPECT_EQ(with_commas(999), "999");
}
