#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "tinylight/codegen.hpp"
#include "tinylight/harness.hpp"

using namespace tinylight;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("tinylight-test-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::vector<SubGraphInput> random_states(const SubGraph& sub, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SubGraphInput> out;
  for (int k = 0; k < n; ++k) {
    SubGraphInput x;
    for (int d : sub.input_dims) {
      x.emplace_back();
      for (int j = 0; j < d; ++j) x.back().push_back(u(rng));
    }
    out.push_back(std::move(x));
  }
  return out;
}

SubGraph with_nontrivial_bias(SubGraph sub, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto* t : sub.theta_tensors())
    if (t->rows == 1)
      for (double& v : t->value) v = u(rng);
  return sub;
}

}  // namespace

TEST(Codegen, ReferenceShapeFootprint) {
  const SubGraph sub = make_subgraph({12, 10}, 18, 20, 9, 1);
  const auto code = emit_c(sub);
  EXPECT_EQ(code.weight_constants, 1001u);
  EXPECT_EQ(code.static_bytes, 4004u);
  EXPECT_EQ(code.buffer_dim, 20);
  EXPECT_EQ(code.buffer_bytes, 160u);
  EXPECT_NE(code.source.find("void tl_forward(const float in1[12], const float in2[10], float q[9])"), std::string::npos);
  EXPECT_EQ(code.source.find("#include"), std::string::npos);
  EXPECT_EQ(code.source.find("malloc"), std::string::npos);
}

TEST(Codegen, Q15HalvesStaticData) {
  const SubGraph sub = make_subgraph({12, 10}, 18, 20, 9, 1);
  CodegenOptions opt;
  opt.precision = Precision::kQ15;
  opt.q15 = quantize_q15(sub, random_states(sub, 100, 3));
  const auto code = emit_c(sub, opt);
  EXPECT_EQ(code.static_bytes * 2, emit_c(sub).static_bytes);
  EXPECT_NE(code.source.find("#include <stdint.h>"), std::string::npos);
}

TEST(Codegen, RejectsBadOptions) {
  SubGraph sub = make_subgraph({3}, 4, 4, 2, 1);
  CodegenOptions opt;
  opt.precision = Precision::kQ15;
  EXPECT_THROW(emit_c(sub, opt), ConfigError);
  opt = {};
  opt.prefix = "9bad";
  EXPECT_THROW(emit_c(sub, opt), ConfigError);
  sub.head.clear();
  EXPECT_THROW(emit_c(sub), ShapeError);
  EXPECT_THROW(quantize_q15(make_subgraph({3}, 4, 4, 2, 1), random_states(make_subgraph({3}, 4, 4, 2, 1), 99, 1)),
               ConfigError);
}

TEST(Codegen, TestVectorsRoundTripAndDeterminism) {
  const SubGraph sub = make_subgraph({4, 3}, 5, 6, 3, 2);
  CodegenOptions opt;
  opt.test_vector_count = 25;
  const auto a = write_test_vectors(emit_test_vectors(sub, opt, 9));
  EXPECT_EQ(a, write_test_vectors(emit_test_vectors(sub, opt, 9)));
  EXPECT_NE(a, write_test_vectors(emit_test_vectors(sub, opt, 10)));
  const auto set = read_test_vectors(a);
  ASSERT_EQ(set.inputs.size(), 25u);
  // References recomputed from the parsed file agree exactly.
  for (std::size_t n = 0; n < set.inputs.size(); ++n) {
    const auto q = reference_forward(sub, set.inputs[n]);
    for (std::size_t k = 0; k < q.size(); ++k) EXPECT_EQ(static_cast<float>(q[k]), set.reference[n][k]);
    EXPECT_EQ(argmax(q), set.argmax[n]);
  }
  opt.test_vector_count = 0;
  EXPECT_EQ(write_test_vectors(emit_test_vectors(sub, opt, 9)), "TLVEC 1\ninputs 2 4 3 outputs 3 count 0\n");
  EXPECT_THROW(read_test_vectors("TLVEC 1\ninputs 1 2 outputs 1 count 1\n0.5\n"), Error);
}

TEST(Q15, IntegerWeightsRoundTripExactly) {
  SubGraph sub = make_subgraph({2}, 3, 3, 2, 4);
  int v = -300;
  for (auto* t : sub.theta_tensors())
    for (double& w : t->value) w = v += 37;
  const auto m = quantize_q15(sub, random_states(sub, 100, 1));
  auto check = [](const DenseParams& p, const Q15Dense& d) {
    for (std::size_t k = 0; k < p.weight.size(); ++k) EXPECT_EQ(std::ldexp(double(d.weight[k]), d.weight_exp), p.weight.value[k]);
  };
  check(sub.edges1[0][0], m.edges1[0][0]);
  check(sub.edges2[0][0], m.edges2[0][0]);
  check(sub.head[0], m.head[0]);
}

TEST(Q15, ZeroTensorGetsUnitScale) {
  SubGraph sub = make_subgraph({2}, 3, 3, 2, 4);
  for (auto* t : sub.theta_tensors()) std::fill(t->value.begin(), t->value.end(), 0.0);
  const auto m = quantize_q15(sub, random_states(sub, 100, 1));
  EXPECT_EQ(m.head[0].weight_exp, 0);
  EXPECT_EQ(m.forward(m.quantize_inputs(std::vector<float>{0.3f, 0.7f})), (std::vector<std::int16_t>{0, 0}));
}

TEST(Q15, HeldOutArgmaxAgreement) {
  const SubGraph sub = with_nontrivial_bias(make_subgraph({12, 9}, 18, 20, 9, 5), 6);
  const auto m = quantize_q15(sub, random_states(sub, 500, 7));
  int agree = 0, decided = 0;
  for (const auto& x : random_states(sub, 1000, 8)) {
    std::vector<float> packed;
    for (const auto& v : x)
      for (double e : v) packed.push_back(static_cast<float>(e));
    const auto ref = reference_forward(sub, packed);
    if (top2_margin(ref) <= 1e-4) continue;
    ++decided;
    agree += argmax(m.forward_raw(packed)) == argmax(ref);
  }
  EXPECT_GE(static_cast<double>(agree) / decided, 0.99);
}

class HarnessTest : public ::testing::Test {
 protected:
  static bool have_cc() { return std::system("cc --version > /dev/null 2>&1") == 0; }
  void SetUp() override {
    if (!have_cc()) GTEST_SKIP() << "no host C compiler";
  }
};

TEST_F(HarnessTest, Float32MatchesReference) {
  const SubGraph sub = with_nontrivial_bias(make_subgraph({12, 9}, 18, 20, 9, 11), 12);
  const fs::path dir = scratch("float");
  write(dir / "model.c", emit_c(sub).source);
  write(dir / "vectors.txt", write_test_vectors(emit_test_vectors(sub, {}, 1)));
  HarnessOptions ho;
  ho.work_dir = dir;
  const auto r = run_harness(dir / "model.c", dir / "vectors.txt", ho);
  EXPECT_TRUE(r.pass) << r.json;
  EXPECT_EQ(r.vectors, 1000);
  EXPECT_LE(r.max_abs_diff, 1e-5);
  EXPECT_EQ(r.argmax_mismatches, 0);
}

TEST_F(HarnessTest, MultiBlockSubGraph) {
  SuperGraphSpec spec;
  spec.feature_ids = {1, 2, 3};
  spec.input_dims = {4, 3, 5};
  spec.input_scale = {0.5, 2.0, 1.0};
  spec.layer2_dims = {6, 7, 8};
  spec.layer3_dims = {5, 9};
  spec.output_dim = 4;
  SuperGraph sg(spec, 3);
  const SubGraph sub = with_nontrivial_bias(extract(sg, {2, 2, 2}), 4);
  const fs::path dir = scratch("multi");
  write(dir / "model.c", emit_c(sub).source);
  write(dir / "vectors.txt", write_test_vectors(emit_test_vectors(sub, {}, 2)));
  HarnessOptions ho;
  ho.work_dir = dir;
  const auto r = run_harness(dir / "model.c", dir / "vectors.txt", ho);
  EXPECT_TRUE(r.pass) << r.json;
}

TEST_F(HarnessTest, ZeroWeightsGiveBias) {
  SubGraph sub = make_subgraph({3}, 4, 4, 3, 1);
  for (auto* t : sub.theta_tensors()) std::fill(t->value.begin(), t->value.end(), 0.0);
  sub.head[0].bias.value = {0.25, -1.5, 3.0};
  const fs::path dir = scratch("zero");
  write(dir / "model.c", emit_c(sub).source);
  CodegenOptions opt;
  opt.test_vector_count = 3;
  write(dir / "vectors.txt", write_test_vectors(emit_test_vectors(sub, opt, 1)));
  HarnessOptions ho;
  ho.work_dir = dir;
  ho.dump = true;
  const auto r = run_harness(dir / "model.c", dir / "vectors.txt", ho);
  ASSERT_EQ(r.outputs.size(), 3u);
  for (const auto& row : r.outputs) EXPECT_EQ(row, (std::vector<double>{0.25, -1.5, 3.0}));
}

TEST_F(HarnessTest, CorruptedWeightFails) {
  const SubGraph sub = make_subgraph({12, 9}, 18, 20, 9, 11);
  const fs::path dir = scratch("corrupt");
  std::string src = emit_c(sub).source;
  const auto at = src.find("tl_w3_1[");
  const auto brace = src.find("{\n    ", at) + 6;
  src.replace(brace, 1, src[brace] == '-' ? "+9" : "9");  // scale the first head weight up
  write(dir / "model.c", src);
  write(dir / "vectors.txt", write_test_vectors(emit_test_vectors(sub, {}, 1)));
  HarnessOptions ho;
  ho.work_dir = dir;
  const auto r = run_harness(dir / "model.c", dir / "vectors.txt", ho);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_abs_diff, 1e-5);
}

TEST_F(HarnessTest, EmptyVectorFilePasses) {
  const SubGraph sub = make_subgraph({2}, 3, 3, 2, 1);
  const fs::path dir = scratch("empty");
  write(dir / "model.c", emit_c(sub).source);
  CodegenOptions opt;
  opt.test_vector_count = 0;
  write(dir / "vectors.txt", write_test_vectors(emit_test_vectors(sub, opt, 1)));
  HarnessOptions ho;
  ho.work_dir = dir;
  const auto r = run_harness(dir / "model.c", dir / "vectors.txt", ho);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.vectors, 0);
}

TEST_F(HarnessTest, MalformedInputsReported) {
  const SubGraph sub = make_subgraph({2}, 3, 3, 2, 1);
  const fs::path dir = scratch("malformed");
  write(dir / "model.c", emit_c(sub).source);
  write(dir / "vectors.txt", "TLVEC 1\ninputs 1 2 outputs 2 count 2\n0.1 0.2 0.3 0.4 1\n");
  HarnessOptions ho;
  ho.work_dir = dir;
  EXPECT_THROW(run_harness(dir / "model.c", dir / "vectors.txt", ho), HarnessError);
  write(dir / "bad.c", "int broken(void) { return }\n");
  write(dir / "vectors.txt", "TLVEC 1\ninputs 1 2 outputs 2 count 0\n");
  EXPECT_THROW(run_harness(dir / "bad.c", dir / "vectors.txt", ho), HarnessError);
}

TEST_F(HarnessTest, Q15MatchesIntegerReference) {
  const SubGraph sub = with_nontrivial_bias(make_subgraph({12, 9}, 18, 20, 9, 21), 22);
  const auto calib = random_states(sub, 500, 23);
  CodegenOptions opt;
  opt.precision = Precision::kQ15;
  opt.q15 = quantize_q15(sub, calib);
  const fs::path dir = scratch("q15");
  write(dir / "model.c", emit_c(sub, opt).source);
  const auto set = emit_test_vectors(sub, opt, 3);
  write(dir / "vectors.txt", write_test_vectors(set));
  HarnessOptions ho;
  ho.work_dir = dir;
  ho.q15 = true;
  ho.tolerance = 1.0;
  ho.min_agreement = 0.99;
  ho.dump = true;
  const auto r = run_harness(dir / "model.c", dir / "vectors.txt", ho);
  EXPECT_TRUE(r.pass) << r.json;
  EXPECT_GE(r.argmax_agreement, 0.99);
  ASSERT_EQ(r.outputs.size(), set.inputs.size());
  for (std::size_t n = 0; n < set.inputs.size(); ++n) {
    const auto expect = opt.q15->forward_raw(set.inputs[n]);
    for (std::size_t k = 0; k < expect.size(); ++k) ASSERT_NEAR(r.outputs[n][k], expect[k], 1e-9 * std::abs(expect[k]) + 1e-12);
  }
}
