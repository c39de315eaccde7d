#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "gradcheck.hpp"
#include "tinylight/dqn.hpp"
#include "tinylight/mlp.hpp"

using namespace tinylight;

namespace {

Transition make_transition(const std::vector<int>& dims, std::mt19937_64& rng, int a, double r, bool done) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Transition t;
  for (int d : dims) {
    t.s.emplace_back();
    t.s_next.emplace_back();
    for (int j = 0; j < d; ++j) {
      t.s.back().push_back(u(rng));
      t.s_next.back().push_back(u(rng));
    }
  }
  t.a = a;
  t.r = r;
  t.done = done;
  return t;
}

// d(loss)/d(tensor) by central differences, one vector per tensor.
template <class F>
std::vector<std::vector<double>> numeric_grad(const std::vector<Tensor*>& ts, F loss, double h = 1e-6) {
  std::vector<std::vector<double>> out;
  for (Tensor* t : ts) {
    out.emplace_back(t->size());
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double keep = t->value[i];
      t->value[i] = keep + h;
      const double up = loss();
      t->value[i] = keep - h;
      const double down = loss();
      t->value[i] = keep;
      out.back()[i] = (up - down) / (2 * h);
    }
  }
  return out;
}

HyperParams sgd_params() {
  HyperParams hp;
  hp.sgd = true;
  hp.lr = 0.05;
  hp.alpha_lr = 0.03;
  hp.beta = 2.0;
  hp.batch_size = 2;
  hp.buffer_capacity = 16;
  return hp;
}

}  // namespace

TEST(DqnAct, GreedyWithoutExploration) {
  std::mt19937_64 rng(1);
  const std::vector<double> q = {0.1, 0.7, -2.0};
  for (int k = 0; k < 100; ++k) EXPECT_EQ(dqn_act(q, 0.0, rng), 1);
  EXPECT_THROW(dqn_act(std::vector<double>{}, 0.1, rng), ShapeError);
}

TEST(DqnAct, EpsilonGreedyFrequencies) {
  std::mt19937_64 rng(2);
  const std::vector<double> q = {0.0, 0.0, 5.0, 1.0};
  const double eps = 0.3;
  const int n = 200000;
  std::vector<int> hits(4, 0);
  for (int k = 0; k < n; ++k) ++hits[dqn_act(q, eps, rng)];
  for (int a = 0; a < 4; ++a) {
    const double p = (a == 2 ? 1.0 - eps : 0.0) + eps / 4.0;
    EXPECT_NEAR(hits[a], n * p, 5.0 * std::sqrt(n * p * (1 - p))) << "action " << a;
  }
}

TEST(SoftUpdate, ClosedForm) {
  Mlp online({2, 3, 2}, 1), target({2, 3, 2}, 2);
  const Mlp before = target;
  soft_update(target, online, 0.25);
  auto t = target.theta_tensors();
  auto o = online.theta_tensors();
  auto b = const_cast<Mlp&>(before).theta_tensors();
  for (std::size_t k = 0; k < t.size(); ++k)
    for (std::size_t i = 0; i < t[k]->size(); ++i)
      EXPECT_DOUBLE_EQ(t[k]->value[i], 0.75 * b[k]->value[i] + 0.25 * o[k]->value[i]);
  soft_update(target, online, 1.0);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_EQ(t[k]->value, o[k]->value);
  Mlp other({2, 4, 2}, 1);
  EXPECT_THROW(soft_update(target, other, 0.1), ShapeError);
}

TEST(SoftUpdate, CoversAlpha) {
  gradcheck::Instance in;
  std::mt19937_64 rng(3);
  in = gradcheck::random_instance(rng);
  SuperGraph target = in.graph;
  for (Tensor* t : target.alpha_tensors()) std::fill(t->value.begin(), t->value.end(), 0.0);
  soft_update(target, in.graph, 0.1);
  for (int l = 0; l < 3; ++l)
    for (std::size_t i = 0; i < target.logits(l).size(); ++i)
      EXPECT_DOUBLE_EQ(target.logits(l).value[i], 0.1 * in.graph.logits(l).value[i]);
}

TEST(Replay, RingOverwritesOldest) {
  ReplayBuffer b(3);
  for (int k = 0; k < 5; ++k) b.push({{}, k, 0.0, {}, false});
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.pushed(), 5u);
  EXPECT_EQ(b.at(0).a, 2);
  EXPECT_EQ(b.at(1).a, 3);
  EXPECT_EQ(b.at(2).a, 4);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(Replay, SamplesDistinctUniformIndices) {
  ReplayBuffer b(10);
  for (int k = 0; k < 10; ++k) b.push({{}, k, 0.0, {}, false});
  std::mt19937_64 rng(4);
  EXPECT_THROW(b.sample_indices(11, rng), Error);
  std::vector<int> hits(10, 0);
  const int rounds = 20000;
  for (int r = 0; r < rounds; ++r) {
    const auto idx = b.sample_indices(4, rng);
    std::set<std::size_t> uniq(idx.begin(), idx.end());
    ASSERT_EQ(uniq.size(), 4u);
    for (auto i : idx) ++hits[i];
  }
  const double p = 0.4;
  for (int h : hits) EXPECT_NEAR(h, rounds * p, 5.0 * std::sqrt(rounds * p * (1 - p)));
}

TEST(HyperParamsTest, ReportsEveryViolation) {
  HyperParams hp;
  EXPECT_TRUE(hp.violations().empty());
  hp.batch_size = 0;
  hp.gamma = 1.5;
  hp.tau = 0.0;
  hp.epsilon_start = 0.5;
  hp.lr = -1;
  hp.decision_interval = 0;
  EXPECT_EQ(hp.violations().size(), 6u);
  try {
    hp.validate();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gamma"), std::string::npos);
    EXPECT_NE(msg.find("decision_interval"), std::string::npos);
  }
}

TEST(HyperParamsTest, EpsilonSchedule) {
  HyperParams hp;
  EXPECT_DOUBLE_EQ(hp.epsilon(0), 0.1);
  EXPECT_DOUBLE_EQ(hp.epsilon(hp.search_episodes - 1), 0.0);
  EXPECT_NEAR(hp.epsilon((hp.search_episodes - 1) / 2), 0.1 * (1.0 - 14.0 / 29.0), 1e-15);
  EXPECT_DOUBLE_EQ(hp.epsilon(1000), 0.0);
}

// One train_step under plain gradient descent against the update rule
// computed from finite differences of the reference loss:
//   theta' = theta - lr * dL1/dtheta             (alpha fixed)
//   alpha' = alpha - alpha_lr * d(L1 + beta L2)/dalpha  (at theta')
//   target' = (1 - tau) target + tau online'
TEST(TrainStep, SuperGraphUpdateRule) {
  std::mt19937_64 rng(5);
  auto in = gradcheck::random_instance(rng);
  const HyperParams hp = sgd_params();
  for (Tensor* t : in.graph.alpha_tensors())
    for (double& v : t->value) v *= 0.5;
  DqnAgent<SuperGraph> agent(in.graph, hp, 1);
  const auto dims = in.graph.spec().input_dims;
  const int p = in.graph.spec().output_dim;
  std::vector<Transition> batch = {make_transition(dims, rng, p - 1, -0.5, false), make_transition(dims, rng, 0, 0.25, true)};

  gradcheck::Instance ref;
  ref.graph = in.graph;
  ref.beta = hp.beta;
  for (const auto& t : batch) {
    double y = t.r;
    if (!t.done) {
      const auto qn = gradcheck::oracle_q(in.graph, t.s_next);
      y += hp.gamma * *std::max_element(qn.begin(), qn.end());
    }
    ref.batch.push_back({t.s, t.a, y});
  }
  const auto g_theta = numeric_grad(ref.graph.theta_tensors(), [&] { return gradcheck::oracle_td(ref); });
  auto theta = ref.graph.theta_tensors();
  for (std::size_t k = 0; k < theta.size(); ++k)
    for (std::size_t i = 0; i < theta[k]->size(); ++i) theta[k]->value[i] -= hp.lr * g_theta[k][i];
  const auto g_alpha = numeric_grad(ref.graph.alpha_tensors(), [&] {
    return gradcheck::oracle_loss(ref, gradcheck::Composite::kCombined);
  });
  auto alpha = ref.graph.alpha_tensors();
  for (std::size_t k = 0; k < alpha.size(); ++k)
    for (std::size_t i = 0; i < alpha[k]->size(); ++i) alpha[k]->value[i] -= hp.alpha_lr * g_alpha[k][i];

  std::vector<const Transition*> ptrs = {&batch[0], &batch[1]};
  const TrainLosses losses = agent.train_step(ptrs);

  auto got_theta = agent.online.theta_tensors();
  for (std::size_t k = 0; k < theta.size(); ++k)
    for (std::size_t i = 0; i < theta[k]->size(); ++i) ASSERT_NEAR(got_theta[k]->value[i], theta[k]->value[i], 1e-8);
  auto got_alpha = agent.online.alpha_tensors();
  for (std::size_t k = 0; k < alpha.size(); ++k)
    for (std::size_t i = 0; i < alpha[k]->size(); ++i) ASSERT_NEAR(got_alpha[k]->value[i], alpha[k]->value[i], 1e-8);

  auto target = agent.target.theta_tensors();
  auto initial = in.graph.theta_tensors();
  for (std::size_t k = 0; k < target.size(); ++k)
    for (std::size_t i = 0; i < target[k]->size(); ++i)
      ASSERT_NEAR(target[k]->value[i], 0.9 * initial[k]->value[i] + 0.1 * theta[k]->value[i], 1e-9);

  gradcheck::Instance before;
  before.graph = in.graph;
  before.batch = ref.batch;
  EXPECT_NEAR(losses.td, gradcheck::oracle_td(before), 1e-12);
  EXPECT_NEAR(losses.entropy, gradcheck::oracle_entropy(in.graph), 1e-12);
  for (Tensor* t : agent.online.theta_tensors())
    for (double g : t->grad) ASSERT_EQ(g, 0.0);
}

TEST(TrainStep, MlpUpdatesThetaOnly) {
  std::mt19937_64 rng(6);
  HyperParams hp = sgd_params();
  Mlp model({3, 4, 2}, 7);
  DqnAgent<Mlp> agent(model, hp, 1);
  std::vector<Transition> batch = {make_transition({3}, rng, 1, 0.5, false), make_transition({3}, rng, 0, -1.0, false)};
  std::vector<double> y;
  for (const auto& t : batch) {
    const auto qn = model.forward(t.s_next);
    y.push_back(t.r + hp.gamma * std::max(qn[0], qn[1]));
  }
  Mlp ref = model;
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const double d = y[k] - ref.forward(batch[k].s)[batch[k].a];
      s += d * d;
    }
    return s / 2.0;
  };
  const auto g = numeric_grad(ref.theta_tensors(), loss);
  std::vector<const Transition*> ptrs = {&batch[0], &batch[1]};
  const auto out = agent.train_step(ptrs);
  EXPECT_EQ(out.entropy, 0.0);
  auto got = agent.online.theta_tensors();
  auto base = model.theta_tensors();
  for (std::size_t k = 0; k < got.size(); ++k)
    for (std::size_t i = 0; i < got[k]->size(); ++i)
      ASSERT_NEAR(got[k]->value[i], base[k]->value[i] - hp.lr * g[k][i], 1e-8);
}

TEST(TrainStep, WaitsForAFullBatch) {
  std::mt19937_64 rng(8);
  HyperParams hp = sgd_params();
  DqnAgent<Mlp> agent(Mlp({3, 2}, 1), hp, 1);
  agent.buffer.push(make_transition({3}, rng, 0, 0.0, false));
  EXPECT_FALSE(agent.maybe_train().has_value());
  agent.buffer.push(make_transition({3}, rng, 1, 0.0, false));
  EXPECT_TRUE(agent.maybe_train().has_value());
  EXPECT_THROW(agent.train_step({}), Error);
}

TEST(TrainStep, AdamAgentReducesTdLossOnFixedBatch) {
  std::mt19937_64 rng(10);
  HyperParams hp;
  hp.batch_size = 4;
  hp.lr = 1e-2;
  hp.tau = 1.0;
  hp.gamma = 0.5;
  DqnAgent<Mlp> agent(Mlp({3, 8, 2}, 3), hp, 1);
  std::vector<Transition> batch;
  for (int k = 0; k < 4; ++k) batch.push_back(make_transition({3}, rng, k % 2, k * 0.25 - 0.5, true));
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  const double first = agent.train_step(ptrs).td;
  double last = first;
  for (int k = 0; k < 300; ++k) last = agent.train_step(ptrs).td;
  EXPECT_LT(last, 0.01 * first);
}
