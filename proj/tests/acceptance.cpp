// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails. `acceptance <name>...` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "tinylight/tinylight.hpp"

using namespace tinylight;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kRatioTol = 0.01;
constexpr double kResourceSeconds = 1.0;
constexpr std::size_t kStaticBytes = 4004;
constexpr std::size_t kStaticLimit = 32768;
constexpr std::size_t kBufferLimit = 2048;
constexpr int kEntropyInits = 50;
constexpr int kEntropySteps = 2000;
constexpr double kEntropyTarget = 0.99;
constexpr double kEntropySeconds = 10.0;
constexpr int kAlphaStates = 1000;
constexpr int kGradInstances = 100;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kBehaviorSeconds = 300.0;
constexpr double kMaxPressureSlack = 1.15;
constexpr std::uint64_t kFirstBehaviorSeed = 101;
constexpr int kBehaviorSeeds = 10;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("tinylight-acceptance-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Outcome resource_goldens() {
  const auto t0 = Clock::now();
  struct Item {
    const char* description;
    std::int64_t params, flops;
  };
  struct Golden {
    const char* model;
    std::vector<Item> rows;
    std::int64_t params, flops;
  };
  const std::vector<Item> frap = {{"Phase embedding", 8, 20},
                                  {"Vehicle embedding", 8, 20},
                                  {"Lane-link embedding", 144, 304},
                                  {"Relationship embedding", 8, 20},
                                  {"Pair of phases", 660, 93600},
                                  {"Competition mask", 100, 12960},
                                  {"Q layer 1 to layer 2", 420, 61920},
                                  {"Q layer 2 to layer 3", 21, 2952},
                                  {"Phase-based aggregation", 0, 10368},
                                  {"Mask over cube", 0, 1440},
                                  {"Summation over phase", 0, 72}};
  const std::vector<Golden> golden = {
      {"TinyLight",
       {{"Feature 1 to layer 2", 234, 486},
        {"Feature 2 to layer 2", 198, 378},
        {"Element-wise sum on layer 2", 0, 18},
        {"Layer 2 to layer 3", 380, 780},
        {"Layer 3 to output layer", 189, 369}},
       1001, 2031},
      {"EcoLight",
       {{"Layer 1 to layer 2", 30, 70}, {"Layer 2 to layer 3", 110, 230}, {"Layer 3 to output layer", 22, 42}},
       162, 342},
      {"FRAP", frap, 1369, 183676},
      {"MPLight", frap, 1369, 183676},
      {"CoLight",
       {{"Embedding layer 1 to layer 2", 1088, 2208},
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
        {"Q layer 2 to layer 3", 297, 585}},
       19337, 102996},
  };
  Outcome o;
  std::ostringstream d;
  int rows = 0;
  for (const auto& g : golden) {
    const ResourceReport r = report(g.model);
    const Cost t = r.total();
    if (t.params != g.params || t.flops != g.flops) {
      o.pass = false;
      d << g.model << " total " << t.params << "/" << t.flops << "; ";
    }
    if (r.items.size() != g.rows.size()) {
      o.pass = false;
      d << g.model << " has " << r.items.size() << " rows; ";
      continue;
    }
    for (std::size_t k = 0; k < g.rows.size(); ++k, ++rows) {
      const Cost c = r.items[k].total();
      if (r.items[k].description != g.rows[k].description || c.params != g.rows[k].params ||
          c.flops != g.rows[k].flops) {
        o.pass = false;
        d << g.model << " row '" << r.items[k].description << "' " << c.params << "/" << c.flops << "; ";
      }
    }
  }
  const double s = seconds_since(t0);
  if (s >= kResourceSeconds) o.pass = false;
  d << rows << " rows; TinyLight 1,001/2,031, EcoLight 162/342, FRAP=MPLight 1,369/183,676, CoLight 19,337/102,996; "
    << fmt("%.3f", s) << " s";
  o.detail = d.str();
  return o;
}

Outcome resource_ratios() {
  const Cost tl = report("TinyLight").total(), co = report("CoLight").total(), fr = report("FRAP").total();
  const double p = static_cast<double>(co.params) / static_cast<double>(tl.params);
  const double f = static_cast<double>(fr.flops) / static_cast<double>(tl.flops);
  return {std::abs(p - 19.32) <= kRatioTol && std::abs(f - 90.43) <= kRatioTol,
          "CoLight/TinyLight params " + fmt("%.4f", p) + ", FRAP/TinyLight FLOPs " + fmt("%.4f", f)};
}

Outcome footprint() {
  Outcome o;
  const auto ref = emit_c(make_subgraph({12, 10}, 18, 20, 9, 1));
  // Largest sub-graph the default spec can yield with two inputs.
  const Scenario sc = make_desk_scenario();
  Simulator sim(sc);
  const auto spec = default_spec(sim.network(), sim.signalized()[0]);
  auto dims = spec.input_dims;
  std::sort(dims.rbegin(), dims.rend());
  const int d2 = *std::max_element(spec.layer2_dims.begin(), spec.layer2_dims.end());
  const int d3 = *std::max_element(spec.layer3_dims.begin(), spec.layer3_dims.end());
  const auto worst = emit_c(make_subgraph({dims[0], dims[1]}, d2, d3, spec.output_dim, 1));
  // A sub-graph extracted from the default super-graph.
  const auto extracted = emit_c(extract(SuperGraph(spec, 1)));
  o.pass = ref.static_bytes == kStaticBytes && ref.static_bytes <= kStaticLimit && worst.static_bytes <= kStaticLimit &&
           extracted.static_bytes <= kStaticLimit && ref.buffer_bytes <= kBufferLimit &&
           worst.buffer_bytes <= kBufferLimit && extracted.buffer_bytes <= kBufferLimit;
  o.detail = "reference " + std::to_string(ref.static_bytes) + " B static / " + std::to_string(ref.buffer_bytes) +
             " B buffers; extracted " + std::to_string(extracted.static_bytes) + " / " +
             std::to_string(extracted.buffer_bytes) + "; largest default-spec sub-graph " +
             std::to_string(worst.static_bytes) + " / " + std::to_string(worst.buffer_bytes);
  return o;
}

Outcome entropy_property() {
  const auto t0 = Clock::now();
  const Scenario sc = make_desk_scenario();
  Simulator sim(sc);
  SuperGraph g(default_spec(sim.network(), sim.signalized()[0]), 1);
  HyperParams hp;
  Outcome o;
  int worst_steps = 0;
  double worst_alpha = 1.0;
  for (int seed = 0; seed < kEntropyInits; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    // Spread from nearly uniform to strongly peaked starting points.
    const double sigma = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 0.5)(rng));
    std::normal_distribution<double> n(0.0, sigma);
    for (Tensor* t : g.alpha_tensors())
      for (double& v : t->value) v = n(rng);
    OptimizerState opt;
    opt.config = {hp.alpha_lr, 0.9, 0.999, 1e-8, false};
    auto min_max_alpha = [&] {
      double m = 1.0;
      for (int l = 0; l < 3; ++l) {
        const auto a = g.alpha(l);
        m = std::min(m, *std::max_element(a.begin(), a.end()));
      }
      return m;
    };
    int step = 0;
    Tape tape;
    auto alpha = g.alpha_tensors();
    while (min_max_alpha() < kEntropyTarget && step < kEntropySteps) {
      tape.clear();
      tape.backward(g.record_entropy(tape));
      opt_step(alpha, opt);
      ++step;
    }
    const double m = min_max_alpha();
    worst_alpha = std::min(worst_alpha, m);
    worst_steps = std::max(worst_steps, step);
    if (m < kEntropyTarget) o.pass = false;
  }
  const double s = seconds_since(t0);
  if (s >= kEntropySeconds) o.pass = false;
  o.detail = std::to_string(kEntropyInits) + " inits, worst min-layer max alpha " + fmt("%.4f", worst_alpha) +
             ", slowest " + std::to_string(worst_steps) + " steps, " + fmt("%.2f", s) + " s";
  return o;
}

// Structure checked directly against the super-graph: selected components,
// edge shapes and folded weights.
bool path_is_connected(const SuperGraph& g, const SubGraph& sub, const std::array<int, 3>& keep) {
  const auto& spec = g.spec();
  std::array<std::vector<int>, 3> want;
  for (int l = 0; l < 3; ++l) {
    const auto a = g.alpha(l);
    std::vector<int> idx(a.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) { return a[x] > a[y]; });
    want[l].assign(idx.begin(), idx.begin() + keep[l]);
    std::sort(want[l].begin(), want[l].end());
  }
  if (sub.feature_slots != want[0] || sub.layer2_blocks != want[1] || sub.layer3_blocks != want[2]) return false;
  if (sub.edges1.size() != want[0].size() || sub.edges2.size() != want[1].size() || sub.head.size() != want[2].size())
    return false;
  for (std::size_t i = 0; i < want[0].size(); ++i) {
    if (sub.edges1[i].size() != want[1].size()) return false;
    for (std::size_t j = 0; j < want[1].size(); ++j)
      if (sub.edges1[i][j].fin() != static_cast<std::size_t>(spec.input_dims[want[0][i]]) ||
          sub.edges1[i][j].fout() != static_cast<std::size_t>(spec.layer2_dims[want[1][j]]))
        return false;
  }
  for (std::size_t j = 0; j < want[1].size(); ++j) {
    if (sub.edges2[j].size() != want[2].size()) return false;
    for (std::size_t k = 0; k < want[2].size(); ++k)
      if (sub.edges2[j][k].fin() != static_cast<std::size_t>(spec.layer2_dims[want[1][j]]) ||
          sub.edges2[j][k].fout() != static_cast<std::size_t>(spec.layer3_dims[want[2][k]]))
        return false;
  }
  for (std::size_t k = 0; k < want[2].size(); ++k)
    if (sub.head[k].fin() != static_cast<std::size_t>(spec.layer3_dims[want[2][k]]) ||
        sub.head[k].fout() != static_cast<std::size_t>(spec.output_dim))
      return false;
  return sub.connected();
}

Outcome extraction_property() {
  const Scenario sc = make_desk_scenario();
  Simulator sim(sc);
  const auto spec = default_spec(sim.network(), sim.signalized()[0]);
  SuperGraph g(spec, 2);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  Outcome o;
  int failures = 0;
  const auto sizes = spec.layer_sizes();
  for (int k = 0; k < kAlphaStates; ++k) {
    // Mix of generic, tied and extreme logits.
    const int mode = k % 4;
    const double scale = mode == 3 ? 50.0 : 3.0;
    for (Tensor* t : g.alpha_tensors())
      for (double& v : t->value) v = mode == 1 ? std::round(n(rng)) : mode == 2 ? 0.0 : scale * n(rng);
    std::array<int, 3> keep{2, 1, 1};
    if (k % 5 == 4)
      for (int l = 0; l < 3; ++l) keep[l] = std::uniform_int_distribution<int>(1, static_cast<int>(sizes[l]))(rng);
    const SubGraph sub = extract(g, keep);
    std::vector<std::vector<double>> x;
    for (int d : sub.input_dims) x.emplace_back(d, 0.5);
    const auto q = sub.forward_inputs(x);
    const bool finite = std::all_of(q.begin(), q.end(), [](double v) { return std::isfinite(v); });
    if (!path_is_connected(g, sub, keep) || !finite || q.size() != static_cast<std::size_t>(spec.output_dim)) ++failures;
  }
  o.pass = failures == 0;
  o.detail = std::to_string(kAlphaStates) + " alpha states, " + std::to_string(failures) + " without an input-output path";
  return o;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  Outcome o;
  std::ostringstream d;
  for (auto c : {gradcheck::Composite::kTd, gradcheck::Composite::kEntropy, gradcheck::Composite::kCombined}) {
    double theta = 0.0, alpha = 0.0;
    for (int k = 0; k < kGradInstances; ++k) {
      auto in = gradcheck::random_instance(rng);
      const auto r = gradcheck::check(in, c, kGradStep);
      theta = std::max(theta, r.theta.rel);
      alpha = std::max(alpha, r.alpha.rel);
    }
    if (theta > kGradTol || alpha > kGradTol) o.pass = false;
    d << gradcheck::name(c) << " theta " << fmt("%.2e", theta) << " alpha " << fmt("%.2e", alpha) << "; ";
  }
  d << kGradInstances << " instances each, " << fmt("%.1f", seconds_since(t0)) << " s";
  o.detail = d.str();
  return o;
}

ExperimentConfig behavior_config(const std::string& kind) {
  ExperimentConfig c;
  c.name = kind;
  c.agent.kind = kind;
  c.seeds.clear();
  for (int k = 0; k < kBehaviorSeeds; ++k) c.seeds.push_back(kFirstBehaviorSeed + k);
  return c;
}

Outcome behavioral_ordering() {
  const auto t0 = Clock::now();
  const fs::path dir = scratch("behavior");
  std::vector<RunSummary> runs;
  for (const char* kind : {"FixedTime", "MaxPressure", "TinyLight", "TLRP"}) {
    RunOptions opt;
    opt.output_dir = (dir / kind).string();
    runs.push_back(run_experiment(behavior_config(kind), "acceptance", opt));
    std::printf("  %-11s travel time %s s (finished only %s s), %.1f s elapsed\n", kind,
                format_stat(runs.back().travel_time_all()).c_str(), format_stat(runs.back().travel_time()).c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  const double ft = runs[0].travel_time_all().mean, mp = runs[1].travel_time_all().mean,
               tl = runs[2].travel_time_all().mean, rp = runs[3].travel_time_all().mean;
  const double s = seconds_since(t0);
  Outcome o;
  o.pass = mp < ft && tl <= ft && tl <= kMaxPressureSlack * mp && rp >= tl && s < kBehaviorSeconds;
  o.detail = "FixedTime " + fmt("%.2f", ft) + ", MaxPressure " + fmt("%.2f", mp) + ", TinyLight " + fmt("%.2f", tl) +
             " (" + fmt("%.3f", tl / mp) + "x MaxPressure), TLRP " + fmt("%.2f", rp) + "; " + fmt("%.1f", s) + " s";
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  ExperimentConfig learned = behavior_config("TinyLight");
  learned.name = "tinylight-short";
  learned.seeds = {7};
  learned.hyper_params.search_episodes = 3;
  learned.hyper_params.refine_episodes = 2;
  learned.hyper_params.episode_seconds = 300;
  learned.hyper_params.refine_episode_seconds = 600;
  learned.evaluation.duration_s = 1200;
  ExperimentConfig rule = behavior_config("MaxPressure");
  rule.seeds = {7};
  Outcome o;
  int files = 0;
  for (const auto& c : {rule, learned}) {
    std::array<fs::path, 2> dirs;
    for (int run = 0; run < 2; ++run) {
      dirs[run] = scratch("determinism-" + c.name + "-" + std::to_string(run));
      RunOptions opt;
      opt.output_dir = dirs[run].string();
      run_experiment(c, "acceptance", opt);
    }
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
      if (e.path().extension() != ".csv") continue;
      const fs::path other = dirs[1] / fs::relative(e.path(), dirs[0]);
      ++files;
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
        o.pass = false;
        o.detail += "differs: " + fs::relative(e.path(), dirs[0]).string() + "; ";
      }
    }
  }
  if (files == 0) o.pass = false;
  o.detail += std::to_string(files) + " metric CSV files compared across two runs (MaxPressure, short TinyLight)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"resource-goldens", resource_goldens}, {"resource-ratios", resource_ratios},
      {"footprint", footprint},               {"entropy-property", entropy_property},
      {"extraction-property", extraction_property}, {"gradient-suite", gradient_suite},
      {"behavioral-ordering", behavioral_ordering}, {"determinism", determinism},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed ? 1 : 0;
}
