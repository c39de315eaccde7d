// Command-line front end. Exit codes: 0 pass, 1 error, 2 acceptance-check failure.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tinylight/tinylight.hpp"

namespace fs = std::filesystem;
using namespace tinylight;

namespace {

void print_summary(const RunSummary& s, const std::string& out) {
  std::cout << s.model << " over " << s.per_seed.size() << " seed(s)\n";
  for (const auto& r : s.per_seed) {
    const auto& m = r.result.metrics;
    std::cout << "  seed " << r.seed << ": travel time "
              << (m.avg_travel_time ? format_fixed(*m.avg_travel_time, 2) : std::string("n/a")) << " s/veh (all "
              << (m.avg_travel_time_all ? format_fixed(*m.avg_travel_time_all, 2) : std::string("n/a"))
              << "), throughput " << format_fixed(m.throughput, 2) << " veh/min\n";
  }
  std::cout << "  travel time " << format_stat(s.travel_time()) << " s/veh, all vehicles "
            << format_stat(s.travel_time_all()) << ", throughput " << format_stat(s.throughput()) << " veh/min\n";
  std::cout << "  outputs in " << out << "\n";
}

RunOptions run_options(const std::optional<std::uint64_t>& seed, const std::string& out) {
  RunOptions o;
  if (seed) o.seeds = std::vector<std::uint64_t>{*seed};
  if (!out.empty()) o.output_dir = out;
  o.progress = [](const std::string& s) { std::cerr << s << "\n"; };
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TinyLight traffic signal control toolkit"};
  app.require_subcommand(1);

  std::string config, out, model = "all", checkpoint, precision = "float32", prefix = "tl", source, vectors;
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  double tolerance = 1e-5;
  std::optional<double> min_agreement;
  bool csv = false, q15 = false;
  int count = 1000;
  std::uint64_t vector_seed = 1;

  auto* sim = app.add_subcommand("simulate", "run a rule-based agent over the configured seeds");
  sim->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "run only this seed");
  sim->add_option("--out", out, "output directory (overrides the config)");

  auto* train = app.add_subcommand("train", "train and evaluate a learned agent");
  train->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "run only this seed");
  train->add_option("--out", out, "output directory (overrides the config)");

  auto* report_cmd = app.add_subcommand("report", "parameter and FLOP accounting");
  report_cmd->add_option("--model", model, "built-in model name or 'all'");
  report_cmd->add_option("--checkpoint", checkpoint, "report an extracted sub-graph checkpoint instead")
      ->check(CLI::ExistingFile);
  report_cmd->add_flag("--csv", csv, "CSV instead of a table");

  auto* codegen = app.add_subcommand("codegen", "emit C source and test vectors for a sub-graph checkpoint");
  codegen->add_option("--checkpoint", checkpoint, "sub-graph checkpoint (JSON)")->required()->check(CLI::ExistingFile);
  codegen->add_option("--out", out, "output directory")->required();
  codegen->add_option("--precision", precision, "float32 or q15")->check(CLI::IsMember({"float32", "q15"}));
  codegen->add_option("--prefix", prefix, "C symbol prefix");
  codegen->add_option("--count", count, "number of test vectors")->check(CLI::NonNegativeNumber);
  codegen->add_option("--seed", vector_seed, "test-vector seed");
  codegen->add_option("--config", config, "config whose scenario supplies calibration states")->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "compile generated C on the host and check it against test vectors");
  verify->add_option("--source", source, "generated C file")->required()->check(CLI::ExistingFile);
  verify->add_option("--vectors", vectors, "test-vector file")->required()->check(CLI::ExistingFile);
  verify->add_option("--tolerance", tolerance, "max abs difference");
  verify->add_option("--min-agreement", min_agreement, "argmax agreement threshold instead of zero mismatches");
  verify->add_option("--prefix", prefix, "C symbol prefix");
  verify->add_flag("--q15", q15, "source was generated with q15 precision");

  auto* compare = app.add_subcommand("compare", "run several configs and write a comparison CSV");
  compare->add_option("--config", configs, "experiment configs")->required()->check(CLI::ExistingFile);
  compare->add_option("--seed", seed, "run only this seed");
  compare->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim || *train) {
      const ExperimentConfig c = load_config(config);
      const RunOptions o = run_options(seed, out);
      const RunSummary s = *sim ? cmd_simulate(c, o) : cmd_train(c, o);
      print_summary(s, o.output_dir.value_or(c.output_dir));
      return 0;
    }
    if (*report_cmd) {
      std::vector<ResourceReport> reports;
      if (!checkpoint.empty()) {
        const SubGraph sub = load_model<SubGraph>(read_json_file(checkpoint));
        reports.push_back(report_shape({sub.input_dims, sub.layer2_dims, sub.layer3_dims, sub.output_dim}));
      } else if (model == "all") {
        for (const auto& m : builtin_models()) reports.push_back(report(m));
      } else {
        reports.push_back(report(model));
      }
      for (std::size_t k = 0; k < reports.size(); ++k) {
        if (csv) {
          if (reports.size() > 1) std::cout << "# " << reports[k].model << "\n";
          write_report_csv(std::cout, reports[k]);
        } else {
          if (k) std::cout << "\n";
          write_report_table(std::cout, reports[k]);
        }
      }
      return 0;
    }
    if (*codegen) {
      const auto doc = read_json_file(checkpoint);
      const SubGraph sub = load_model<SubGraph>(doc);
      ExperimentConfig c;
      if (!config.empty()) c = load_config(config);
      const Scenario sc = load_experiment_scenario(c);
      const auto states = record_subgraph_states(sub, sc, doc.at("intersection").get<std::string>(), c.evaluation.duration_s);
      CodegenOptions opt;
      opt.prefix = prefix;
      opt.test_vector_count = count;
      if (precision == "q15") {
        opt.precision = Precision::kQ15;
        opt.q15 = quantize_q15(sub, states);
      }
      const GeneratedCode code = emit_c(sub, opt);
      fs::create_directories(out);
      const fs::path src = fs::path(out) / (prefix + ".c"), vec = fs::path(out) / (prefix + "_vectors.txt");
      std::ofstream(src) << code.source;
      std::ofstream(vec) << write_test_vectors(emit_test_vectors(sub, opt, vector_seed, states));
      std::ofstream(fs::path(out) / "harness.c") << harness_c_source();
      std::cout << "wrote " << src.string() << " and " << vec.string() << "\n"
                << "  " << code.weight_constants << " constants, " << with_commas(static_cast<std::int64_t>(code.static_bytes))
                << " bytes static data, " << code.buffer_bytes << " bytes activation buffers\n";
      return 0;
    }
    if (*verify) {
      HarnessOptions ho;
      ho.tolerance = tolerance;
      ho.min_agreement = min_agreement;
      ho.q15 = q15;
      ho.prefix = prefix;
      const HarnessResult r = run_harness(source, vectors, ho);
      std::cout << r.json << "\n";
      return r.pass ? 0 : 2;
    }
    if (*compare) {
      std::vector<ExperimentConfig> cs;
      for (const auto& p : configs) cs.push_back(load_config(p));
      const auto runs = cmd_compare(cs, out, run_options(seed, ""));
      write_comparison_csv(std::cout, runs);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
