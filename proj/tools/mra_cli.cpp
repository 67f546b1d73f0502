// mra: generate benchmark instances, run experiments, render reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mra/benchmarks.hpp"
#include "mra/experiment.hpp"
#include "mra/report.hpp"

namespace fs = std::filesystem;
using namespace mra;

namespace {

constexpr int kConfigError = 2;
constexpr int kSolverFailure = 3;

std::string rule_dir(StepRule rule) {
  switch (rule) {
    case StepRule::tenth_over_sqrt_k: return "step_0.1_sqrt_k";
    case StepRule::one_over_sqrt_k: return "step_1_sqrt_k";
    case StepRule::one_over_k: return "step_1_k";
    case StepRule::ten_over_k: return "step_10_k";
  }
  return "step";
}

int cmd_gen(const std::string& family, std::uint64_t seed, const std::string& params,
            const std::string& out) {
  nlohmann::json p = nlohmann::json::object();
  if (!params.empty()) {
    try {
      p = nlohmann::json::parse(params);
    } catch (const nlohmann::json::parse_error& e) {
      std::cerr << "error: --params: " << e.what() << '\n';
      return kConfigError;
    }
  }
  Instance inst;
  try {
    inst = generate(generator_for_family(family), seed, p);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  inst.reference = reference_solve(inst);
  save_instance(inst, out);
  std::printf("%s seed %llu: %d agents, %d coupling rows, f* = %.10g\n", inst.generator.c_str(),
              static_cast<unsigned long long>(seed), inst.num_agents(), inst.coupling.rows(),
              inst.reference->f_star);
  return 0;
}

// Runs one experiment, streaming the log so a failure leaves a partial file.
ExperimentResult run_one(const ExperimentConfig& cfg, const Instance& inst, const fs::path& dir) {
  std::ofstream log;
  if (!dir.empty()) {
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << to_json(cfg).dump(2) << '\n';
    log.open(dir / "log.csv");
    if (!log) throw std::runtime_error("cannot write " + (dir / "log.csv").string());
    write_csv_header(log, cfg.feasibility_threshold);
    log.flush();
  }
  ExperimentResult res = run_experiment(cfg, inst, [&](const IterationView& v) {
    if (log.is_open()) {
      write_csv_row(log, v.record);
      log.flush();
    }
  });
  const Summary s = summarize(res.records, cfg.feasibility_threshold);
  if (!dir.empty()) {
    std::ofstream(dir / "summary.txt") << summary_text(s);
    if (!res.records.empty()) std::ofstream(dir / "plot.svg") << render_svg(res.records, s);
  }
  return res;
}

int cmd_run(const std::string& config_path, bool sweep_flag) {
  ExperimentConfig cfg;
  Instance inst;
  try {
    cfg = load_config(config_path);
    if (sweep_flag) {
      cfg.sweep_steps = true;
      cfg.method = Method::subgradient;
      cfg.validate();
    }
    inst = prepare_instance(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const fs::path out = cfg.output;
  if (!cfg.sweep_steps) {
    const ExperimentResult res = run_one(cfg, inst, out);
    std::cout << summary_text(summarize(res.records, cfg.feasibility_threshold));
    std::cout << "stopped: " << res.stop_reason << '\n';
    return 0;
  }
  std::vector<ExperimentResult> runs;
  std::string table;
  for (StepRule rule : kAllStepRules) {
    ExperimentConfig c = cfg;
    c.sweep_steps = false;
    c.step_rule = rule;
    runs.push_back(run_one(c, inst, out.empty() ? out : out / rule_dir(rule)));
    const auto& recs = runs.back().records;
    char line[128];
    if (recs.empty()) {
      std::snprintf(line, sizeof(line), "%-12s no iterations\n", to_string(rule));
    } else {
      std::snprintf(line, sizeof(line), "%-12s final raw r_p %.6g\n", to_string(rule),
                    recs.back().at(TrackedPoint::raw).rp);
    }
    table += line;
  }
  const int selected = select_step_rule(runs);
  table += std::string("selected: ") + to_string(kAllStepRules[selected]) + '\n';
  std::cout << table;
  if (!out.empty()) std::ofstream(out / "sweep.txt") << table;
  return 0;
}

int cmd_report(const std::string& log_path, const std::string& out) {
  const Log log = read_csv(log_path);
  write_report(log, out);
  std::cout << summary_text(summarize(log.records, log.feasibility_threshold));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual decomposition with multiple-response agents"};
  app.require_subcommand(1);

  std::string family, params, out_file;
  std::uint64_t seed = 0;
  CLI::App* gen = app.add_subcommand("gen", "Generate a benchmark instance with its reference solution");
  gen->add_option("--family", family, "ra, assign, mcf or ship")->required();
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--params", params, "Generator parameters as a JSON object");
  gen->add_option("--out", out_file, "Instance JSON to write")->required();

  std::string config;
  bool sweep = false;
  CLI::App* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config, "Experiment config")->required();
  run->add_flag("--sweep-steps", sweep, "Run all four subgradient step rules");

  std::string log_path, out_dir;
  CLI::App* report = app.add_subcommand("report", "Render plot and summary from a log");
  report->add_option("--log", log_path, "log.csv from a run")->required();
  report->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*gen) return cmd_gen(family, seed, params, out_file);
    if (*run) return cmd_run(config, sweep);
    if (*report) return cmd_report(log_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolverFailure;
  }
  return 0;
}
