// Experiment harness CLI: validate configs, run experiments, sweep one
// parameter over a list of values, and materialize the built-in presets.
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dopt/dopt.hpp"

namespace fs = std::filesystem;

namespace {

int do_validate(const std::string& config_path) {
  dopt::ExperimentConfig cfg = dopt::load_config(config_path);
  auto [graph, weights] = dopt::build_network_matrix(cfg, &std::cerr);
  const dopt::SpectralReport rep = dopt::validate_weights(weights);
  const auto deg = graph.degrees();
  int min_deg = graph.m, max_deg = 0;
  for (int d : deg) {
    min_deg = std::min(min_deg, d);
    max_deg = std::max(max_deg, d);
  }
  std::printf("network: m=%d edges=%zu degree=[%d,%d]\n", graph.m,
              graph.edges.size(), min_deg, max_deg);
  std::printf("weights: lambda_min=%.12g lambda_max=%.12g rho_mix=%.12g "
              "gershgorin_min=%.12g\n",
              rep.lambda_min, rep.lambda_max, rep.rho_mix, rep.gershgorin_min);
  std::printf("assumption check: %s\n",
              rep.passes_assumption1 ? "pass" : "FAIL");

  const auto problem = dopt::generate_sensor_fusion(
      cfg.m, cfg.d, cfg.s, cfg.lam_reg, cfg.sigma, cfg.problem_seed);
  const auto [alpha, lip] = dopt::aggregate_constants(problem.costs);
  std::printf("costs: alpha=%.12g lip=%.12g\n", alpha, lip);
  for (const auto& spec : cfg.algorithms) {
    try {
      const bool stochastic = cfg.p < 1.0 && spec.alg == dopt::Algorithm::DFBBS;
      const auto range =
          dopt::stepsize_bound(spec.alg, stochastic, rep, alpha, lip);
      std::printf("%-16s admissible stepsize: (%.12g, %.12g)", spec.label.c_str(),
                  range.lower, range.upper);
      if (spec.alg != dopt::Algorithm::DADMM && spec.alg != dopt::Algorithm::DLM) {
        const bool ok =
            spec.solver.gamma > range.lower && spec.solver.gamma < range.upper;
        std::printf("  gamma=%.12g %s", spec.solver.gamma,
                    ok ? "[inside]" : "[outside]");
      }
      std::printf("\n");
    } catch (const dopt::ConfigError& e) {
      std::printf("%-16s stepsize bound unavailable: %s\n", spec.label.c_str(),
                  e.what());
    }
  }
  return rep.passes_assumption1 ? 0 : 1;
}

int do_run(const std::string& config_path) {
  dopt::ExperimentConfig cfg = dopt::load_config(config_path);
  const auto art = dopt::run_experiment(cfg, &std::cerr);
  int failures = 0;
  for (const auto& res : art.results)
    if (res.failed) ++failures;
  std::printf("wrote %s (%zu cells, %d failed)\n", cfg.output.c_str(),
              art.results.size(), failures);
  return 0;
}

int do_sweep(const std::string& config_path, const std::string& param,
             const std::vector<std::string>& values) {
  // Re-parse the config per value with the swept key replaced textually, so
  // any key the parser accepts can be swept.
  std::ifstream in(config_path);
  if (!in.good()) throw dopt::ConfigError("cannot open " + config_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string base_text = ss.str();

  auto override_key = [&](const std::string& text, const std::string& key,
                          const std::string& value) {
    std::istringstream lines(text);
    std::ostringstream out;
    std::string line;
    bool replaced = false;
    while (std::getline(lines, line)) {
      const std::string stripped = line.substr(0, line.find('#'));
      const auto eq = stripped.find('=');
      if (eq != std::string::npos) {
        std::string k = stripped.substr(0, eq);
        k.erase(0, k.find_first_not_of(" \t"));
        k.erase(k.find_last_not_of(" \t") + 1);
        if (k == key) {
          out << key << " = " << value << "\n";
          replaced = true;
          continue;
        }
      }
      out << line << "\n";
    }
    if (!replaced) out << key << " = " << value << "\n";
    return out.str();
  };

  const dopt::ExperimentConfig base_cfg = dopt::parse_config_text(base_text);
  const std::string root = base_cfg.output;
  fs::create_directories(root);
  std::ofstream combined(fs::path(root) / "n_eps_sweep.csv");
  combined << param << ",algorithm,n_eps_mean,n_eps_std,censored,runs\n";

  for (const std::string& value : values) {
    dopt::ExperimentConfig cfg =
        dopt::parse_config_text(override_key(base_text, param, value));
    cfg.output = (fs::path(root) / (param + "=" + value)).string();
    std::printf("sweep %s = %s -> %s\n", param.c_str(), value.c_str(),
                cfg.output.c_str());
    const auto art = dopt::run_experiment(cfg, &std::cerr);
    if (cfg.epsilon > 0.0) {
      for (const auto& spec : cfg.algorithms) {
        // Censored runs (never reached epsilon) enter the mean at max_iter.
        double sum = 0.0, sum2 = 0.0;
        int n = 0, censored = 0;
        for (const auto& res : art.results) {
          if (res.label != spec.label || res.failed) continue;
          double v = res.n_eps >= 0 ? res.n_eps : cfg.max_iter;
          if (res.n_eps < 0) ++censored;
          sum += v;
          sum2 += v * v;
          ++n;
        }
        if (n == 0) continue;
        const double mean = sum / n;
        const double var = n > 1 ? (sum2 - n * mean * mean) / (n - 1) : 0.0;
        combined << value << "," << spec.label << "," << mean << ","
                 << std::sqrt(std::max(0.0, var)) << "," << censored << "," << n
                 << "\n";
      }
    }
  }
  std::printf("wrote %s\n", (fs::path(root) / "n_eps_sweep.csv").c_str());
  return 0;
}

int do_preset(const std::string& name, const std::string& out_path) {
  const auto text = dopt::preset_text(name);
  if (!text) {
    std::cerr << "unknown preset '" << name << "'; available:";
    for (const auto& n : dopt::preset_names()) std::cerr << " " << n;
    std::cerr << "\n";
    return 1;
  }
  if (out_path.empty()) {
    std::cout << *text;
  } else {
    std::ofstream out(out_path);
    if (!out.good()) throw dopt::ConfigError("cannot write " + out_path);
    out << *text;
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed consensus optimization experiment harness"};
  app.require_subcommand(1);

  std::string config_path, param, preset_name, preset_out;
  std::vector<std::string> values;

  auto* validate = app.add_subcommand("validate", "topology and stepsize report");
  validate->add_option("config", config_path, "experiment config file")->required();

  auto* runcmd = app.add_subcommand("run", "run an experiment config");
  runcmd->add_option("config", config_path, "experiment config file")->required();

  auto* sweep = app.add_subcommand("sweep", "run a config over a list of values");
  sweep->add_option("config", config_path, "experiment config file")->required();
  sweep->add_option("--param", param, "config key to sweep")->required();
  sweep->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');

  auto* preset = app.add_subcommand("preset", "write a built-in preset config");
  preset->add_option("name", preset_name, "preset name")->required();
  preset->add_option("path", preset_out, "output file (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return do_validate(config_path);
    if (runcmd->parsed()) return do_run(config_path);
    if (sweep->parsed()) return do_sweep(config_path, param, values);
    if (preset->parsed()) return do_preset(preset_name, preset_out);
  } catch (const dopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
