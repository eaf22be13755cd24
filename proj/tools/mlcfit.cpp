// mlcfit: fit multilevel latent class models with covariates, select class
// numbers, and run the Monte Carlo study. Exit codes: 0 success, 1 bad
// usage/input, 2 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mlc/csv.hpp"
#include "mlc/estimators.hpp"
#include "mlc/init.hpp"
#include "mlc/report.hpp"
#include "mlc/selection.hpp"
#include "mlc/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string command;
  std::string input;
  std::string out_dir = ".";
  std::string group_col;
  std::string items;
  std::string covariates;
  std::string method = "two_step";
  std::string estimators = "all";
  std::string conditions = "1";
  std::string t_range, m_range;
  unsigned T = 0, M = 0;
  int replicates = 10;
  int workers = 1;
  std::uint64_t seed = 1;
  int max_iter = 1000;
  double tol = 1e-8;
  int starts = -1;  // auto: 10 for fit/select, 1 for simulate
};

std::vector<int> parse_condition_list(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    if (piece.empty()) continue;
    const auto dash = piece.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoi(piece));
    } else {
      const int a = std::stoi(piece.substr(0, dash));
      const int b = std::stoi(piece.substr(dash + 1));
      for (int i = a; i <= b; ++i) out.push_back(i);
    }
  }
  if (out.empty()) throw mlc::DataError("empty condition list");
  return out;
}

std::vector<arma::uword> parse_range(const std::string& spec) {
  std::vector<arma::uword> out;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const unsigned long a = std::stoul(spec.substr(0, dots));
    const unsigned long b = std::stoul(spec.substr(dots + 2));
    for (unsigned long i = a; i <= b; ++i) out.push_back(i);
  } else {
    std::stringstream ss(spec);
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty()) out.push_back(std::stoul(piece));
  }
  if (out.empty()) throw mlc::DataError("empty range '" + spec + "'");
  return out;
}

std::vector<mlc::Method> parse_estimators(const std::string& spec) {
  if (spec == "all")
    return {mlc::Method::one_step, mlc::Method::two_step,
            mlc::Method::two_stage};
  std::vector<mlc::Method> out;
  std::stringstream ss(spec);
  std::string piece;
  while (std::getline(ss, piece, ','))
    if (!piece.empty()) out.push_back(mlc::method_from_string(piece));
  if (out.empty()) throw mlc::DataError("empty estimator list");
  return out;
}

mlc::EmControl control_of(const Options& opt, int default_starts) {
  mlc::EmControl ctrl;
  ctrl.max_iter = opt.max_iter;
  ctrl.tol = opt.tol;
  ctrl.n_starts = opt.starts >= 0 ? opt.starts : default_starts;
  ctrl.seed = opt.seed;
  ctrl.n_threads = opt.workers;
  return ctrl;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw mlc::DataError("cannot write '" + path.string() + "'");
  out << contents;
}

json options_json(const Options& opt) {
  return json{{"command", opt.command},
              {"input", opt.input},
              {"out", opt.out_dir},
              {"group_col", opt.group_col},
              {"items", opt.items},
              {"covariates", opt.covariates},
              {"method", opt.method},
              {"estimators", opt.estimators},
              {"conditions", opt.conditions},
              {"T", opt.T},
              {"M", opt.M},
              {"T_range", opt.t_range},
              {"M_range", opt.m_range},
              {"replicates", opt.replicates},
              {"workers", opt.workers},
              {"seed", opt.seed},
              {"max_iter", opt.max_iter},
              {"tol", opt.tol},
              {"starts", opt.starts}};
}

mlc::Dataset load_dataset(const Options& opt, mlc::WarningLog* warnings) {
  if (opt.input.empty()) throw mlc::DataError("--input is required");
  if (opt.group_col.empty()) throw mlc::DataError("--group-col is required");
  mlc::CsvSpec spec;
  spec.group_col = opt.group_col;
  spec.item_cols = mlc::expand_column_spec(opt.items);
  spec.covariate_cols = mlc::expand_column_spec(opt.covariates);
  mlc::Dataset data = mlc::parse_csv(opt.input, spec, warnings);
  std::cerr << "read " << data.n_units() << " units in " << data.n_groups()
            << " groups, " << data.n_items() << " items, "
            << data.n_covariates() << " design columns (incl. intercept)\n";
  return data;
}

int cmd_fit(const Options& opt) {
  mlc::WarningLog warnings;
  const mlc::Dataset data = load_dataset(opt, &warnings);
  if (opt.T < 1 || opt.M < 1)
    throw mlc::DataError("--T and --M are required for fit");
  const mlc::ModelDims dims = data.dims(opt.T, opt.M);
  const mlc::EmControl ctrl = control_of(opt, 10);

  const std::vector<mlc::Method> methods =
      opt.method == "all" ? parse_estimators("all")
                          : std::vector<mlc::Method>{
                                mlc::method_from_string(opt.method)};

  std::vector<mlc::FitResult> fits;
  for (const mlc::Method m : methods) {
    std::cerr << "fitting " << mlc::to_string(m) << "...\n";
    fits.push_back(mlc::fit(m, data, dims, ctrl));
  }

  fs::create_directories(opt.out_dir);
  std::vector<std::string> cov_names{"intercept"};
  for (const auto& c : mlc::expand_column_spec(opt.covariates))
    cov_names.push_back(c);

  {
    std::ofstream os(fs::path(opt.out_dir) / "coefficients.csv");
    mlc::write_coefficients_csv(fits, cov_names, os);
  }
  {
    std::ofstream os(fs::path(opt.out_dir) / "coefficients.txt");
    mlc::write_coefficients_table(fits, cov_names, os);
  }
  // posterior exports come from the two-step fit when it was requested
  const mlc::FitResult* post_fit = &fits.front();
  for (const auto& f : fits)
    if (f.method == mlc::Method::two_step) post_fit = &f;
  {
    std::ofstream os(fs::path(opt.out_dir) / "posteriors_units.csv");
    mlc::write_unit_posteriors_csv(data, *post_fit, os);
  }
  {
    std::ofstream os(fs::path(opt.out_dir) / "posteriors_groups.csv");
    mlc::write_group_posteriors_csv(data, *post_fit, os);
  }

  bool all_converged = true;
  json manifest;
  manifest["version"] = mlc::kVersion;
  manifest["config"] = options_json(opt);
  manifest["warnings"] = warnings;
  for (const auto& fit : fits) {
    json jfit;
    jfit["loglik"] = fit.loglik;
    jfit["converged"] = fit.converged;
    jfit["covariance"] = mlc::to_string(fit.cov_tag);
    jfit["entropy_r2_low"] = mlc::entropy_r2(fit.post, mlc::Level::low);
    jfit["entropy_r2_high"] = mlc::entropy_r2(fit.post, mlc::Level::high);
    jfit["warnings"] = fit.warnings;
    for (const auto& phase : fit.phases) {
      jfit["phases"].push_back(json{{"name", phase.name},
                                    {"n_iter", phase.n_iter},
                                    {"elapsed_s", phase.elapsed},
                                    {"converged", phase.converged}});
    }
    jfit["total_iterations"] = fit.total_iterations();
    jfit["total_elapsed_s"] = fit.total_elapsed();
    manifest["fits"][mlc::to_string(fit.method)] = std::move(jfit);
    all_converged = all_converged && fit.converged;
  }
  manifest["converged"] = all_converged;
  write_file(fs::path(opt.out_dir) / "manifest.json", manifest.dump(2) + "\n");

  if (!all_converged) {
    std::cerr << "warning: at least one fit did not converge; outputs are "
                 "partial\n";
    return 2;
  }
  return 0;
}

int cmd_select(const Options& opt) {
  mlc::WarningLog warnings;
  const mlc::Dataset data = load_dataset(opt, &warnings);
  if (opt.t_range.empty() || opt.m_range.empty())
    throw mlc::DataError("--T-range and --M-range are required for select");
  const mlc::EmControl ctrl = control_of(opt, 10);

  mlc::SelectionTable table =
      mlc::hierarchical_select(data, parse_range(opt.t_range),
                               parse_range(opt.m_range), ctrl, opt.workers);

  fs::create_directories(opt.out_dir);
  {
    std::ofstream os(fs::path(opt.out_dir) / "selection.csv");
    mlc::write_selection_csv(table, os);
  }
  json manifest;
  manifest["version"] = mlc::kVersion;
  manifest["config"] = options_json(opt);
  manifest["chosen_T"] = table.chosen_T;
  manifest["chosen_M"] = table.chosen_M;
  manifest["phase1_T"] = table.phase1_T;
  manifest["warnings"] = table.warnings;
  write_file(fs::path(opt.out_dir) / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "chosen T=" << table.chosen_T << " M=" << table.chosen_M
            << "\n";
  return 0;
}

int cmd_simulate(const Options& opt) {
  const std::vector<int> conditions = parse_condition_list(opt.conditions);
  for (const int c : conditions)
    if (c < 1 || c > 36)
      throw mlc::DataError("condition " + std::to_string(c) +
                           " outside 1..36");
  const std::vector<mlc::Method> estimators = parse_estimators(opt.estimators);

  mlc::EmControl ctrl = mlc::study_defaults();
  ctrl.tol = opt.tol;
  if (opt.starts >= 0) ctrl.n_starts = opt.starts;
  const mlc::StudyMetrics study = mlc::run_study(
      conditions, opt.replicates, estimators, opt.seed, opt.workers, ctrl);

  fs::create_directories(opt.out_dir);
  {
    std::ofstream os(fs::path(opt.out_dir) / "replicates.csv");
    mlc::write_replicates_csv(study, os);
  }
  {
    std::ofstream os(fs::path(opt.out_dir) / "metrics.csv");
    mlc::write_metrics_csv(study, os);
  }
  {
    std::ofstream os(fs::path(opt.out_dir) / "metrics_long.csv");
    mlc::write_metrics_long_csv(study, os);
  }
  json manifest;
  manifest["version"] = mlc::kVersion;
  manifest["config"] = options_json(opt);
  int n_failed = 0;
  for (const auto& rec : study.replicates)
    if (!rec.ok) ++n_failed;
  manifest["n_records"] = study.replicates.size();
  manifest["n_failed"] = n_failed;
  write_file(fs::path(opt.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

// Config file support: a flat JSON object whose keys mirror the long flags;
// command-line flags override file values.
std::vector<std::string> config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mlc::DataError("cannot open config file '" + path + "'");
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw mlc::DataError("bad config file: " + std::string(e.what()));
  }
  if (!cfg.is_object()) throw mlc::DataError("config must be a JSON object");

  static const std::vector<std::string> known = {
      "input",      "out",     "group-col", "items",   "covariates",
      "method",     "estimators", "conditions", "T",   "M",
      "T-range",    "M-range", "replicates", "workers", "seed",
      "max-iter",   "tol",     "starts"};
  std::vector<std::string> args;
  for (const auto& [key, value] : cfg.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw mlc::DataError("unknown config key '" + key + "'");
    std::string v;
    if (value.is_string())
      v = value.get<std::string>();
    else
      v = value.dump();
    args.push_back("--" + key + "=" + v);
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"multilevel latent class models with covariates"};
  app.require_subcommand(1);

  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags override)");
    cmd->add_option("--out", opt.out_dir, "output directory")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--seed", opt.seed, "RNG seed")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--workers", opt.workers, "worker threads")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--max-iter", opt.max_iter, "EM iteration cap")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--tol", opt.tol, "relative log-likelihood tolerance")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--starts", opt.starts,
                    "extra random starts (default 10; 1 for simulate)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  };
  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--input", opt.input, "input CSV")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--group-col", opt.group_col, "group id column")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--items", opt.items, "item columns (a,b or y1..y10)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--covariates", opt.covariates, "covariate columns")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model to a CSV");
  add_common(fit_cmd);
  add_data(fit_cmd);
  fit_cmd->add_option("--T", opt.T, "low-level classes")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  fit_cmd->add_option("--M", opt.M, "high-level classes")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  fit_cmd
      ->add_option("--method", opt.method,
                   "one_step | two_step | two_stage | all")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  CLI::App* select_cmd =
      app.add_subcommand("select", "choose the numbers of classes");
  add_common(select_cmd);
  add_data(select_cmd);
  select_cmd->add_option("--T-range", opt.t_range, "e.g. 1..6")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  select_cmd->add_option("--M-range", opt.m_range, "e.g. 1..4")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "run the Monte Carlo study");
  add_common(sim_cmd);
  sim_cmd->add_option("--conditions", opt.conditions, "e.g. 1-36 or 1,19,36")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  sim_cmd->add_option("--replicates", opt.replicates, "replicates per condition")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  sim_cmd
      ->add_option("--estimators", opt.estimators,
                   "all or comma list of one_step,two_step,two_stage")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  try {
    // pre-scan for --config so file values come first and flags override
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string value;
      if (args[i].rfind("--config=", 0) == 0)
        value = args[i].substr(9);
      else if (args[i] == "--config" && i + 1 < args.size())
        value = args[i + 1];
      if (!value.empty()) {
        const std::vector<std::string> extra = config_args(value);
        args.insert(args.begin() + 1, extra.begin(), extra.end());
        break;
      }
    }
    std::vector<const char*> cargv{argv[0]};
    for (const auto& a : args) cargv.push_back(a.c_str());
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const mlc::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (fit_cmd->parsed()) {
      opt.command = "fit";
      return cmd_fit(opt);
    }
    if (select_cmd->parsed()) {
      opt.command = "select";
      return cmd_select(opt);
    }
    opt.command = "simulate";
    return cmd_simulate(opt);
  } catch (const mlc::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mlc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
