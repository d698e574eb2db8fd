#pragma once

// Command-line front end. run_cli() returns the process exit status:
//   0 success, 2 malformed config or arguments, 3 numeric failure, 4 I/O failure.
//
// Relative paths in the [data] section are resolved against the directory of
// the config file.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ewishart/config.hpp"
#include "ewishart/error.hpp"
#include "ewishart/estimation.hpp"
#include "ewishart/experiments.hpp"
#include "ewishart/io.hpp"
#include "ewishart/learning.hpp"
#include "ewishart/model.hpp"

namespace ewishart {

namespace cli {

namespace fs = std::filesystem;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> algorithm;
  bool fast = false;
  std::optional<int> threads;
};

struct Context {
  ExperimentConfig config;
  fs::path config_dir;
  fs::path out;
  std::ostream& log;

  fs::path data_path(const std::string& value, const char* key) const {
    if (value.empty()) throw ConfigError(std::string("config: [data] ") + key + " is required for this command");
    const fs::path p(value);
    return p.is_absolute() ? p : config_dir / p;
  }

  void write_json(const std::string& name, const nlohmann::json& j) const {
    write_text_file(out / name, j.dump(2) + "\n");
  }

  void write_config_echo() const { write_text_file(out / "config.ini", to_ini(config)); }
};

inline Context make_context(const Args& args, std::ostream& log) {
  ExperimentConfig c = load_config(args.config);
  if (args.seed) c.seed = *args.seed;
  if (args.out) c.output = *args.out;
  if (args.algorithm) {
    try {
      c.fit.algorithm = parse_algorithm(*args.algorithm);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  if (args.threads) c.threads = *args.threads;
  if (args.fast) c.repetitions = std::min(c.repetitions, 20);
  c.validate();
  const fs::path cfg(args.config);
  return Context{c, cfg.has_parent_path() ? cfg.parent_path() : fs::path("."), fs::path(c.output), log};
}

inline nlohmann::json report_json(const FitReport& r) {
  nlohmann::json j;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["termination"] = std::string(to_string(r.termination));
  j["warnings"] = r.warnings;
  if (!r.trace.empty()) {
    j["final_cost"] = r.trace.back().cost;
    j["final_grad_norm"] = r.trace.back().grad_norm;
    j["seconds"] = r.trace.back().seconds;
  }
  return j;
}

inline void cmd_sample(const Context& ctx) {
  const auto& c = ctx.config;
  const EWModel model = c.ew_model();
  Rng rng = repetition_stream(c.seed, 0, 0);
  std::vector<SpdMat> all;
  std::vector<int> labels;
  for (int z = 1; z <= c.classes; ++z) {
    const SpdMat center = random_center(c.p, c.condition_number, rng);
    const SampleSet part = sample(model, center, static_cast<std::size_t>(c.K), rng);
    all.insert(all.end(), part.begin(), part.end());
    labels.insert(labels.end(), part.size(), z);
    const std::string name = c.classes == 1 ? "center.csv" : "center_" + std::to_string(z) + ".csv";
    write_matrix_file(ctx.out / name, center.matrix());
  }
  const SampleSet data(std::move(all));
  write_sample_file(ctx.out / "samples.csv", data, c.n, c.classes > 1 ? &labels : nullptr);
  ctx.write_config_echo();
  ctx.log << "wrote " << data.size() << " samples to " << (ctx.out / "samples.csv").string() << "\n";
}

inline void cmd_fit(const Context& ctx) {
  const auto& c = ctx.config;
  const SampleFile file = read_sample_file(ctx.data_path(c.samples, "samples"));
  const EWModel model = c.ew_model(file.n, file.p);
  const FitReport r = fit(model, file.samples, c.fit);
  write_matrix_file(ctx.out / "estimate.csv", r.estimate.matrix());
  write_text_file(ctx.out / "trace.csv", trace_csv(c, r.trace));
  nlohmann::json j;
  j["config"] = config_json(c);
  j["algorithm"] = std::string(to_string(c.fit.algorithm));
  j["model"] = model.generator().name;
  j["report"] = report_json(r);
  ctx.write_json("fit.json", j);
  ctx.log << to_string(c.fit.algorithm) << ": " << r.iterations << " iterations, "
          << (r.converged ? "converged" : "not converged") << " (" << to_string(r.termination) << ")\n";
}

inline void cmd_bench_convergence(const Context& ctx) {
  const auto& c = ctx.config;
  const auto records = run_convergence_study(c);
  for (const auto& r : records) {
    const std::string name = "trace_n" + std::to_string(r.n) + "_rep" + std::to_string(r.repetition) + "_" +
                             r.estimator + ".csv";
    write_text_file(ctx.out / "traces" / name, trace_csv(c, r.trace));
  }
  write_text_file(ctx.out / "records.csv", records_csv(c, records));
  const auto rows = summarize(records);
  ctx.write_json("summary.json", summary_json(c, rows, false));
  ctx.write_config_echo();
  for (const auto& row : rows) {
    ctx.log << row.name << " n=" << row.n << ": median iterations " << row.median_iters << ", mean error "
            << row.mean_err << "\n";
  }
}

inline void cmd_bench_error(const Context& ctx) {
  const auto& c = ctx.config;
  const auto records = run_error_study(c, c.K_grid);
  write_text_file(ctx.out / "records.csv", records_csv(c, records));
  const auto rows = summarize(records);
  ctx.write_json("summary.json", summary_json(c, rows, true));
  ctx.write_config_echo();
  for (const auto& row : rows) {
    ctx.log << row.name << " K=" << row.K << ": mean error " << row.mean_err << " (sd " << row.std_err << ")\n";
  }
}

inline LabeledSampleSet labeled(const SampleFile& f, const fs::path& path, int classes) {
  if (!f.labels) throw IoError(path.string() + ": labels line is required");
  return LabeledSampleSet(f.samples, *f.labels, classes);
}

inline void cmd_classify(const Context& ctx) {
  const auto& c = ctx.config;
  const fs::path train_path = ctx.data_path(c.train, "train");
  const fs::path test_path = ctx.data_path(c.test, "test");
  const SampleFile train = read_sample_file(train_path);
  const SampleFile test = read_sample_file(test_path);
  if (train.p != test.p || train.n != test.n) throw IoError("train and test files differ in p or n");
  if (!train.labels) throw IoError(train_path.string() + ": labels line is required");
  const int classes = *std::max_element(train.labels->begin(), train.labels->end());
  const LabeledSampleSet train_set = labeled(train, train_path, classes);
  const EWModel model = c.ew_model(train.n, train.p);
  const EwdaModel ewda = ewda_train(model, train_set, c.fit);
  const Labels predicted = ewda_predict(ewda, test.samples);

  std::string csv = config_comment(c) + "index,predicted" + (test.labels ? ",truth" : "") + "\n";
  std::size_t hits = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    csv += std::to_string(k + 1) + "," + std::to_string(predicted[k]);
    if (test.labels) {
      csv += "," + std::to_string((*test.labels)[k]);
      hits += predicted[k] == (*test.labels)[k];
    }
    csv += "\n";
  }
  write_text_file(ctx.out / "predictions.csv", csv);
  nlohmann::json j;
  j["config"] = config_json(c);
  j["model"] = model.generator().name;
  j["classes"] = classes;
  j["priors"] = ewda.priors;
  if (test.labels) {
    const double acc = static_cast<double>(hits) / static_cast<double>(predicted.size());
    j["accuracy"] = acc;
    ctx.log << "test accuracy " << acc << "\n";
  }
  ctx.write_json("summary.json", j);
}

inline void cmd_cluster(const Context& ctx) {
  const auto& c = ctx.config;
  const SampleFile file = read_sample_file(ctx.data_path(c.samples, "samples"));
  const EWModel model = c.ew_model(file.n, file.p);
  KMeansOptions opts;
  opts.inits = c.inits;
  opts.label_tolerance = c.label_tolerance;
  opts.max_sweeps = c.max_sweeps;
  opts.fit = c.fit;
  Rng rng = repetition_stream(c.seed, 0, 0);
  const ClusteringResult r = ew_kmeans(model, file.samples, c.clusters, opts, rng);

  std::string labels;
  for (int y : r.labels) labels += std::to_string(y) + "\n";
  write_text_file(ctx.out / "labels.csv", labels);
  for (std::size_t z = 0; z < r.centers.size(); ++z) {
    write_matrix_file(ctx.out / ("center_" + std::to_string(z + 1) + ".csv"), r.centers[z].matrix());
  }
  nlohmann::json j;
  j["config"] = config_json(c);
  j["inertia"] = r.inertia;
  j["chosen_init"] = r.chosen_init;
  j["iterations_per_init"] = r.iterations_per_init;
  j["inertia_per_init"] = r.inertia_per_init;
  if (file.labels) {
    const int classes = std::max(c.clusters, *std::max_element(file.labels->begin(), file.labels->end()));
    const Alignment a = align_labels(r.labels, *file.labels, classes);
    j["accuracy"] = a.accuracy;
    j["miou"] = a.miou;
    j["permutation"] = a.permutation;
    ctx.log << "accuracy " << a.accuracy << ", mIoU " << a.miou << "\n";
  }
  ctx.write_json("summary.json", j);
  ctx.log << "inertia " << r.inertia << " (init " << r.chosen_init << ")\n";
}

inline void cmd_check_model(const Context& ctx) {
  const auto& c = ctx.config;
  const DensityGenerator gen = c.generator();
  const AssumptionReport r = check_assumptions(gen, c.n, c.p, default_assumption_grid());
  nlohmann::json j;
  j["config"] = config_json(c);
  j["model"] = gen.name;
  j["u_nonnegative"] = r.u_nonnegative;
  j["u_nonincreasing"] = r.u_nonincreasing;
  j["psi_nondecreasing"] = r.psi_nondecreasing;
  j["psi_sup_exceeds_np"] = r.psi_sup_exceeds_np ? nlohmann::json(*r.psi_sup_exceeds_np) : nlohmann::json(nullptr);
  j["psi_strictly_increasing"] = r.psi_strictly_increasing;
  j["neg_log_h_convex_in_log"] = r.neg_log_h_convex_in_log;
  j["passed"] = r.passed();
  j["conclusive"] = r.conclusive();
  j["messages"] = r.messages;
  const MetricCoefficients coeff = metric_coefficients(c.ew_model());
  j["alpha"] = coeff.alpha();
  j["beta"] = coeff.beta();
  ctx.write_json("check.json", j);
  ctx.log << gen.name << " (n=" << c.n << ", p=" << c.p << "): " << (r.passed() ? "assumptions hold" : "FAILED")
          << (r.conclusive() ? "" : " (inconclusive)") << "\n";
  for (const auto& m : r.messages) ctx.log << "  " << m << "\n";
}

}  // namespace cli

/// Parses argv, runs one subcommand, maps failures to exit codes.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Elliptical Wishart estimation, classification and clustering"};
  app.require_subcommand(1);
  app.fallthrough();
  cli::Args args;
  app.add_option("--config", args.config, "INI configuration file")->required();
  app.add_option("--seed", args.seed, "override [experiment] seed");
  app.add_option("--out", args.out, "output directory");
  app.add_option("--algorithm", args.algorithm, "fp, rsd or rcg")->check(CLI::IsMember({"fp", "rsd", "rcg"}));
  app.add_flag("--fast", args.fast, "cap repetitions at 20");
  app.add_option("--threads", args.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  using Handler = void (*)(const cli::Context&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"sample", "draw and save a sample set", cli::cmd_sample},
      {"fit", "estimate the center of a saved sample set", cli::cmd_fit},
      {"bench-convergence", "fixed point vs Riemannian convergence traces", cli::cmd_bench_convergence},
      {"bench-error", "estimation error as a function of K", cli::cmd_bench_error},
      {"classify", "train and test discriminant analysis on labeled files", cli::cmd_classify},
      {"cluster", "K-means clustering of a sample set", cli::cmd_cluster},
      {"check-model", "check the density generator assumptions", cli::cmd_check_model},
  };
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const cli::Context ctx = cli::make_context(args, out);
    for (const auto& [name, help, fn] : commands) {
      if (app.got_subcommand(name)) fn(ctx);
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace ewishart
