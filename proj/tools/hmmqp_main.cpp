#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hmmqp/baseline.hpp"
#include "hmmqp/bench.hpp"
#include "hmmqp/io.hpp"
#include "hmmqp/rng.hpp"

namespace {

using namespace hmmqp;

void write_or_print(const std::string& out_path, const json& j) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw InvalidConfig("cannot write " + out_path);
    out << j.dump(2) << "\n";
  }
}

int cmd_generate(const std::string& model, long long T, std::uint64_t seed, const std::string& out) {
  const HMMSpec spec = resolve_spec_source(model);
  const SampledSequence seq = sample(spec, T, seed);
  save_sequence(out, seq);
  std::cerr << "wrote " << T << " observations to " << out << "\n";
  return 0;
}

int cmd_fit_mixture(const std::string& data, int n, EmConfig cfg, const std::string& out) {
  const LoadedSequence seq = load_sequence(data);
  if (seq.discrete) throw InvalidConfig("fit-mixture needs a continuous sequence");
  const MixtureFit fit = em_fit(seq.values, n, cfg);
  write_or_print(out, mixture_to_json(fit));
  return 0;
}

int cmd_estimate(const std::string& data, const std::string& outputs_path, bool unweighted,
                 bool no_stationarity, bool eta_prime, const std::string& out) {
  const LoadedSequence seq = load_sequence(data);
  const OutputModel outputs = load_output_model(outputs_path);
  PipelineOptions opts;
  opts.weighted = !unweighted;
  if (no_stationarity) opts.stationarity = false;
  opts.use_eta_prime = eta_prime;

  EstimationReport report;
  if (seq.discrete) {
    if (!is_discrete(outputs)) throw InvalidConfig("discrete sequence needs a discrete output model");
    if (eta_prime) throw InvalidConfig("--eta-prime applies to continuous outputs only");
    report = full_pipeline(std::span<const int>(seq.symbols), std::get<DiscreteOutputModel>(outputs), opts);
  } else {
    if (is_discrete(outputs)) throw InvalidConfig("continuous sequence needs Gaussian outputs");
    report = full_pipeline(std::span<const double>(seq.values), std::get<GaussianOutputModel>(outputs), opts);
  }
  write_or_print(out, report_to_json(report));
  return 0;
}

int cmd_baum_welch(const std::string& data, int n, const std::string& init_path, int iters,
                   std::uint64_t seed, const std::string& out) {
  const LoadedSequence seq = load_sequence(data);

  BaumWelchResult result = [&] {
    if (!init_path.empty()) {
      const HMMSpec init_spec = load_model(init_path);
      if (init_spec.states() != n) throw InvalidConfig("--init model does not have n states");
      BaumWelchInit init{init_spec.A, init_spec.outputs, false, init_spec.initial};
      return seq.discrete ? baum_welch(std::span<const int>(seq.symbols), init, iters)
                          : baum_welch(std::span<const double>(seq.values), init, iters);
    }
    // Random initialization: flat-Dirichlet transition columns; outputs from
    // coarse data statistics.
    BaumWelchInit init{random_transition_matrix(n, seed),
                       OutputModel(GaussianOutputModel(VectorXd::Ones(1), VectorXd::Ones(1))), false};
    if (seq.discrete) {
      int m = 0;
      for (int s : seq.symbols) m = std::max(m, s + 1);
      m = std::max(m, n);
      init.outputs0 = DiscreteOutputModel(random_transition_matrix(m, seed + 1).matrix().leftCols(n));
      return baum_welch(std::span<const int>(seq.symbols), init, iters);
    }
    Rng rng(seed + 1);
    double lo = seq.values[0], hi = seq.values[0];
    double mean = 0.0;
    for (double v : seq.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mean += v;
    }
    mean /= static_cast<double>(seq.values.size());
    double var = 0.0;
    for (double v : seq.values) var += (v - mean) * (v - mean);
    var = std::max(var / static_cast<double>(seq.values.size()), 1e-12);
    VectorXd mu(n), s2(n);
    for (int k = 0; k < n; ++k) {
      mu[k] = lo + (hi - lo) * rng.uniform();
      s2[k] = var;
    }
    init.outputs0 = GaussianOutputModel(mu, s2);
    return baum_welch(std::span<const double>(seq.values), init, iters);
  }();

  json j;
  j["model"] = model_to_json(HMMSpec(result.A_hat, result.outputs_hat, result.p0_hat));
  j["loglik_trace"] = result.loglik_trace;
  j["iterations"] = result.iterations;
  write_or_print(out, j);
  return 0;
}

int cmd_benchmark(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  const HMMSpec spec = resolve_spec_source(config.spec_source);
  const auto rows = run_experiment(config, spec);

  std::filesystem::create_directories(config.out_dir);
  const std::string out_path = config.out_dir + "/results.csv";
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + out_path);
  write_results_csv(out, rows, config.record_timings);

  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") ++failed;
  }
  std::cerr << "wrote " << rows.size() << " rows to " << out_path << " (" << failed << " failed)\n";
  return failed == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric-output HMM learning: moment-based QP estimators, EM mixture fitting, "
               "a Baum-Welch baseline, and a benchmark harness"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Sample an observation sequence from a model");
  std::string gen_model, gen_out;
  long long gen_T = 0;
  std::uint64_t gen_seed = 1;
  gen->add_option("--model", gen_model, "Model file or builtin:toy4")->required();
  gen->add_option("--T", gen_T, "Sequence length")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "PRNG seed")->required();
  gen->add_option("--out", gen_out, "Output sequence file")->required();

  // fit-mixture
  auto* fitm = app.add_subcommand("fit-mixture", "Fit a Gaussian mixture to the observations by EM");
  std::string fitm_data, fitm_out;
  int fitm_n = 0;
  EmConfig fitm_cfg;
  fitm->add_option("--data", fitm_data, "Sequence file")->required();
  fitm->add_option("--n", fitm_n, "Component count")->required()->check(CLI::PositiveNumber);
  fitm->add_option("--restarts", fitm_cfg.restarts, "EM restarts (default 10)");
  fitm->add_option("--max-iters", fitm_cfg.max_iters, "EM iteration cap (default 500)");
  fitm->add_option("--tol", fitm_cfg.tol, "Log-likelihood gain tolerance (default 1e-8)");
  fitm->add_option("--seed", fitm_cfg.seed, "PRNG seed");
  fitm->add_option("--out", fitm_out, "Output file (default stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate pi and A from a sequence and known outputs");
  std::string est_data, est_outputs, est_out;
  bool est_weighted = false, est_unweighted = false, est_nostat = false, est_etaprime = false;
  est->add_option("--data", est_data, "Sequence file")->required();
  est->add_option("--outputs", est_outputs, "Output-model file (model file or fit-mixture result)")->required();
  auto* wflag = est->add_flag("--weighted", est_weighted, "Frequency-weighted objectives (default)");
  est->add_flag("--unweighted", est_unweighted, "Plain least-squares objectives")->excludes(wflag);
  est->add_flag("--no-stationarity-constraint", est_nostat, "Drop the A pi = pi rows");
  est->add_flag("--eta-prime", est_etaprime, "Use the density pair moments with the kernel matrix");
  est->add_option("--out", est_out, "Output file (default stdout)");

  // baum-welch
  auto* bw = app.add_subcommand("baum-welch", "Classical EM baseline");
  std::string bw_data, bw_init, bw_out;
  int bw_n = 0, bw_iters = 20;
  std::uint64_t bw_seed = 1;
  bw->add_option("--data", bw_data, "Sequence file")->required();
  bw->add_option("--n", bw_n, "State count")->required()->check(CLI::PositiveNumber);
  bw->add_option("--init", bw_init, "Initial model file (default: random init)");
  bw->add_option("--iters", bw_iters, "Iteration budget (default 20)");
  bw->add_option("--seed", bw_seed, "Seed for the random initialization");
  bw->add_option("--out", bw_out, "Output file (default stdout)");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Run the method comparison sweep from a JSON config");
  std::string bench_config;
  bench->add_option("--config", bench_config, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_model, gen_T, gen_seed, gen_out);
    if (fitm->parsed()) return cmd_fit_mixture(fitm_data, fitm_n, fitm_cfg, fitm_out);
    if (est->parsed()) return cmd_estimate(est_data, est_outputs, est_unweighted, est_nostat, est_etaprime, est_out);
    if (bw->parsed()) return cmd_baum_welch(bw_data, bw_n, bw_init, bw_iters, bw_seed, bw_out);
    if (bench->parsed()) return cmd_benchmark(bench_config);
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidModel& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
