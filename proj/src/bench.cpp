#include "hmmqp/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>
#include <tuple>

#include "hmmqp/baseline.hpp"
#include "hmmqp/rng.hpp"

namespace hmmqp {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MatrixXd permute_transition(const MatrixXd& A, const std::vector<int>& p) {
  const int n = static_cast<int>(A.rows());
  MatrixXd out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out(i, j) = A(p[i], p[j]);
  }
  return out;
}

VectorXd permute_vector(const VectorXd& v, const std::vector<int>& p) {
  VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v[p[static_cast<std::size_t>(i)]];
  return out;
}

std::vector<int> identity_perm(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  return p;
}

GaussianOutputModel random_gaussian_init(const std::vector<double>& y, int n, std::uint64_t seed) {
  Rng rng(seed);
  double lo = y[0], hi = y[0], mean = 0.0;
  for (double v : y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
  }
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var = std::max(var / static_cast<double>(y.size()), 1e-12);
  VectorXd mu(n), s2(n);
  for (int k = 0; k < n; ++k) {
    mu[k] = lo + (hi - lo) * rng.uniform();
    s2[k] = var * (0.5 + rng.uniform());
  }
  return GaussianOutputModel(mu, s2);
}

struct Truth {
  const HMMSpec& spec;
  VectorXd pi;
};

struct MethodEval {
  ResultRow row;
};

void fill_errors(ResultRow& row, const Truth& truth, const MatrixXd& A_hat,
                 const std::vector<int>& perm, const VectorXd* pi_hat) {
  row.alignment = perm;
  row.a_error_sq = (permute_transition(A_hat, perm) - truth.spec.A.matrix()).squaredNorm();
  if (pi_hat) row.pi_error_sq = (permute_vector(*pi_hat, perm) - truth.pi).squaredNorm();
}

// One (T, seed) cell: runs every requested method on shared data / shared EM.
std::vector<ResultRow> run_cell(const ExperimentConfig& config, const Truth& truth, long long T,
                                std::uint64_t seed) {
  const int n = truth.spec.states();
  const bool need_em = std::any_of(config.methods.begin(), config.methods.end(),
                                   [](int m) { return m == 1 || m == 3 || m == 5 || m == 7; });
  const bool need_qp_exact = std::any_of(config.methods.begin(), config.methods.end(),
                                         [](int m) { return m == 2 || m == 4; });
  const bool need_qp_em = std::any_of(config.methods.begin(), config.methods.end(),
                                      [](int m) { return m == 3 || m == 5; });

  std::vector<ResultRow> rows;
  auto start_row = [&](int method) {
    ResultRow row;
    row.method = method;
    row.T = T;
    row.seed = seed;
    return row;
  };
  auto fail_all = [&](const std::string& why) {
    rows.clear();
    for (int m : config.methods) {
      ResultRow row = start_row(m);
      row.status = why;
      rows.push_back(std::move(row));
    }
    return rows;
  };

  // Shared data.
  SampledSequence data;
  double sample_ms = 0.0;
  try {
    const auto t0 = Clock::now();
    data = sample(truth.spec, T, seed);
    sample_ms = ms_since(t0);
  } catch (const Error& e) {
    return fail_all(std::string("sample: ") + e.what());
  }
  const std::span<const double> yv(data.values);
  const std::span<const int> ys(data.symbols);
  const bool discrete = truth.spec.discrete();

  // Shared EM fit (methods 1 excluded: it starts from a random guess).
  bool em_ok = false;
  MixtureFit em_fit_result{VectorXd(), GaussianOutputModel(VectorXd::Ones(1), VectorXd::Ones(1)), 0, 0, 0};
  double em_ms = 0.0;
  std::string em_error;
  if (need_em && !truth.spec.discrete()) {
    try {
      EmConfig em_cfg = config.em;
      em_cfg.seed = mix_seed(seed, 11);
      const auto t0 = Clock::now();
      em_fit_result = em_fit(yv, n, em_cfg);
      em_ms = ms_since(t0);
      em_ok = true;
    } catch (const Error& e) {
      em_error = std::string("em: ") + e.what();
    }
  }

  // Shared QP pipelines.
  std::optional<EstimationReport> rep_exact, rep_em;
  std::string rep_exact_error, rep_em_error;
  if (need_qp_exact) {
    try {
      if (discrete) {
        const auto& outs = truth.spec.discrete_outputs();
        rep_exact = config.exact_moments
                        ? pipeline_from_moments(analytic_moments(truth.spec.A, outs), outs)
                        : full_pipeline(ys, outs);
      } else {
        const auto& outs = truth.spec.gaussian_outputs();
        rep_exact = config.exact_moments
                        ? pipeline_from_moments(analytic_moments(truth.spec.A, outs), outs)
                        : full_pipeline(yv, outs);
      }
    } catch (const Error& e) {
      rep_exact_error = std::string("qp: ") + e.what();
    }
  }
  if (need_qp_em && em_ok) {
    try {
      rep_em = full_pipeline(yv, em_fit_result.components);
    } catch (const Error& e) {
      rep_em_error = std::string("qp: ") + e.what();
    }
  }

  const std::vector<int> id_perm = identity_perm(n);
  const std::vector<int> em_perm =
      em_ok ? align_components(em_fit_result.components, truth.spec.gaussian_outputs()) : id_perm;

  auto run_bw = [&](ResultRow& row, const BaumWelchInit& init) -> std::optional<BaumWelchResult> {
    std::vector<MatrixXd> trace;
    const BwIterationCallback cb =
        config.record_bw_trace
            ? BwIterationCallback(
                  [&](int, const TransitionMatrix& A, double) { trace.push_back(A.matrix()); })
            : BwIterationCallback();
    const auto t0 = Clock::now();
    BaumWelchResult bw = discrete ? baum_welch(ys, init, config.bw_iters, cb)
                                  : baum_welch(yv, init, config.bw_iters, cb);
    row.timings.bw_ms = ms_since(t0);
    if (config.record_bw_trace) {
      std::vector<int> perm = id_perm;
      if (!init.fix_outputs && !discrete) {
        perm = align_components(std::get<GaussianOutputModel>(bw.outputs_hat),
                                truth.spec.gaussian_outputs());
      }
      for (const auto& Ait : trace) {
        row.bw_trace.push_back((permute_transition(Ait, perm) - truth.spec.A.matrix()).squaredNorm());
      }
    }
    return bw;
  };

  for (int method : config.methods) {
    ResultRow row = start_row(method);
    row.timings.sample_ms = sample_ms;
    try {
      switch (method) {
        case 1: {
          const auto outputs0 = random_gaussian_init(data.values, n, mix_seed(seed, 1));
          BaumWelchInit init{random_transition_matrix(n, mix_seed(seed, 101)), outputs0, false};
          auto bw = run_bw(row, init);
          const auto& outs = std::get<GaussianOutputModel>(bw->outputs_hat);
          fill_errors(row, truth, bw->A_hat.matrix(),
                      align_components(outs, truth.spec.gaussian_outputs()), nullptr);
          row.timings.total_ms = row.timings.bw_ms;
          break;
        }
        case 2: {
          if (!rep_exact) throw Error(rep_exact_error);
          row.timings.moments_ms = rep_exact->timings.moments_ms;
          row.timings.pi_ms = rep_exact->timings.pi_ms;
          row.timings.a_ms = rep_exact->timings.a_ms;
          row.timings.total_ms = rep_exact->timings.total_ms;
          fill_errors(row, truth, rep_exact->A.A_hat.matrix(), id_perm, &rep_exact->pi.pi_hat);
          break;
        }
        case 3: {
          if (!em_ok) throw Error(em_error);
          if (!rep_em) throw Error(rep_em_error);
          row.timings.mixture_ms = em_ms;
          row.timings.moments_ms = rep_em->timings.moments_ms;
          row.timings.pi_ms = rep_em->timings.pi_ms;
          row.timings.a_ms = rep_em->timings.a_ms;
          row.timings.total_ms = em_ms + rep_em->timings.total_ms;
          fill_errors(row, truth, rep_em->A.A_hat.matrix(), em_perm, &rep_em->pi.pi_hat);
          break;
        }
        case 4: {
          if (!rep_exact) throw Error(rep_exact_error);
          BaumWelchInit init{rep_exact->A.A_hat, truth.spec.outputs, true};
          auto bw = run_bw(row, init);
          fill_errors(row, truth, bw->A_hat.matrix(), id_perm, nullptr);
          row.timings.moments_ms = rep_exact->timings.moments_ms;
          row.timings.pi_ms = rep_exact->timings.pi_ms;
          row.timings.a_ms = rep_exact->timings.a_ms;
          row.timings.total_ms = rep_exact->timings.total_ms + row.timings.bw_ms;
          break;
        }
        case 5: {
          if (!em_ok) throw Error(em_error);
          if (!rep_em) throw Error(rep_em_error);
          BaumWelchInit init{rep_em->A.A_hat, OutputModel(em_fit_result.components), false};
          auto bw = run_bw(row, init);
          const auto& outs = std::get<GaussianOutputModel>(bw->outputs_hat);
          fill_errors(row, truth, bw->A_hat.matrix(),
                      align_components(outs, truth.spec.gaussian_outputs()), nullptr);
          row.timings.mixture_ms = em_ms;
          row.timings.moments_ms = rep_em->timings.moments_ms;
          row.timings.pi_ms = rep_em->timings.pi_ms;
          row.timings.a_ms = rep_em->timings.a_ms;
          row.timings.total_ms = em_ms + rep_em->timings.total_ms + row.timings.bw_ms;
          break;
        }
        case 6: {
          BaumWelchInit init{random_transition_matrix(n, mix_seed(seed, 106)),
                             truth.spec.outputs, true};
          auto bw = run_bw(row, init);
          fill_errors(row, truth, bw->A_hat.matrix(), id_perm, nullptr);
          row.timings.total_ms = row.timings.bw_ms;
          break;
        }
        case 7: {
          if (!em_ok) throw Error(em_error);
          BaumWelchInit init{random_transition_matrix(n, mix_seed(seed, 107)),
                             OutputModel(em_fit_result.components), false};
          auto bw = run_bw(row, init);
          const auto& outs = std::get<GaussianOutputModel>(bw->outputs_hat);
          fill_errors(row, truth, bw->A_hat.matrix(),
                      align_components(outs, truth.spec.gaussian_outputs()), nullptr);
          row.timings.mixture_ms = em_ms;
          row.timings.total_ms = em_ms + row.timings.bw_ms;
          break;
        }
        default:
          throw InvalidConfig("unknown method id " + std::to_string(method));
      }
    } catch (const Error& e) {
      row.status = e.what();
    } catch (const std::exception& e) {
      row.status = std::string("unexpected: ") + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Job>
void run_pool(int workers, int n_jobs, Job&& job) {
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int k = std::max(1, std::min(workers > 0 ? workers : (hw > 0 ? hw : 1), n_jobs));
  if (k == 1) {
    for (int i = 0; i < n_jobs; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (int w = 0; w < k; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

void append_csv_field(std::string& line, const std::string& field) {
  if (field.find_first_of(",\"\n") != std::string::npos) {
    line += '"';
    for (char ch : field) {
      if (ch == '"') line += '"';
      line += ch;
    }
    line += '"';
  } else {
    line += field;
  }
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  for (int m : methods) {
    if (m < 1 || m > 7) throw InvalidConfig("method ids must be in 1..7");
  }
  if (methods.empty()) throw InvalidConfig("no methods selected");
  for (long long t : T_grid) {
    if (t < 100) throw InvalidConfig("T values must be at least 100");
  }
  if (T_grid.empty()) throw InvalidConfig("empty T grid");
  if (seeds.empty() && seed_count < 1) throw InvalidConfig("need at least one seed");
  if (bw_iters < 1) throw InvalidConfig("bw_iters must be positive");
}

std::vector<std::uint64_t> ExperimentConfig::resolved_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(static_cast<std::size_t>(seed_count));
  for (int i = 0; i < seed_count; ++i) out[static_cast<std::size_t>(i)] = base_seed + static_cast<std::uint64_t>(i);
  return out;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("spec")) c.spec_source = j.at("spec").get<std::string>();
  if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<int>>();
  if (j.contains("T_grid")) c.T_grid = j.at("T_grid").get<std::vector<long long>>();
  if (j.contains("seeds")) {
    if (j.at("seeds").is_number()) {
      c.seed_count = j.at("seeds").get<int>();
    } else {
      c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
  }
  if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("bw_iters")) c.bw_iters = j.at("bw_iters").get<int>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("exact_moments")) c.exact_moments = j.at("exact_moments").get<bool>();
  if (j.contains("record_timings")) c.record_timings = j.at("record_timings").get<bool>();
  if (j.contains("record_bw_trace")) c.record_bw_trace = j.at("record_bw_trace").get<bool>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  if (j.contains("em")) {
    const auto& e = j.at("em");
    if (e.contains("max_iters")) c.em.max_iters = e.at("max_iters").get<int>();
    if (e.contains("tol")) c.em.tol = e.at("tol").get<double>();
    if (e.contains("restarts")) c.em.restarts = e.at("restarts").get<int>();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidConfig(std::string("bad config JSON: ") + e.what());
  }
  return config_from_json(j);
}

HMMSpec builtin_toy_model() {
  MatrixXd A(4, 4);
  A << 0.7, 0.0, 0.2, 0.5,
       0.2, 0.6, 0.2, 0.0,
       0.1, 0.2, 0.6, 0.0,
       0.0, 0.2, 0.0, 0.5;
  VectorXd mu(4), s2(4);
  mu << -4.0, 0.0, 2.0, 4.0;
  s2 << 4.0, 1.0, 36.0, 1.0;
  return HMMSpec(TransitionMatrix(A), GaussianOutputModel(mu, s2));
}

HMMSpec resolve_spec_source(const std::string& source) {
  if (source == "builtin:toy4") return builtin_toy_model();
  return load_model(source);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, const HMMSpec& spec) {
  config.validate();
  if (spec.discrete()) {
    for (int m : config.methods) {
      if (m != 2 && m != 4 && m != 6) {
        throw InvalidConfig("discrete specs support methods 2, 4, 6 only (the mixture learner is Gaussian)");
      }
    }
  }
  const Truth truth{spec, stationary_distribution(spec.A)};
  const auto seeds = config.resolved_seeds();

  struct Cell {
    long long T;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (long long T : config.T_grid) {
    for (auto s : seeds) cells.push_back({T, s});
  }

  std::vector<std::vector<ResultRow>> results(cells.size());
  run_pool(config.workers, static_cast<int>(cells.size()), [&](int i) {
    results[static_cast<std::size_t>(i)] =
        run_cell(config, truth, cells[static_cast<std::size_t>(i)].T, cells[static_cast<std::size_t>(i)].seed);
  });

  std::vector<ResultRow> rows;
  for (auto& cell_rows : results) {
    for (auto& r : cell_rows) rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.method, a.T, a.seed) < std::tie(b.method, b.T, b.seed);
  });
  return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool timings) {
  out << "method,T,seed,status,a_error_sq,pi_error_sq,alignment,sample_ms,em_ms,moments_ms,pi_ms,"
         "a_ms,bw_ms,total_ms,bw_trace\r\n";
  for (const auto& r : rows) {
    std::string line;
    line += std::to_string(r.method);
    line += ',';
    line += std::to_string(r.T);
    line += ',';
    line += std::to_string(r.seed);
    line += ',';
    append_csv_field(line, r.status);
    line += ',';
    line += fmt_double(r.a_error_sq);
    line += ',';
    line += fmt_double(r.pi_error_sq);
    line += ',';
    std::string align;
    for (std::size_t i = 0; i < r.alignment.size(); ++i) {
      if (i) align += '|';
      align += std::to_string(r.alignment[i]);
    }
    line += align;
    const double tvals[7] = {r.timings.sample_ms, r.timings.mixture_ms, r.timings.moments_ms,
                             r.timings.pi_ms,     r.timings.a_ms,      r.timings.bw_ms,
                             r.timings.total_ms};
    for (double tv : tvals) {
      line += ',';
      line += fmt_double(timings ? tv : 0.0);
    }
    line += ',';
    std::string trace;
    for (std::size_t i = 0; i < r.bw_trace.size(); ++i) {
      if (i) trace += '|';
      trace += fmt_double(r.bw_trace[i]);
    }
    append_csv_field(line, trace);
    out << line << "\r\n";
  }
}

double median(std::vector<double> v) {
  if (v.empty()) throw InsufficientData("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

RateCheckResult rate_check(const std::vector<ResultRow>& rows, RateQuantity quantity) {
  const bool squared = quantity == RateQuantity::a_error_sq || quantity == RateQuantity::pi_error_sq;
  return squared ? rate_check(rows, quantity, -1.35, -0.65)
                 : rate_check(rows, quantity, -0.675, -0.325);
}

RateCheckResult rate_check(const std::vector<ResultRow>& rows, RateQuantity quantity,
                           double window_lo, double window_hi) {
  std::map<long long, std::vector<double>> by_T;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    double v = std::numeric_limits<double>::quiet_NaN();
    switch (quantity) {
      case RateQuantity::a_error_sq: v = r.a_error_sq; break;
      case RateQuantity::pi_error_sq: v = r.pi_error_sq; break;
      case RateQuantity::a_error: v = std::sqrt(r.a_error_sq); break;
      case RateQuantity::pi_error: v = std::sqrt(r.pi_error_sq); break;
    }
    if (std::isfinite(v)) by_T[r.T].push_back(v);
  }
  if (by_T.size() < 3) throw InsufficientData("rate check needs at least 3 distinct T values");
  std::vector<double> lx, ly;
  for (auto& [T, vals] : by_T) {
    if (vals.size() < 10) throw InsufficientData("rate check needs at least 10 seeds per T");
    lx.push_back(std::log(static_cast<double>(T)));
    ly.push_back(std::log(std::max(median(vals), 1e-300)));
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  RateCheckResult res;
  res.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  res.window_lo = window_lo;
  res.window_hi = window_hi;
  res.pass = res.slope >= window_lo && res.slope <= window_hi;
  res.t_points = static_cast<int>(lx.size());
  return res;
}

std::vector<StabilityRow> stability_sweep(const HMMSpec& spec, const std::vector<double>& eps_grid,
                                          long long T, int seeds, std::uint64_t base_seed,
                                          int workers) {
  if (spec.discrete()) throw InvalidConfig("stability sweep needs Gaussian outputs");
  if (seeds < 1) throw InvalidConfig("need at least one seed");
  const MatrixXd& A_true = spec.A.matrix();
  const auto& outputs = spec.gaussian_outputs();

  std::vector<std::vector<StabilityRow>> per_seed(static_cast<std::size_t>(seeds));
  run_pool(workers, seeds, [&](int si) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(si);
    const SampledSequence data = sample(spec, T, seed);
    const std::span<const double> yv(data.values);
    const EstimationReport base = full_pipeline(yv, outputs);
    const MatrixXd A0 = base.A.A_hat.matrix();
    std::vector<StabilityRow> rows;
    for (double eps : eps_grid) {
      StabilityRow row;
      row.epsilon = eps;
      row.seed = seed;
      const GaussianOutputModel pert = perturb_outputs(outputs, eps, mix_seed(seed, 0xE5));
      const EstimationReport rep = eps == 0.0 ? base : full_pipeline(yv, pert);
      row.a_error = (rep.A.A_hat.matrix() - A_true).norm();
      row.added_a_error = (rep.A.A_hat.matrix() - A0).norm();
      rows.push_back(row);
    }
    per_seed[static_cast<std::size_t>(si)] = std::move(rows);
  });

  std::vector<StabilityRow> rows;
  for (double eps : eps_grid) {
    for (int si = 0; si < seeds; ++si) {
      for (const auto& r : per_seed[static_cast<std::size_t>(si)]) {
        if (r.epsilon == eps) rows.push_back(r);
      }
    }
  }
  return rows;
}

void write_stability_csv(std::ostream& out, const std::vector<StabilityRow>& rows) {
  out << "epsilon,seed,a_error,added_a_error\r\n";
  for (const auto& r : rows) {
    out << fmt_double(r.epsilon) << ',' << r.seed << ',' << fmt_double(r.a_error) << ','
        << fmt_double(r.added_a_error) << "\r\n";
  }
}

std::vector<double> median_added_error(const std::vector<StabilityRow>& rows,
                                       const std::vector<double>& eps_grid) {
  std::vector<double> out;
  for (double eps : eps_grid) {
    std::vector<double> vals;
    for (const auto& r : rows) {
      if (r.epsilon == eps) vals.push_back(r.added_a_error);
    }
    out.push_back(median(std::move(vals)));
  }
  return out;
}

}  // namespace hmmqp
