#include "hmmqp/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace hmmqp {

namespace {

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw InvalidConfig("expected a nested array");
  const auto rows = j.size();
  const auto cols = j[0].size();
  MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw InvalidConfig("ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw InvalidConfig("expected an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidConfig("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

json output_model_to_json(const OutputModel& outputs) {
  json j;
  if (is_discrete(outputs)) {
    j["type"] = "discrete";
    j["B"] = matrix_to_json(std::get<DiscreteOutputModel>(outputs).emission());
  } else {
    const auto& g = std::get<GaussianOutputModel>(outputs);
    j["type"] = "gaussian";
    json comps = json::array();
    for (int k = 0; k < g.states(); ++k) {
      comps.push_back({{"mu", g.mu()[k]}, {"sigma2", g.sigma2()[k]}});
    }
    j["components"] = std::move(comps);
  }
  return j;
}

OutputModel output_model_from_json(const json& j) {
  const json& o = j.contains("outputs") ? j.at("outputs") : j;
  const std::string type = o.at("type").get<std::string>();
  if (type == "discrete") {
    return DiscreteOutputModel(matrix_from_json(o.at("B")));
  }
  if (type == "gaussian") {
    const auto& comps = o.at("components");
    VectorXd mu(comps.size()), s2(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
      mu[static_cast<Eigen::Index>(k)] = comps[k].at("mu").get<double>();
      s2[static_cast<Eigen::Index>(k)] = comps[k].at("sigma2").get<double>();
    }
    return GaussianOutputModel(std::move(mu), std::move(s2));
  }
  throw InvalidConfig("unknown output model type: " + type);
}

OutputModel load_output_model(const std::string& path) {
  return output_model_from_json(parse_file(path));
}

json model_to_json(const HMMSpec& spec) {
  json j;
  j["n"] = spec.states();
  j["A"] = matrix_to_json(spec.A.matrix());
  j["outputs"] = output_model_to_json(spec.outputs);
  if (spec.initial) j["initial"] = vector_to_json(*spec.initial);
  return j;
}

HMMSpec model_from_json(const json& j) {
  TransitionMatrix A(matrix_from_json(j.at("A")));
  if (j.contains("n") && j.at("n").get<int>() != A.size()) {
    throw InvalidConfig("declared n does not match the transition matrix");
  }
  OutputModel outputs = output_model_from_json(j.at("outputs"));
  std::optional<VectorXd> initial;
  if (j.contains("initial") && !j.at("initial").is_null()) initial = vector_from_json(j.at("initial"));
  return HMMSpec(std::move(A), std::move(outputs), std::move(initial));
}

HMMSpec load_model(const std::string& path) { return model_from_json(parse_file(path)); }

void save_model(const std::string& path, const HMMSpec& spec) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write " + path);
  out << model_to_json(spec).dump(2) << "\n";
}

void save_sequence(const std::string& path, const SampledSequence& seq) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write " + path);
  out << "# hmm-seq v1 " << (seq.discrete ? "discrete" : "continuous") << "\n";
  if (seq.discrete) {
    for (int s : seq.symbols) out << s << "\n";
  } else {
    char buf[40];
    for (double v : seq.values) {
      const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
      out.write(buf, len);
      out.put('\n');
    }
  }
}

LoadedSequence load_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open " + path);
  LoadedSequence seq;
  std::string line;
  bool kind_known = false;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("# hmm-seq", 0) == 0) {
      first = false;
      kind_known = true;
      seq.discrete = line.find("discrete") != std::string::npos;
      continue;
    }
    first = false;
    if (line[0] == '#') continue;
    if (!kind_known) {
      // No header: a bare integer token means a discrete sequence.
      seq.discrete = line.find_first_of(".eE") == std::string::npos;
      kind_known = true;
    }
    try {
      if (seq.discrete) {
        seq.symbols.push_back(std::stoi(line));
      } else {
        seq.values.push_back(std::stod(line));
      }
    } catch (const std::exception&) {
      throw InvalidConfig("bad observation line in " + path + ": " + line);
    }
  }
  if (seq.size() == 0) throw InvalidConfig("sequence file " + path + " holds no observations");
  return seq;
}

json moments_to_json(const DiscreteMoments& m) {
  return json{{"rho", vector_to_json(m.rho_hat)}, {"sigma", matrix_to_json(m.sigma_hat)}, {"T", m.T}};
}

json moments_to_json(const ContinuousMoments& m) {
  json j{{"xi", vector_to_json(m.xi_hat)}, {"eta", matrix_to_json(m.eta_hat)}, {"T", m.T}};
  if (m.eta_prime_hat) j["eta_prime"] = matrix_to_json(*m.eta_prime_hat);
  return j;
}

DiscreteMoments discrete_moments_from_json(const json& j) {
  DiscreteMoments m;
  m.rho_hat = vector_from_json(j.at("rho"));
  m.sigma_hat = matrix_from_json(j.at("sigma"));
  m.T = j.at("T").get<long long>();
  return m;
}

ContinuousMoments continuous_moments_from_json(const json& j) {
  ContinuousMoments m;
  m.xi_hat = vector_from_json(j.at("xi"));
  m.eta_hat = matrix_from_json(j.at("eta"));
  if (j.contains("eta_prime")) m.eta_prime_hat = matrix_from_json(j.at("eta_prime"));
  m.T = j.at("T").get<long long>();
  return m;
}

namespace {

const char* pi_method_name(PiMethod m) {
  switch (m) {
    case PiMethod::normal_equations: return "normal_equations";
    case PiMethod::weighted_qp: return "weighted_qp";
    case PiMethod::unweighted_qp: return "unweighted_qp";
  }
  return "unknown";
}

}  // namespace

json report_to_json(const EstimationReport& report) {
  json j;
  j["schema"] = "report-v1";
  j["T"] = report.T;
  j["discrete"] = report.discrete;
  j["pi_hat"] = vector_to_json(report.pi.pi_hat);
  j["pi_method"] = pi_method_name(report.pi.method);
  j["A_hat"] = matrix_to_json(report.A.A_hat.matrix());
  j["objective"] = report.A.weighted ? "weighted" : "unweighted";
  j["stationarity_constraint"] = report.A.stationarity_constraint;
  j["diagnostics"] = {
      {"sigma1_weighted", report.pi.sigma1_weighted},
      {"sigma1_K", report.effective.sigma1_K},
      {"pi_solver_iterations", report.pi.solver.iterations},
      {"pi_solver_kkt_residual", report.pi.solver.kkt_residual},
      {"A_solver_iterations", report.A.solver.iterations},
      {"A_solver_kkt_residual", report.A.solver.kkt_residual},
  };
  if (report.effective.sigma1_F) j["diagnostics"]["sigma1_F"] = *report.effective.sigma1_F;
  j["timings_ms"] = {
      {"sample", report.timings.sample_ms}, {"mixture", report.timings.mixture_ms},
      {"moments", report.timings.moments_ms}, {"pi", report.timings.pi_ms},
      {"A", report.timings.a_ms},           {"bw", report.timings.bw_ms},
      {"total", report.timings.total_ms},
  };
  if (report.alignment) j["alignment"] = *report.alignment;
  if (report.pi_error_l2) j["pi_error_l2"] = *report.pi_error_l2;
  if (report.a_error_fro) j["A_error_fro"] = *report.a_error_fro;
  return j;
}

json mixture_to_json(const MixtureFit& fit) {
  json j;
  j["outputs"] = output_model_to_json(OutputModel(fit.components));
  j["weights"] = vector_to_json(fit.weights);
  j["loglik"] = fit.loglik;
  j["iterations"] = fit.iterations;
  j["restarts_used"] = fit.restarts_used;
  return j;
}

}  // namespace hmmqp
