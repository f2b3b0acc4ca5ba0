#pragma once

#include <string>
#include <vector>

#include "hmmqp/estimators.hpp"
#include "hmmqp/mixture.hpp"
#include "hmmqp/model.hpp"
#include "hmmqp/moments.hpp"

// Single-header nlohmann/json lives in vendor/.
#include "json.hpp"

namespace hmmqp {

using json = nlohmann::json;

/// Model file schema:
/// {"n": int, "A": [[...]] with A[i][j] = P(i | j),
///  "outputs": {"type": "discrete", "B": [[...]]} |
///             {"type": "gaussian", "components": [{"mu": .., "sigma2": ..}, ...]},
///  "initial": [...] (optional)}
json model_to_json(const HMMSpec& spec);
HMMSpec model_from_json(const json& j);
HMMSpec load_model(const std::string& path);
void save_model(const std::string& path, const HMMSpec& spec);

json output_model_to_json(const OutputModel& outputs);
/// Accepts either the bare outputs object or anything carrying an "outputs"
/// key (a model file, a fit-mixture result).
OutputModel output_model_from_json(const json& j);
OutputModel load_output_model(const std::string& path);

/// Sequence files hold one observation per line, 0-based integers for
/// discrete outputs and decimal floats otherwise, preceded by the header
/// "# hmm-seq v1 <discrete|continuous>". Reading tolerates a missing header
/// and infers the kind from the first data line.
void save_sequence(const std::string& path, const SampledSequence& seq);
struct LoadedSequence {
  bool discrete = false;
  std::vector<int> symbols;
  std::vector<double> values;
  std::size_t size() const { return discrete ? symbols.size() : values.size(); }
};
LoadedSequence load_sequence(const std::string& path);

json moments_to_json(const DiscreteMoments& m);
json moments_to_json(const ContinuousMoments& m);
DiscreteMoments discrete_moments_from_json(const json& j);
ContinuousMoments continuous_moments_from_json(const json& j);

/// Report schema version "report-v1".
json report_to_json(const EstimationReport& report);

json mixture_to_json(const MixtureFit& fit);

}  // namespace hmmqp
