#pragma once

// JSON forms of model parameters, training results, selection reports and
// GLM fits. Matrices are stored row-major as flat arrays with their
// dimensions recorded alongside.

#include "scm/glm.hpp"
#include "scm/inference.hpp"
#include "scm/model.hpp"
#include "scm/select.hpp"
#include "scm/synthetic.hpp"
#include "scm/train.hpp"

#include <json.hpp>

namespace scm {

using Json = nlohmann::json;

Json params_to_json(const ScmParams& params);
ScmParams params_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& cfg);
/// Fields absent from `j` keep the values in `base`.
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

Json selection_config_to_json(const SelectionConfig& cfg);
SelectionConfig selection_config_from_json(const Json& j, SelectionConfig base = {});

Json train_result_to_json(const TrainResult& result);
TrainResult train_result_from_json(const Json& j);

/// Every candidate with BIC, entropies and admissibility, plus the selected
/// model's parameters per M.
Json selection_to_json(const std::map<int, SelectedModel>& selection);

Json glm_fit_to_json(const GlmFit& fit);

Json record_to_json(const AssociationRecord& record);
AssociationRecord record_from_json(const Json& j);

Json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const Json& j, SyntheticSpec base = {});

}  // namespace scm
