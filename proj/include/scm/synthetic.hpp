#pragma once

#include "scm/data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scm {

enum class HypertensionRule { both, either };

/// Hypertension when systolic >= 140 and diastolic >= 90 (`both`), or when
/// either threshold is reached (`either`). Returns +1 or -1.
double hypertension_label(double sbp, double dbp, HypertensionRule rule = HypertensionRule::both);

/// Generator settings for validation studies. Controls are named
/// c1..c{n_controls}; c1 separates the true cadres. Exposures e1..e{n_exposures}
/// are stored log-normally (exp of a standard normal); e1 carries the
/// per-cadre slopes, the rest are null.
struct SyntheticSpec {
  int n = 2000;
  int n_cadres_true = 2;
  double separation = 3.0;
  std::vector<double> slopes{0.0, 1.0};
  double noise_sd = 0.5;
  double weight_skew = 0.3;
  int n_strata = 10;
  int varunits_per_stratum = 2;
  std::uint64_t seed = 1;
  Task task = Task::cbp;
  int n_controls = 2;
  int n_exposures = 1;
  std::vector<double> control_effects{0.5, 0.3};
  HypertensionRule rule = HypertensionRule::both;

  void check() const;
};

struct SyntheticStudy {
  SurveyDataset data;
  std::vector<int> true_labels;  // zero-based cadre of each subject
  std::vector<std::string> control_names;
  std::vector<std::string> exposure_names;
};

SyntheticStudy generate_synthetic(const SyntheticSpec& spec);

}  // namespace scm
