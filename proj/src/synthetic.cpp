#include "scm/synthetic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace scm {

double hypertension_label(double sbp, double dbp, HypertensionRule rule) {
  const bool high_s = sbp >= 140.0;
  const bool high_d = dbp >= 90.0;
  const bool hyp = rule == HypertensionRule::both ? (high_s && high_d) : (high_s || high_d);
  return hyp ? 1.0 : -1.0;
}

void SyntheticSpec::check() const {
  if (n < 1) throw std::invalid_argument("SyntheticSpec: n must be positive");
  if (n_cadres_true < 1) throw std::invalid_argument("SyntheticSpec: n_cadres_true must be positive");
  if (static_cast<int>(slopes.size()) != n_cadres_true)
    throw std::invalid_argument("SyntheticSpec: slopes length must equal n_cadres_true");
  if (n_strata < 1 || varunits_per_stratum < 1)
    throw std::invalid_argument("SyntheticSpec: need at least one stratum and one varunit");
  if (n_controls < 1 || n_exposures < 1)
    throw std::invalid_argument("SyntheticSpec: need at least one control and one exposure");
  if (!(noise_sd >= 0.0) || !(weight_skew >= 0.0))
    throw std::invalid_argument("SyntheticSpec: noise_sd and weight_skew must be nonnegative");
}

SyntheticStudy generate_synthetic(const SyntheticSpec& spec) {
  spec.check();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> cadre(0, spec.n_cadres_true - 1);

  SyntheticStudy out;
  SurveyDataset& d = out.data;
  const Index n = spec.n;
  const Index pc = spec.n_controls;
  const Index pe = spec.n_exposures;
  d.task = spec.task;
  for (Index j = 0; j < pc; ++j) out.control_names.push_back("c" + std::to_string(j + 1));
  for (Index j = 0; j < pe; ++j) out.exposure_names.push_back("e" + std::to_string(j + 1));
  d.column_names = out.control_names;
  d.column_names.insert(d.column_names.end(), out.exposure_names.begin(), out.exposure_names.end());
  if (spec.task == Task::cbp)
    d.response_names = {"sbp", "dbp"};
  else
    d.response_names = {"hyp"};

  d.features.resize(n, pc + pe);
  d.responses.resize(n, spec.task == Task::cbp ? 2 : 1);
  d.weights.resize(n);
  d.strata.resize(static_cast<std::size_t>(n));
  d.varunits.resize(static_cast<std::size_t>(n));
  out.true_labels.resize(static_cast<std::size_t>(n));

  const double mid = 0.5 * (spec.n_cadres_true - 1);
  // Cadres do not overlap on c1: each draw is truncated to its own slab.
  const bool truncate = spec.n_cadres_true > 1 && spec.separation > 0.0;
  const double half_gap = 0.5 * spec.separation;
  for (Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const int k = cadre(rng);
    out.true_labels[ii] = k;
    for (Index j = 0; j < pc; ++j) {
      if (j == 0 && truncate) {
        double z = normal(rng);
        while (std::abs(z) >= half_gap) z = normal(rng);
        d.features(i, j) = (k - mid) * spec.separation + z;
      } else {
        d.features(i, j) = normal(rng);
      }
    }
    double rf = 0.0;
    for (Index j = 0; j < pe; ++j) {
      const double z = normal(rng);
      if (j == 0) rf = z;
      d.features(i, pc + j) = std::exp(z);
    }

    double mean = spec.slopes[static_cast<std::size_t>(k)] * rf;
    for (Index j = 0; j < pc && j < static_cast<Index>(spec.control_effects.size()); ++j)
      mean += spec.control_effects[static_cast<std::size_t>(j)] * d.features(i, j);
    const double sbp = mean + spec.noise_sd * normal(rng);
    const double dbp = mean + spec.noise_sd * normal(rng);
    if (spec.task == Task::cbp) {
      d.responses(i, 0) = sbp;
      d.responses(i, 1) = dbp;
    } else {
      // Latent blood pressure mapped to mmHg-like units before thresholding.
      d.responses(i, 0) = hypertension_label(130.0 + 10.0 * sbp, 85.0 + 5.0 * dbp, spec.rule);
    }

    d.weights[i] = std::exp(spec.weight_skew * normal(rng));
    const int h = static_cast<int>(i % spec.n_strata);
    d.strata[ii] = h;
    d.varunits[ii] = h * spec.varunits_per_stratum + static_cast<int>((i / spec.n_strata) % spec.varunits_per_stratum);
  }
  d.weights /= d.weights.mean();
  return out;
}

}  // namespace scm
