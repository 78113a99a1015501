#pragma once

#include <string>
#include <vector>

namespace scm {

/// Benjamini-Hochberg adjusted p-values, returned in input order. Throws
/// std::invalid_argument for values outside [0, 1].
std::vector<double> bh_adjust(const std::vector<double>& p);

/// One tested coefficient: the risk factor's coefficient in the GLM for
/// (response, cadre) of the M-cadre model.
struct AssociationTest {
  std::string risk_factor;
  std::string response;
  int m = 1;
  int cadre = 1;  // one-based
  double coefficient = 0.0;
  double std_error = 0.0;
  double p_raw = 1.0;
};

struct AssociationRecord : AssociationTest {
  double p_adjusted = 1.0;
  bool positive = false;
  bool significant = false;
  /// Significant here while the factor is not significant for the same
  /// response in the single-cadre model.
  bool subpopulation_only = false;
};

enum class FdrFamily { pooled, per_response };

std::string to_string(FdrFamily family);
FdrFamily fdr_family_from_string(const std::string& name);

/// Adjusts every raw p-value (one family per study, or one per response),
/// marks records significant when adjusted p <= alpha and the coefficient is
/// positive, and flags subpopulation-only discoveries. Records come back
/// sorted by (risk factor, response, m, cadre). Duplicate keys throw.
std::vector<AssociationRecord> build_association_table(const std::vector<AssociationTest>& tests, double alpha,
                                                       FdrFamily family = FdrFamily::pooled);

}  // namespace scm
