#pragma once

#include "scm/data.hpp"
#include "scm/glm.hpp"
#include "scm/inference.hpp"
#include "scm/select.hpp"
#include "scm/serialize.hpp"
#include "scm/train.hpp"

#include <map>
#include <string>
#include <vector>

namespace scm {

/// Study definition, usually read from a JSON file (see README for the
/// schema). Categories group exposures measured on the same subjects.
struct StudyConfig {
  Task response = Task::cbp;
  std::vector<std::string> response_cols{"sbp", "dbp"};
  std::vector<std::string> control_cols;
  std::map<std::string, std::vector<std::string>> categories;
  SelectionConfig selection;
  TrainConfig train;
  double alpha = 0.02;
  FdrFamily fdr_family = FdrFamily::pooled;
  bool design_df = false;  // t reference with (varunits - strata) df in the cadre GLMs
  std::string output_dir;
  int parallelism = 1;
  std::string weight_col = "weight";
  std::string stratum_col = "stratum";
  std::string varunit_col = "varunit";

  void check() const;
  CsvSchema schema() const;
  /// Category holding `risk_factor`; throws when it is not configured.
  std::string category_of(const std::string& risk_factor) const;
};

StudyConfig study_config_from_json(const Json& j);
Json study_config_to_json(const StudyConfig& cfg);

/// Subjects measured for a category after log-transforming its exposures and
/// standardizing the non-binary controls and exposures (and the responses
/// for the continuous task).
struct PreparedCategory {
  std::string name;
  SurveyDataset data;
  std::vector<Index> source_rows;
  std::vector<LogTransformRecord> log_transforms;
  std::map<std::string, std::string> column_errors;  // exposures that could not be transformed
  StandardizerState standardizer;
};

PreparedCategory prepare_category(const StudyConfig& cfg, const SurveyDataset& data, const std::string& category);

struct GlmOutcome {
  int m = 1;
  int cadre = 1;  // one-based
  std::string response;
  GlmFit fit;
};

struct FactorOutcome {
  std::string category;
  std::string risk_factor;
  std::map<int, SelectedModel> selection;
  std::vector<GlmOutcome> glms;
  std::vector<std::string> errors;
};

struct EwasResult {
  StudyConfig config;
  std::vector<FactorOutcome> factors;  // by category, then configured order
  std::vector<AssociationRecord> table;
  std::map<std::string, PreparedCategory> categories;
};

/// GLMs for every cadre of an admissible model, one per response column.
/// Risk factor first among the covariates, controls after. Cadres whose GLM
/// cannot be fit are skipped with a message appended to `errors`.
std::vector<GlmOutcome> fit_cadre_glms(const SurveyDataset& data, const StudyConfig& cfg,
                                       const std::string& risk_factor, const SelectedModel& model,
                                       std::vector<std::string>& errors);

/// Risk-factor coefficient tests from a factor's GLMs.
std::vector<AssociationTest> association_tests(const FactorOutcome& outcome);

/// Model selection and per-cadre GLMs for every configured risk factor, then
/// one multiple-testing correction over the pooled p-values. Work items are
/// (factor, M, grid point) triples; results are keyed, so the output does not
/// depend on `cfg.parallelism`. Failures stay confined to their factor.
EwasResult run_ewas(const StudyConfig& cfg, const SurveyDataset& data);

struct CadreSummary {
  std::string risk_factor;
  int m = 1;
  int cadre = 1;
  int size = 0;
  double weight_share = 0.0;
  std::vector<double> control_means;  // survey-weighted, original units
};

struct ModelWeights {
  std::string risk_factor;
  int m = 2;
  std::vector<double> d;
};

/// Everything the report files are written from.
struct ReportData {
  std::vector<std::string> control_names;
  std::vector<AssociationRecord> records;
  std::vector<ModelWeights> cadre_weights;  // significant models with M >= 2
  std::vector<CadreSummary> summaries;
};

ReportData build_report(const EwasResult& result);
Json report_to_json(const ReportData& report);
ReportData report_from_json(const Json& j);

/// Writes association.csv/json, forest.csv (coefficient +/- 1.96 SE of the
/// significant records), cadre_weights.csv and cadre_summary.csv.
void emit_report(const ReportData& report, const std::string& dir);

/// emit_report plus run.json, selection/<factor>.json and
/// models/<factor>_M<m>.json.
void write_run_artifacts(const EwasResult& result, const std::string& dir);

/// Fixed-precision number formatting used in every CSV.
std::string format_number(double v);

}  // namespace scm
