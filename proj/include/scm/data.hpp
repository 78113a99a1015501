#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace scm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Response type of a study: binary hypertension (labels in {-1,+1}) or the
/// two-dimensional continuous blood pressure vector.
enum class Task { hyp, cbp };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Subjects in rows. Strata and variance units are integer codes; the CSV
/// reader maps arbitrary labels onto them in order of first appearance.
struct SurveyDataset {
  MatrixXd features;   // N x P
  MatrixXd responses;  // N x P_Y
  VectorXd weights;    // N, survey weights
  std::vector<int> strata;
  std::vector<int> varunits;
  std::vector<std::string> column_names;
  std::vector<std::string> response_names;
  Task task = Task::cbp;

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }
  Index column_index(const std::string& name) const;

  /// Copy of the rows listed in `idx`, in that order.
  SurveyDataset subset(const std::vector<Index>& idx) const;
};

/// Column roles for one risk factor: controls form the cadre-assignment set,
/// controls plus the risk factor form the expert (target) set.
struct VariableRoles {
  std::vector<Index> controls;
  Index risk_factor = -1;

  const std::vector<Index>& cadre_idx() const { return controls; }
  /// Risk factor first, then controls.
  std::vector<Index> target_idx() const;

  static VariableRoles make(const SurveyDataset& data,
                            const std::vector<std::string>& control_names,
                            const std::string& risk_factor_name);
};

struct LogTransformRecord {
  std::string column;
  double epsilon = 0.0;
};

/// ln(x + eps) per exposure column, eps = 0 for strictly positive columns,
/// otherwise half the smallest positive value. Throws DataError on negative
/// values or all-zero columns.
SurveyDataset log_transform_exposures(const SurveyDataset& data,
                                      const std::vector<Index>& exposure_cols,
                                      std::vector<LogTransformRecord>* record = nullptr);

struct StandardizerState {
  std::vector<Index> columns;
  VectorXd mean;
  VectorXd scale;
  bool responses_standardized = false;
  VectorXd response_mean;
  VectorXd response_scale;

  /// Inverts the transform on feature matrix columns (and responses if they
  /// were standardized).
  SurveyDataset invert(const SurveyDataset& data) const;
};

/// Unweighted mean-centering and scaling by the sample standard deviation.
/// Constant columns are centered and keep scale 1.
std::pair<SurveyDataset, StandardizerState> standardize_fit_apply(
    const SurveyDataset& data, const std::vector<Index>& cols, bool include_response);

/// Columns whose finite values are all 0 or 1.
bool is_binary_indicator(const SurveyDataset& data, Index col);

/// Human-readable violations, empty when the dataset is usable for `roles`.
/// Passing roles with risk_factor < 0 checks every column.
std::vector<std::string> validate_dataset(const SurveyDataset& data, const VariableRoles& roles);

struct CsvSchema {
  std::vector<std::string> response_cols;
  Task task = Task::cbp;
  std::string weight_col = "weight";
  std::string stratum_col = "stratum";
  std::string varunit_col = "varunit";
};

/// Empty cells and "NA" are read as NaN.
SurveyDataset read_csv(const std::string& path, const CsvSchema& schema);
void write_csv(const std::string& path, const SurveyDataset& data);

/// Splits one CSV line, honoring double-quoted cells.
std::vector<std::string> parse_csv_line(const std::string& line);

/// Quotes a CSV cell when it contains a comma, quote or newline.
std::string csv_field(const std::string& text);

}  // namespace scm
