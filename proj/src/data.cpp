#include "scm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace scm {

std::string to_string(Task task) { return task == Task::hyp ? "hyp" : "cbp"; }

Task task_from_string(const std::string& name) {
  if (name == "hyp") return Task::hyp;
  if (name == "cbp") return Task::cbp;
  throw DataError("unknown response type '" + name + "' (expected hyp or cbp)");
}

Index SurveyDataset::column_index(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) throw DataError("unknown column '" + name + "'");
  return static_cast<Index>(it - column_names.begin());
}

SurveyDataset SurveyDataset::subset(const std::vector<Index>& idx) const {
  SurveyDataset out;
  const auto n = static_cast<Index>(idx.size());
  out.features.resize(n, cols());
  out.responses.resize(n, responses.cols());
  out.weights.resize(n);
  out.strata.resize(idx.size());
  out.varunits.resize(idx.size());
  for (Index i = 0; i < n; ++i) {
    const Index r = idx[static_cast<std::size_t>(i)];
    out.features.row(i) = features.row(r);
    out.responses.row(i) = responses.row(r);
    out.weights[i] = weights[r];
    out.strata[static_cast<std::size_t>(i)] = strata[static_cast<std::size_t>(r)];
    out.varunits[static_cast<std::size_t>(i)] = varunits[static_cast<std::size_t>(r)];
  }
  out.column_names = column_names;
  out.response_names = response_names;
  out.task = task;
  return out;
}

std::vector<Index> VariableRoles::target_idx() const {
  std::vector<Index> out;
  out.reserve(controls.size() + 1);
  out.push_back(risk_factor);
  out.insert(out.end(), controls.begin(), controls.end());
  return out;
}

VariableRoles VariableRoles::make(const SurveyDataset& data,
                                  const std::vector<std::string>& control_names,
                                  const std::string& risk_factor_name) {
  VariableRoles roles;
  roles.risk_factor = data.column_index(risk_factor_name);
  for (const auto& name : control_names) {
    const Index c = data.column_index(name);
    if (c == roles.risk_factor)
      throw DataError("risk factor '" + risk_factor_name + "' is also listed as a control");
    roles.controls.push_back(c);
  }
  return roles;
}

SurveyDataset log_transform_exposures(const SurveyDataset& data,
                                      const std::vector<Index>& exposure_cols,
                                      std::vector<LogTransformRecord>* record) {
  SurveyDataset out = data;
  for (Index c : exposure_cols) {
    const std::string& name = data.column_names[static_cast<std::size_t>(c)];
    auto col = out.features.col(c);
    double min_pos = std::numeric_limits<double>::infinity();
    bool has_zero = false;
    for (Index i = 0; i < col.size(); ++i) {
      const double v = col[i];
      if (std::isnan(v)) continue;
      if (v < 0.0) throw DataError("negative exposure value in column '" + name + "'");
      if (v == 0.0)
        has_zero = true;
      else
        min_pos = std::min(min_pos, v);
    }
    if (!std::isfinite(min_pos)) throw DataError("exposure column '" + name + "' has no positive values");
    const double eps = has_zero ? 0.5 * min_pos : 0.0;
    for (Index i = 0; i < col.size(); ++i) {
      if (!std::isnan(col[i])) col[i] = std::log(col[i] + eps);
    }
    if (record) record->push_back({name, eps});
  }
  return out;
}

namespace {

// Sample mean and sd over finite entries.
std::pair<double, double> column_moments(const Eigen::Ref<const VectorXd>& v) {
  double sum = 0.0;
  Index n = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      sum += v[i];
      ++n;
    }
  }
  if (n == 0) return {0.0, 1.0};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) ss += (v[i] - mean) * (v[i] - mean);
  }
  double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  if (!(sd > 0.0)) sd = 1.0;
  return {mean, sd};
}

}  // namespace

std::pair<SurveyDataset, StandardizerState> standardize_fit_apply(
    const SurveyDataset& data, const std::vector<Index>& cols, bool include_response) {
  SurveyDataset out = data;
  StandardizerState state;
  state.columns = cols;
  state.mean.resize(static_cast<Index>(cols.size()));
  state.scale.resize(static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    auto [mean, sd] = column_moments(data.features.col(cols[k]));
    state.mean[static_cast<Index>(k)] = mean;
    state.scale[static_cast<Index>(k)] = sd;
    out.features.col(cols[k]) = (data.features.col(cols[k]).array() - mean) / sd;
  }
  state.responses_standardized = include_response;
  if (include_response) {
    const Index py = data.responses.cols();
    state.response_mean.resize(py);
    state.response_scale.resize(py);
    for (Index j = 0; j < py; ++j) {
      auto [mean, sd] = column_moments(data.responses.col(j));
      state.response_mean[j] = mean;
      state.response_scale[j] = sd;
      out.responses.col(j) = (data.responses.col(j).array() - mean) / sd;
    }
  }
  return {std::move(out), std::move(state)};
}

SurveyDataset StandardizerState::invert(const SurveyDataset& data) const {
  SurveyDataset out = data;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto kk = static_cast<Index>(k);
    out.features.col(columns[k]) = data.features.col(columns[k]).array() * scale[kk] + mean[kk];
  }
  if (responses_standardized) {
    for (Index j = 0; j < data.responses.cols(); ++j)
      out.responses.col(j) = data.responses.col(j).array() * response_scale[j] + response_mean[j];
  }
  return out;
}

bool is_binary_indicator(const SurveyDataset& data, Index col) {
  const auto v = data.features.col(col);
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) continue;
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  }
  return true;
}

std::vector<std::string> validate_dataset(const SurveyDataset& data, const VariableRoles& roles) {
  std::vector<std::string> out;
  const Index n = data.rows();
  auto row_mismatch = [&](std::size_t len, const char* what) {
    if (static_cast<Index>(len) != n)
      out.push_back(std::string(what) + " length " + std::to_string(len) + " != rows " + std::to_string(n));
  };
  row_mismatch(static_cast<std::size_t>(data.responses.rows()), "responses");
  row_mismatch(static_cast<std::size_t>(data.weights.size()), "weights");
  row_mismatch(data.strata.size(), "strata");
  row_mismatch(data.varunits.size(), "varunits");
  if (!out.empty()) return out;

  std::vector<Index> checked;
  if (roles.risk_factor >= 0) {
    checked = roles.target_idx();
  } else {
    for (Index c = 0; c < data.cols(); ++c) checked.push_back(c);
  }
  for (Index c : checked) {
    if (c < 0 || c >= data.cols()) {
      out.push_back("column index " + std::to_string(c) + " out of range");
      continue;
    }
    for (Index i = 0; i < n; ++i) {
      if (!std::isfinite(data.features(i, c)))
        out.push_back("non-finite value in '" + data.column_names[static_cast<std::size_t>(c)] + "' @" +
                      std::to_string(i));
    }
  }
  for (Index i = 0; i < n; ++i) {
    const double w = data.weights[i];
    if (!std::isfinite(w) || w <= 0.0) out.push_back("nonpositive weight @" + std::to_string(i));
    for (Index j = 0; j < data.responses.cols(); ++j) {
      const double y = data.responses(i, j);
      if (!std::isfinite(y)) {
        out.push_back("non-finite response @" + std::to_string(i));
      } else if (data.task == Task::hyp && y != 1.0 && y != -1.0) {
        out.push_back("label not in {-1,+1} @" + std::to_string(i));
      }
    }
  }
  if (data.task == Task::hyp && data.responses.cols() != 1)
    out.push_back("hyp task needs exactly one response column");
  if (data.task == Task::cbp && data.responses.cols() != 2)
    out.push_back("cbp task needs exactly two response columns");

  std::map<int, std::set<int>> units;
  for (std::size_t i = 0; i < data.strata.size(); ++i) units[data.strata[i]].insert(data.varunits[i]);
  for (const auto& [h, u] : units) {
    if (u.empty()) out.push_back("empty stratum " + std::to_string(h));
  }
  return out;
}

namespace {

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& col) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": column '" + col + "' is not numeric: '" + cell + "'");
  }
}

}  // namespace

SurveyDataset read_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  const auto header = parse_csv_line(line);

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("'" + path + "' has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t wcol = find_col(schema.weight_col);
  const std::size_t scol = find_col(schema.stratum_col);
  const std::size_t vcol = find_col(schema.varunit_col);
  std::vector<std::size_t> rcols;
  for (const auto& r : schema.response_cols) rcols.push_back(find_col(r));

  std::vector<std::size_t> fcols;
  SurveyDataset data;
  data.task = schema.task;
  data.response_names = schema.response_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == wcol || j == scol || j == vcol) continue;
    if (std::find(rcols.begin(), rcols.end(), j) != rcols.end()) continue;
    fcols.push_back(j);
    data.column_names.push_back(header[j]);
  }

  std::vector<std::vector<double>> feat, resp;
  std::vector<double> weights;
  std::map<std::string, int> strata_codes;
  std::map<std::pair<int, std::string>, int> unit_codes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = parse_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    std::vector<double> f;
    f.reserve(fcols.size());
    for (std::size_t j : fcols) f.push_back(parse_cell(cells[j], line_no, header[j]));
    std::vector<double> r;
    for (std::size_t j : rcols) r.push_back(parse_cell(cells[j], line_no, header[j]));
    feat.push_back(std::move(f));
    resp.push_back(std::move(r));
    weights.push_back(parse_cell(cells[wcol], line_no, header[wcol]));
    auto [sit, _] = strata_codes.emplace(cells[scol], static_cast<int>(strata_codes.size()));
    data.strata.push_back(sit->second);
    auto [uit, __] = unit_codes.emplace(std::make_pair(sit->second, cells[vcol]), static_cast<int>(unit_codes.size()));
    data.varunits.push_back(uit->second);
  }

  const auto n = static_cast<Index>(feat.size());
  data.features.resize(n, static_cast<Index>(fcols.size()));
  data.responses.resize(n, static_cast<Index>(rcols.size()));
  data.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < fcols.size(); ++j) data.features(i, static_cast<Index>(j)) = feat[ii][j];
    for (std::size_t j = 0; j < rcols.size(); ++j) data.responses(i, static_cast<Index>(j)) = resp[ii][j];
    data.weights[i] = weights[ii];
  }
  return data;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

void write_csv(const std::string& path, const SurveyDataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << std::setprecision(17);
  out << "weight,stratum,varunit";
  for (const auto& r : data.response_names) out << ',' << csv_field(r);
  for (const auto& c : data.column_names) out << ',' << csv_field(c);
  out << '\n';
  for (Index i = 0; i < data.rows(); ++i) {
    const auto ii = static_cast<std::size_t>(i);
    out << data.weights[i] << ',' << data.strata[ii] << ',' << data.varunits[ii];
    for (Index j = 0; j < data.responses.cols(); ++j) out << ',' << data.responses(i, j);
    for (Index j = 0; j < data.cols(); ++j) {
      out << ',';
      if (std::isfinite(data.features(i, j))) out << data.features(i, j);
    }
    out << '\n';
  }
}

}  // namespace scm
