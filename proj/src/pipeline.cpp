#include "scm/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace scm {

namespace fs = std::filesystem;

void StudyConfig::check() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("study config: alpha must lie in (0,1)");
  if (response == Task::cbp && response_cols.size() != 2)
    throw std::invalid_argument("study config: cbp needs two response columns");
  if (response == Task::hyp && response_cols.size() != 1)
    throw std::invalid_argument("study config: hyp needs one response column");
  if (parallelism < 1) throw std::invalid_argument("study config: parallelism must be positive");
  const std::set<std::string> controls(control_cols.begin(), control_cols.end());
  std::set<std::string> seen;
  for (const auto& [name, cols] : categories) {
    for (const auto& c : cols) {
      if (controls.contains(c))
        throw std::invalid_argument("study config: '" + c + "' is both a control and a risk factor");
      if (!seen.insert(c).second)
        throw std::invalid_argument("study config: risk factor '" + c + "' appears in two categories");
    }
  }
  selection.check();
  train.check();
}

CsvSchema StudyConfig::schema() const {
  CsvSchema s;
  s.response_cols = response_cols;
  s.task = response;
  s.weight_col = weight_col;
  s.stratum_col = stratum_col;
  s.varunit_col = varunit_col;
  return s;
}

std::string StudyConfig::category_of(const std::string& risk_factor) const {
  for (const auto& [name, cols] : categories)
    if (std::find(cols.begin(), cols.end(), risk_factor) != cols.end()) return name;
  throw std::invalid_argument("risk factor '" + risk_factor + "' is not in any configured category");
}

StudyConfig study_config_from_json(const Json& j) {
  StudyConfig c;
  if (j.contains("response")) c.response = task_from_string(j["response"].get<std::string>());
  if (j.contains("response_cols"))
    c.response_cols = j["response_cols"].get<std::vector<std::string>>();
  else if (c.response == Task::hyp)
    c.response_cols = {"hyp"};
  c.control_cols = j.value("control_cols", std::vector<std::string>{});
  if (j.contains("categories"))
    c.categories = j["categories"].get<std::map<std::string, std::vector<std::string>>>();
  if (j.contains("selection")) c.selection = selection_config_from_json(j["selection"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("fdr_family")) c.fdr_family = fdr_family_from_string(j["fdr_family"].get<std::string>());
  c.output_dir = j.value("output_dir", c.output_dir);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.design_df = j.value("design_df", c.design_df);
  c.weight_col = j.value("weight_col", c.weight_col);
  c.stratum_col = j.value("stratum_col", c.stratum_col);
  c.varunit_col = j.value("varunit_col", c.varunit_col);
  c.check();
  return c;
}

Json study_config_to_json(const StudyConfig& c) {
  return Json{{"response", to_string(c.response)},
              {"response_cols", c.response_cols},
              {"control_cols", c.control_cols},
              {"categories", c.categories},
              {"selection", selection_config_to_json(c.selection)},
              {"train", train_config_to_json(c.train)},
              {"alpha", c.alpha},
              {"fdr_family", to_string(c.fdr_family)},
              {"output_dir", c.output_dir},
              {"parallelism", c.parallelism},
              {"design_df", c.design_df},
              {"weight_col", c.weight_col},
              {"stratum_col", c.stratum_col},
              {"varunit_col", c.varunit_col}};
}

PreparedCategory prepare_category(const StudyConfig& cfg, const SurveyDataset& data, const std::string& category) {
  auto it = cfg.categories.find(category);
  if (it == cfg.categories.end()) throw std::invalid_argument("unknown category '" + category + "'");
  PreparedCategory out;
  out.name = category;

  std::vector<Index> controls, exposures;
  for (const auto& c : cfg.control_cols) controls.push_back(data.column_index(c));
  for (const auto& c : it->second) exposures.push_back(data.column_index(c));

  // Subjects measured on every control and exposure of the category.
  for (Index i = 0; i < data.rows(); ++i) {
    bool ok = data.responses.row(i).allFinite();
    for (Index c : controls) ok = ok && !std::isnan(data.features(i, c));
    for (Index c : exposures) ok = ok && !std::isnan(data.features(i, c));
    if (ok) out.source_rows.push_back(i);
  }
  out.data = data.subset(out.source_rows);

  std::vector<Index> transformed;
  for (Index c : exposures) {
    try {
      std::vector<LogTransformRecord> rec;
      out.data = log_transform_exposures(out.data, {c}, &rec);
      out.log_transforms.insert(out.log_transforms.end(), rec.begin(), rec.end());
      transformed.push_back(c);
    } catch (const DataError& e) {
      out.column_errors[data.column_names[static_cast<std::size_t>(c)]] = e.what();
    }
  }

  std::vector<Index> scaled;
  for (Index c : controls)
    if (!is_binary_indicator(out.data, c)) scaled.push_back(c);
  for (Index c : transformed)
    if (!is_binary_indicator(out.data, c)) scaled.push_back(c);
  auto [standardized, state] = standardize_fit_apply(out.data, scaled, cfg.response == Task::cbp);
  out.data = std::move(standardized);
  out.standardizer = std::move(state);
  return out;
}

std::vector<GlmOutcome> fit_cadre_glms(const SurveyDataset& data, const StudyConfig& cfg,
                                       const std::string& risk_factor, const SelectedModel& model,
                                       std::vector<std::string>& errors) {
  std::vector<GlmOutcome> out;
  if (!model.admissible) return out;
  GlmSpec spec;
  spec.family = cfg.response == Task::hyp ? GlmFamily::logistic : GlmFamily::linear;
  spec.covariate_cols.push_back(risk_factor);
  spec.covariate_cols.insert(spec.covariate_cols.end(), cfg.control_cols.begin(), cfg.control_cols.end());
  spec.cadre_labels = model.fitted->assignment.hard_labels;
  spec.design_df = cfg.design_df;
  for (int c = 0; c < model.m; ++c) {
    spec.cadre = c;
    for (const auto& response : data.response_names) {
      spec.response_col = response;
      try {
        out.push_back({model.m, c + 1, response, fit_weighted_glm(data, spec)});
      } catch (const std::exception& e) {
        errors.push_back("GLM M=" + std::to_string(model.m) + " cadre " + std::to_string(c + 1) + " " + response +
                         ": " + e.what());
      }
    }
  }
  return out;
}

std::vector<AssociationTest> association_tests(const FactorOutcome& outcome) {
  std::vector<AssociationTest> out;
  for (const auto& g : outcome.glms) {
    const Index k = g.fit.index_of(outcome.risk_factor);
    AssociationTest t;
    t.risk_factor = outcome.risk_factor;
    t.response = g.response;
    t.m = g.m;
    t.cadre = g.cadre;
    t.coefficient = g.fit.coefficients[k];
    t.std_error = g.fit.std_errors[k];
    t.p_raw = g.fit.p_values[k];
    out.push_back(t);
  }
  return out;
}

EwasResult run_ewas(const StudyConfig& cfg, const SurveyDataset& data) {
  cfg.check();
  EwasResult result;
  result.config = cfg;

  struct FactorWork {
    const SurveyDataset* data = nullptr;
    VariableRoles roles;
    bool ready = false;
  };
  std::vector<FactorWork> work;

  for (const auto& [category, factors] : cfg.categories) {
    std::optional<PreparedCategory> prepared;
    std::string category_error;
    try {
      prepared = prepare_category(cfg, data, category);
    } catch (const std::exception& e) {
      category_error = e.what();
    }
    if (prepared) result.categories.emplace(category, std::move(*prepared));
    for (const auto& factor : factors) {
      FactorOutcome fo;
      fo.category = category;
      fo.risk_factor = factor;
      FactorWork fw;
      if (!category_error.empty()) {
        fo.errors.push_back("category preparation failed: " + category_error);
      } else {
        const PreparedCategory& pc = result.categories.at(category);
        if (auto bad = pc.column_errors.find(factor); bad != pc.column_errors.end()) {
          fo.errors.push_back(bad->second);
        } else {
          try {
            fw.roles = VariableRoles::make(pc.data, cfg.control_cols, factor);
            const auto violations = validate_dataset(pc.data, fw.roles);
            if (violations.empty()) {
              fw.data = &pc.data;
              fw.ready = true;
            } else {
              fo.errors.push_back("invalid data: " + violations.front() + " (" + std::to_string(violations.size()) +
                                  " violations)");
            }
          } catch (const std::exception& e) {
            fo.errors.push_back(e.what());
          }
        }
      }
      result.factors.push_back(std::move(fo));
      work.push_back(std::move(fw));
    }
  }

  // Flat (factor, M, grid point) work list.
  const std::size_t grid = cfg.selection.lambda_grid.size();
  const std::size_t per_factor = cfg.selection.m_values.size() * grid;
  std::vector<std::size_t> items;
  for (std::size_t f = 0; f < work.size(); ++f)
    if (work[f].ready)
      for (std::size_t k = 0; k < per_factor; ++k) items.push_back(f * per_factor + k);
  std::vector<Candidate> candidates(work.size() * per_factor);

#pragma omp parallel for schedule(dynamic) num_threads(cfg.parallelism)
  for (std::size_t it = 0; it < items.size(); ++it) {
    const std::size_t f = items[it] / per_factor;
    const std::size_t k = items[it] % per_factor;
    const int m = cfg.selection.m_values[k / grid];
    const auto [ld, lw] = cfg.selection.lambda_grid[k % grid];
    candidates[items[it]] = evaluate_candidate(*work[f].data, work[f].roles, cfg.selection, cfg.train, m, ld, lw);
  }

  std::vector<AssociationTest> tests;
  for (std::size_t f = 0; f < work.size(); ++f) {
    if (!work[f].ready) continue;
    FactorOutcome& fo = result.factors[f];
    try {
      std::vector<Candidate> mine(std::make_move_iterator(candidates.begin() + static_cast<std::ptrdiff_t>(f * per_factor)),
                                  std::make_move_iterator(candidates.begin() + static_cast<std::ptrdiff_t>((f + 1) * per_factor)));
      fo.selection = aggregate_candidates(cfg.selection, std::move(mine));
      for (const auto& [m, sel] : fo.selection) {
        if (!sel.admissible) {
          fo.errors.push_back("M=" + std::to_string(m) + ": no admissible model (" + sel.rejected_reason.value_or("") + ")");
          continue;
        }
        auto glms = fit_cadre_glms(*work[f].data, cfg, fo.risk_factor, sel, fo.errors);
        fo.glms.insert(fo.glms.end(), std::make_move_iterator(glms.begin()), std::make_move_iterator(glms.end()));
      }
      const auto t = association_tests(fo);
      tests.insert(tests.end(), t.begin(), t.end());
    } catch (const std::exception& e) {
      fo.errors.push_back(e.what());
    }
  }
  result.table = build_association_table(tests, cfg.alpha, cfg.fdr_family);
  return result;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

ReportData build_report(const EwasResult& result) {
  ReportData report;
  report.control_names = result.config.control_cols;
  report.records = result.table;

  std::set<std::pair<std::string, int>> significant_models;
  for (const auto& r : result.table)
    if (r.significant) significant_models.emplace(r.risk_factor, r.m);

  for (const auto& fo : result.factors) {
    auto cat = result.categories.find(fo.category);
    for (const auto& [m, sel] : fo.selection) {
      if (!sel.admissible) continue;
      const ScmParams& params = sel.fitted->train.params;
      if (m >= 2 && significant_models.contains({fo.risk_factor, m})) {
        ModelWeights w{fo.risk_factor, m, std::vector<double>(params.d.data(), params.d.data() + params.d.size())};
        report.cadre_weights.push_back(std::move(w));
      }
      if (cat == result.categories.end()) continue;
      const PreparedCategory& pc = cat->second;
      const auto& labels = sel.fitted->assignment.hard_labels;
      const double total_weight = pc.data.weights.sum();
      for (int c = 0; c < m; ++c) {
        CadreSummary s;
        s.risk_factor = fo.risk_factor;
        s.m = m;
        s.cadre = c + 1;
        double wsum = 0.0;
        std::vector<double> sums(result.config.control_cols.size(), 0.0);
        for (Index i = 0; i < pc.data.rows(); ++i) {
          if (labels[static_cast<std::size_t>(i)] != c) continue;
          ++s.size;
          const double w = pc.data.weights[i];
          wsum += w;
          for (std::size_t k = 0; k < sums.size(); ++k)
            sums[k] += w * pc.data.features(i, pc.data.column_index(result.config.control_cols[k]));
        }
        s.weight_share = total_weight > 0.0 ? wsum / total_weight : 0.0;
        for (std::size_t k = 0; k < sums.size(); ++k) {
          double mean = wsum > 0.0 ? sums[k] / wsum : std::nan("");
          const Index col = pc.data.column_index(result.config.control_cols[k]);
          const auto& cols = pc.standardizer.columns;
          if (auto pos = std::find(cols.begin(), cols.end(), col); pos != cols.end()) {
            const auto j = static_cast<Index>(pos - cols.begin());
            mean = mean * pc.standardizer.scale[j] + pc.standardizer.mean[j];
          }
          s.control_means.push_back(mean);
        }
        report.summaries.push_back(std::move(s));
      }
    }
  }
  return report;
}

Json report_to_json(const ReportData& r) {
  Json records = Json::array();
  for (const auto& rec : r.records) records.push_back(record_to_json(rec));
  Json weights = Json::array();
  for (const auto& w : r.cadre_weights) weights.push_back({{"risk_factor", w.risk_factor}, {"m", w.m}, {"d", w.d}});
  Json summaries = Json::array();
  for (const auto& s : r.summaries) {
    Json means = Json::array();
    for (double v : s.control_means) means.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    summaries.push_back({{"risk_factor", s.risk_factor},
                         {"m", s.m},
                         {"cadre", s.cadre},
                         {"size", s.size},
                         {"weight_share", s.weight_share},
                         {"control_means", means}});
  }
  return Json{{"control_names", r.control_names},
              {"records", records},
              {"cadre_weights", weights},
              {"summaries", summaries}};
}

ReportData report_from_json(const Json& j) {
  ReportData r;
  r.control_names = j.at("control_names").get<std::vector<std::string>>();
  for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));
  for (const auto& w : j.at("cadre_weights"))
    r.cadre_weights.push_back({w.at("risk_factor").get<std::string>(), w.at("m").get<int>(),
                               w.at("d").get<std::vector<double>>()});
  for (const auto& s : j.at("summaries")) {
    CadreSummary c;
    c.risk_factor = s.at("risk_factor").get<std::string>();
    c.m = s.at("m").get<int>();
    c.cadre = s.at("cadre").get<int>();
    c.size = s.at("size").get<int>();
    c.weight_share = s.at("weight_share").get<double>();
    for (const auto& v : s.at("control_means")) c.control_means.push_back(v.is_null() ? std::nan("") : v.get<double>());
    r.summaries.push_back(std::move(c));
  }
  return r;
}

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
}

std::string file_stem(const std::string& name) {
  std::string out = name;
  for (char& ch : out)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) ch = '_';
  return out;
}

const char* flag(bool b) { return b ? "true" : "false"; }

}  // namespace

void emit_report(const ReportData& report, const std::string& dir) {
  const fs::path root(dir);
  ensure_dir(root);
  {
    auto out = open_output(root / "association.csv");
    out << "risk_factor,response,m,cadre,coefficient,std_error,p_raw,p_adjusted,positive,significant,"
           "subpopulation_only\n";
    for (const auto& r : report.records) {
      out << csv_field(r.risk_factor) << ',' << csv_field(r.response) << ',' << r.m << ',' << r.cadre << ',' << format_number(r.coefficient)
          << ',' << format_number(r.std_error) << ',' << format_number(r.p_raw) << ','
          << format_number(r.p_adjusted) << ',' << flag(r.positive) << ',' << flag(r.significant) << ','
          << flag(r.subpopulation_only) << '\n';
    }
  }
  {
    Json arr = Json::array();
    for (const auto& r : report.records) arr.push_back(record_to_json(r));
    open_output(root / "association.json") << arr.dump(2) << '\n';
  }
  {
    auto out = open_output(root / "forest.csv");
    out << "risk_factor,response,m,cadre,coefficient,ci_low,ci_high,p_adjusted,subpopulation_only\n";
    for (const auto& r : report.records) {
      if (!r.significant) continue;
      out << csv_field(r.risk_factor) << ',' << csv_field(r.response) << ',' << r.m << ',' << r.cadre << ',' << format_number(r.coefficient)
          << ',' << format_number(r.coefficient - 1.96 * r.std_error) << ','
          << format_number(r.coefficient + 1.96 * r.std_error) << ',' << format_number(r.p_adjusted) << ','
          << flag(r.subpopulation_only) << '\n';
    }
  }
  {
    auto out = open_output(root / "cadre_weights.csv");
    out << "feature";
    for (const auto& w : report.cadre_weights) out << ',' << csv_field(w.risk_factor + ":M" + std::to_string(w.m));
    out << '\n';
    if (!report.cadre_weights.empty()) {
      for (std::size_t p = 0; p < report.control_names.size(); ++p) {
        out << csv_field(report.control_names[p]);
        for (const auto& w : report.cadre_weights) out << ',' << format_number(w.d[p]);
        out << '\n';
      }
    }
  }
  {
    auto out = open_output(root / "cadre_summary.csv");
    out << "risk_factor,m,cadre,size,weight_share";
    for (const auto& c : report.control_names) out << ',' << csv_field("mean_" + c);
    out << '\n';
    for (const auto& s : report.summaries) {
      out << csv_field(s.risk_factor) << ',' << s.m << ',' << s.cadre << ',' << s.size << ',' << format_number(s.weight_share);
      for (double v : s.control_means) out << ',' << format_number(v);
      out << '\n';
    }
  }
}

void write_run_artifacts(const EwasResult& result, const std::string& dir) {
  const fs::path root(dir);
  const ReportData report = build_report(result);
  emit_report(report, dir);
  ensure_dir(root / "selection");
  ensure_dir(root / "models");

  Json factors = Json::array();
  for (const auto& fo : result.factors) {
    const auto stem = file_stem(fo.risk_factor);
    open_output(root / "selection" / (stem + ".json"))
        << Json{{"risk_factor", fo.risk_factor}, {"category", fo.category}, {"selection", selection_to_json(fo.selection)}}.dump(2)
        << '\n';
    Json selected = Json::object();
    for (const auto& [m, sel] : fo.selection) {
      if (!sel.admissible) continue;
      Json glms = Json::array();
      for (const auto& g : fo.glms)
        if (g.m == m) glms.push_back({{"cadre", g.cadre}, {"response", g.response}, {"fit", glm_fit_to_json(g.fit)}});
      Json model{{"risk_factor", fo.risk_factor},
                 {"m", m},
                 {"lambda_d", sel.lambda_d},
                 {"lambda_w", sel.lambda_w},
                 {"bic", sel.bic},
                 {"cadre_columns", result.config.control_cols},
                 {"params", params_to_json(sel.fitted->train.params)},
                 {"glms", glms}};
      Json target = Json::array({fo.risk_factor});
      for (const auto& c : result.config.control_cols) target.push_back(c);
      model["target_columns"] = target;
      open_output(root / "models" / (stem + "_M" + std::to_string(m) + ".json")) << model.dump(2) << '\n';
      selected[std::to_string(m)] = sel.bic;
    }
    factors.push_back({{"risk_factor", fo.risk_factor},
                       {"category", fo.category},
                       {"selected_bic", selected},
                       {"errors", fo.errors}});
  }

  Json transforms = Json::array();
  for (const auto& [name, pc] : result.categories) {
    for (const auto& t : pc.log_transforms)
      transforms.push_back({{"category", name}, {"column", t.column}, {"epsilon", t.epsilon}});
  }
  Json run{{"config", study_config_to_json(result.config)},
           {"factors", factors},
           {"log_transforms", transforms},
           {"report", report_to_json(report)}};
  open_output(root / "run.json") << run.dump(2) << '\n';
}

}  // namespace scm
