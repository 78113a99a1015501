#include "scm/serialize.hpp"

#include <cmath>

namespace scm {

namespace {

Json flat(const MatrixXd& m) {
  Json out = Json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

Json flat(const VectorXd& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

MatrixXd matrix_from(const Json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows * cols)
    throw std::invalid_argument(std::string("params JSON: '") + what + "' has the wrong length");
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = j[static_cast<std::size_t>(i * cols + k)].get<double>();
  return m;
}

// NaN and infinities become null.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <typename T>
void maybe(const Json& j, const char* key, T& field) {
  if (j.contains(key) && !j[key].is_null()) field = j[key].get<T>();
}

}  // namespace

Json params_to_json(const ScmParams& p) {
  Json j;
  j["M"] = p.cadres();
  j["P_C"] = p.cadre_dim();
  j["P_T"] = p.target_dim();
  j["P_Y"] = p.response_dim();
  j["gamma"] = p.gamma;
  j["centers"] = flat(p.centers);
  j["d"] = flat(p.d);
  Json w = Json::array();
  for (const auto& wm : p.W) w.push_back(flat(wm));
  j["W"] = w;
  j["W0"] = flat(p.W0);
  j["sigma2"] = p.sigma2 ? flat(*p.sigma2) : Json(nullptr);
  return j;
}

ScmParams params_from_json(const Json& j) {
  const Index m = j.at("M").get<Index>();
  const Index pc = j.at("P_C").get<Index>();
  const Index pt = j.at("P_T").get<Index>();
  const Index py = j.at("P_Y").get<Index>();
  ScmParams p;
  p.gamma = j.at("gamma").get<double>();
  p.centers = matrix_from(j.at("centers"), m, pc, "centers");
  p.d = matrix_from(j.at("d"), pc, 1, "d");
  const Json& w = j.at("W");
  if (!w.is_array() || static_cast<Index>(w.size()) != m) throw std::invalid_argument("params JSON: 'W' needs M entries");
  for (const auto& wm : w) p.W.push_back(matrix_from(wm, pt, py, "W"));
  p.W0 = matrix_from(j.at("W0"), m, py, "W0");
  if (j.contains("sigma2") && !j["sigma2"].is_null()) p.sigma2 = VectorXd(matrix_from(j["sigma2"], py, 1, "sigma2"));
  p.check();
  return p;
}

Json train_config_to_json(const TrainConfig& c) {
  return Json{{"lambda_d", c.lambda_d},   {"lambda_w", c.lambda_w},     {"alpha_d", c.alpha_d},
              {"alpha_w", c.alpha_w},     {"gamma", c.gamma},           {"cadres", c.cadres},
              {"batch_size", c.batch_size}, {"max_steps", c.max_steps}, {"learning_rate", c.learning_rate},
              {"seed", c.seed},           {"tol", c.tol}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  maybe(j, "lambda_d", c.lambda_d);
  maybe(j, "lambda_w", c.lambda_w);
  maybe(j, "alpha_d", c.alpha_d);
  maybe(j, "alpha_w", c.alpha_w);
  maybe(j, "gamma", c.gamma);
  maybe(j, "cadres", c.cadres);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "max_steps", c.max_steps);
  maybe(j, "learning_rate", c.learning_rate);
  maybe(j, "seed", c.seed);
  maybe(j, "tol", c.tol);
  c.check();
  return c;
}

Json selection_config_to_json(const SelectionConfig& c) {
  Json grid = Json::array();
  for (const auto& [ld, lw] : c.lambda_grid) grid.push_back({ld, lw});
  return Json{{"m_values", c.m_values}, {"lambda_grid", grid}, {"entropy_cap", c.entropy_cap},
              {"gamma", c.gamma},       {"alpha", c.alpha},    {"restarts", c.restarts}};
}

SelectionConfig selection_config_from_json(const Json& j, SelectionConfig c) {
  maybe(j, "m_values", c.m_values);
  if (j.contains("lambda_grid")) {
    c.lambda_grid.clear();
    for (const auto& pair : j["lambda_grid"]) c.lambda_grid.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  } else if (j.contains("lambda_values")) {
    // Cartesian product of one list of strengths.
    const auto values = j["lambda_values"].get<std::vector<double>>();
    c.lambda_grid.clear();
    for (double ld : values)
      for (double lw : values) c.lambda_grid.emplace_back(ld, lw);
  }
  maybe(j, "entropy_cap", c.entropy_cap);
  maybe(j, "gamma", c.gamma);
  maybe(j, "alpha", c.alpha);
  maybe(j, "restarts", c.restarts);
  c.check();
  return c;
}

Json train_result_to_json(const TrainResult& r) {
  Json trace = Json::array();
  for (const auto& [step, v] : r.objective_trace) trace.push_back({step, number(v)});
  return Json{{"params", params_to_json(r.params)},
              {"final_objective", number(r.final_objective)},
              {"converged", r.converged},
              {"steps", r.steps},
              {"objective_trace", trace}};
}

TrainResult train_result_from_json(const Json& j) {
  TrainResult r;
  r.params = params_from_json(j.at("params"));
  r.final_objective = j.at("final_objective").get<double>();
  r.converged = j.value("converged", false);
  r.steps = j.value("steps", 0);
  for (const auto& e : j.at("objective_trace")) r.objective_trace.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
  return r;
}

Json selection_to_json(const std::map<int, SelectedModel>& selection) {
  Json out = Json::array();
  for (const auto& [m, sel] : selection) {
    Json entry{{"M", m}, {"admissible", sel.admissible}, {"bic", number(sel.bic)}};
    if (sel.admissible) {
      entry["lambda_d"] = sel.lambda_d;
      entry["lambda_w"] = sel.lambda_w;
      entry["params"] = params_to_json(sel.fitted->train.params);
    } else {
      entry["rejected_reason"] = sel.rejected_reason.value_or("");
    }
    Json cands = Json::array();
    for (const auto& c : sel.candidates) {
      Json cj{{"lambda_d", c.lambda_d}, {"lambda_w", c.lambda_w}, {"admissible", c.admissible}};
      if (!c.reason.empty()) cj["reason"] = c.reason;
      if (c.fit) {
        cj["bic"] = number(c.fit->bic);
        cj["effective_params"] = c.fit->effective_params;
        cj["final_objective"] = number(c.fit->train.final_objective);
        cj["converged"] = c.fit->train.converged;
        Json ent = Json::array();
        for (double h : c.fit->assignment.per_cadre_entropy) ent.push_back(number(h));
        cj["entropies"] = ent;
        cj["cadre_sizes"] = c.fit->assignment.cadre_sizes;
      }
      cands.push_back(cj);
    }
    entry["candidates"] = cands;
    out.push_back(entry);
  }
  return out;
}

Json glm_fit_to_json(const GlmFit& f) {
  Json coefs = Json::array();
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    const auto kk = static_cast<Index>(k);
    coefs.push_back({{"name", f.names[k]},
                     {"estimate", number(f.coefficients[kk])},
                     {"std_error", number(f.std_errors[kk])},
                     {"z", number(f.wald_z[kk])},
                     {"p_value", number(f.p_values[kk])}});
  }
  return Json{{"family", to_string(f.family)}, {"coefficients", coefs},  {"covariance", flat(f.covariance)},
              {"n_obs", f.n_obs},               {"n_strata", f.n_strata}, {"n_varunits", f.n_varunits},
              {"iterations", f.iterations},     {"converged", f.converged}, {"warnings", f.warnings}};
}

Json record_to_json(const AssociationRecord& r) {
  return Json{{"risk_factor", r.risk_factor}, {"response", r.response},
              {"m", r.m},                     {"cadre", r.cadre},
              {"coefficient", number(r.coefficient)}, {"std_error", number(r.std_error)},
              {"p_raw", number(r.p_raw)},     {"p_adjusted", number(r.p_adjusted)},
              {"positive", r.positive},       {"significant", r.significant},
              {"subpopulation_only", r.subpopulation_only}};
}

AssociationRecord record_from_json(const Json& j) {
  AssociationRecord r;
  r.risk_factor = j.at("risk_factor").get<std::string>();
  r.response = j.at("response").get<std::string>();
  r.m = j.at("m").get<int>();
  r.cadre = j.at("cadre").get<int>();
  maybe(j, "coefficient", r.coefficient);
  maybe(j, "std_error", r.std_error);
  maybe(j, "p_raw", r.p_raw);
  maybe(j, "p_adjusted", r.p_adjusted);
  maybe(j, "positive", r.positive);
  maybe(j, "significant", r.significant);
  maybe(j, "subpopulation_only", r.subpopulation_only);
  return r;
}

Json synthetic_spec_to_json(const SyntheticSpec& s) {
  return Json{{"n", s.n},
              {"n_cadres_true", s.n_cadres_true},
              {"separation", s.separation},
              {"slopes", s.slopes},
              {"noise_sd", s.noise_sd},
              {"weight_skew", s.weight_skew},
              {"n_strata", s.n_strata},
              {"varunits_per_stratum", s.varunits_per_stratum},
              {"seed", s.seed},
              {"task", to_string(s.task)},
              {"n_controls", s.n_controls},
              {"n_exposures", s.n_exposures},
              {"control_effects", s.control_effects},
              {"hypertension_rule", s.rule == HypertensionRule::both ? "both" : "either"}};
}

SyntheticSpec synthetic_spec_from_json(const Json& j, SyntheticSpec s) {
  maybe(j, "n", s.n);
  maybe(j, "n_cadres_true", s.n_cadres_true);
  maybe(j, "separation", s.separation);
  maybe(j, "slopes", s.slopes);
  maybe(j, "noise_sd", s.noise_sd);
  maybe(j, "weight_skew", s.weight_skew);
  maybe(j, "n_strata", s.n_strata);
  maybe(j, "varunits_per_stratum", s.varunits_per_stratum);
  maybe(j, "seed", s.seed);
  if (j.contains("task")) s.task = task_from_string(j["task"].get<std::string>());
  maybe(j, "n_controls", s.n_controls);
  maybe(j, "n_exposures", s.n_exposures);
  maybe(j, "control_effects", s.control_effects);
  if (j.contains("hypertension_rule")) {
    const auto rule = j["hypertension_rule"].get<std::string>();
    if (rule != "both" && rule != "either") throw std::invalid_argument("hypertension_rule must be 'both' or 'either'");
    s.rule = rule == "both" ? HypertensionRule::both : HypertensionRule::either;
  }
  s.check();
  return s;
}

}  // namespace scm
