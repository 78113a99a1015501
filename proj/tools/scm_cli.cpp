#include "scm/data.hpp"
#include "scm/glm.hpp"
#include "scm/inference.hpp"
#include "scm/pipeline.hpp"
#include "scm/select.hpp"
#include "scm/serialize.hpp"
#include "scm/synthetic.hpp"
#include "scm/train.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using scm::Json;

namespace {

// Exit codes: 1 runtime failure, 2 bad usage, 3 bad data, 4 bad config.
struct CliError : std::runtime_error {
  CliError(std::string kind, int code, const std::string& msg) : std::runtime_error(msg), kind(std::move(kind)), code(code) {}
  std::string kind;
  int code;
  Json details;
};

int fail(const std::string& kind, int code, const std::string& message, const Json& details = nullptr) {
  Json err{{"error", {{"type", kind}, {"message", message}}}};
  if (!details.is_null()) err["error"]["details"] = details;
  std::cerr << err.dump() << '\n';
  return code;
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("io", 1, "cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw CliError("config", 4, "'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json(const std::string& path, const Json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw CliError("io", 1, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

scm::StudyConfig load_config(const std::string& path) {
  try {
    return scm::study_config_from_json(read_json(path));
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    throw CliError("config", 4, e.what());
  }
}

std::string output_dir(const std::string& flag, const scm::StudyConfig* cfg) {
  if (!flag.empty()) return flag;
  if (cfg && !cfg->output_dir.empty()) return cfg->output_dir;
  if (const char* env = std::getenv("SCM_OUTPUT_DIR"); env && *env) return env;
  return "scm_out";
}

scm::SurveyDataset load_data(const std::string& path, const scm::StudyConfig& cfg) {
  try {
    return scm::read_csv(path, cfg.schema());
  } catch (const scm::DataError& e) {
    throw CliError("data", 3, e.what());
  }
}

/// Optional overrides layered on the config's train section.
struct TrainFlags {
  std::optional<double> lambda_d, lambda_w, alpha_d, alpha_w, gamma, lr, tol, beta1, beta2, adam_eps;
  std::optional<int> cadres, batch_size, max_steps;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app, bool full) {
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--max-steps", max_steps, "Maximum optimizer steps");
    if (!full) return;
    app->add_option("--lambda-d", lambda_d, "Penalty strength on d");
    app->add_option("--lambda-w", lambda_w, "Penalty strength on expert weights");
    app->add_option("--alpha-d", alpha_d, "L1 share of the d penalty");
    app->add_option("--alpha-w", alpha_w, "L1 share of the expert weight penalty");
    app->add_option("--gamma", gamma, "Gating sharpness");
    app->add_option("--cadres", cadres, "Number of cadres");
    app->add_option("--batch-size", batch_size, "Minibatch size");
    app->add_option("--learning-rate", lr, "Adam learning rate");
    app->add_option("--tol", tol, "Relative convergence tolerance");
    app->add_option("--beta1", beta1, "Adam first-moment decay");
    app->add_option("--beta2", beta2, "Adam second-moment decay");
    app->add_option("--adam-eps", adam_eps, "Adam denominator offset");
  }

  void apply(scm::TrainConfig& c) const {
    if (lambda_d) c.lambda_d = *lambda_d;
    if (lambda_w) c.lambda_w = *lambda_w;
    if (alpha_d) c.alpha_d = *alpha_d;
    if (alpha_w) c.alpha_w = *alpha_w;
    if (gamma) c.gamma = *gamma;
    if (cadres) c.cadres = *cadres;
    if (batch_size) c.batch_size = *batch_size;
    if (max_steps) c.max_steps = *max_steps;
    if (lr) c.learning_rate = *lr;
    if (seed) c.seed = *seed;
    if (tol) c.tol = *tol;
    if (beta1) c.beta1 = *beta1;
    if (beta2) c.beta2 = *beta2;
    if (adam_eps) c.adam_eps = *adam_eps;
    try {
      c.check();
    } catch (const std::exception& e) {
      throw CliError("config", 4, e.what());
    }
  }
};

/// Prepared data and roles for one risk factor.
struct FactorData {
  scm::PreparedCategory prepared;
  scm::VariableRoles roles;
};

FactorData prepare_factor(const scm::StudyConfig& cfg, const scm::SurveyDataset& data, const std::string& factor) {
  try {
    FactorData fd{scm::prepare_category(cfg, data, cfg.category_of(factor)), {}};
    if (auto bad = fd.prepared.column_errors.find(factor); bad != fd.prepared.column_errors.end())
      throw CliError("data", 3, bad->second);
    fd.roles = scm::VariableRoles::make(fd.prepared.data, cfg.control_cols, factor);
    const auto violations = scm::validate_dataset(fd.prepared.data, fd.roles);
    if (!violations.empty()) {
      CliError err("data", 3, "dataset failed validation for '" + factor + "'");
      err.details = violations;
      throw err;
    }
    return fd;
  } catch (const CliError&) {
    throw;
  } catch (const scm::DataError& e) {
    throw CliError("data", 3, e.what());
  } catch (const std::invalid_argument& e) {
    throw CliError("config", 4, e.what());
  }
}

std::vector<scm::AssociationTest> read_tests(const std::string& path) {
  std::vector<scm::AssociationTest> tests;
  if (fs::path(path).extension() == ".json") {
    for (const auto& j : read_json(path)) {
      scm::AssociationTest t = scm::record_from_json(j);
      tests.push_back(t);
    }
    return tests;
  }
  std::ifstream in(path);
  if (!in) throw CliError("io", 1, "cannot read '" + path + "'");
  std::string line;
  std::getline(in, line);
  const std::vector<std::string> header = scm::parse_csv_line(line);
  auto col = [&](const std::string& name) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw CliError("data", 3, "tests CSV lacks column '" + name + "'");
  };
  const std::size_t rf = col("risk_factor"), resp = col("response"), m = col("m"), cadre = col("cadre"),
                    coef = col("coefficient"), se = col("std_error"), p = col("p_raw");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = scm::parse_csv_line(line);
    if (cells.size() < header.size()) throw CliError("data", 3, "short row in tests CSV: " + line);
    scm::AssociationTest t;
    try {
      t.risk_factor = cells[rf];
      t.response = cells[resp];
      t.m = std::stoi(cells[m]);
      t.cadre = std::stoi(cells[cadre]);
      t.coefficient = std::stod(cells[coef]);
      t.std_error = std::stod(cells[se]);
      t.p_raw = std::stod(cells[p]);
    } catch (const std::logic_error&) {
      throw CliError("data", 3, "unparsable row in tests CSV: " + line);
    }
    tests.push_back(t);
  }
  return tests;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised cadre models for survey-weighted association studies"};
  app.require_subcommand(1);

  std::string data_path, config_path, out, factor, run_path, model_path, spec_path, tests_path;
  std::optional<double> alpha;
  std::optional<int> parallelism, cadre;
  std::optional<std::string> fdr_family;
  bool design_df = false;
  TrainFlags tf;

  auto* validate = app.add_subcommand("validate", "Check a dataset against a study config");
  validate->add_option("--data", data_path, "Survey CSV")->required();
  validate->add_option("--config", config_path, "Study config JSON")->required();

  auto* train = app.add_subcommand("train", "Fit one SCM for a risk factor");
  train->add_option("--data", data_path, "Survey CSV")->required();
  train->add_option("--config", config_path, "Study config JSON")->required();
  train->add_option("--factor", factor, "Risk factor column")->required();
  train->add_option("--out", out, "Output JSON (stdout when omitted)");
  tf.add(train, true);

  auto* select = app.add_subcommand("select", "Grid-select SCMs for M in the configured range");
  select->add_option("--data", data_path, "Survey CSV")->required();
  select->add_option("--config", config_path, "Study config JSON")->required();
  select->add_option("--factor", factor, "Risk factor column")->required();
  select->add_option("--out", out, "Output JSON (stdout when omitted)");
  select->add_option("--parallelism", parallelism, "Worker threads");
  tf.add(select, false);

  auto* glm = app.add_subcommand("glm", "Survey-weighted GLMs per cadre of a saved model");
  glm->add_option("--data", data_path, "Survey CSV")->required();
  glm->add_option("--config", config_path, "Study config JSON")->required();
  glm->add_option("--factor", factor, "Risk factor column")->required();
  glm->add_option("--model", model_path, "Model JSON written by ewas (all subjects when omitted)");
  glm->add_option("--cadre", cadre, "One-based cadre (every cadre when omitted)");
  glm->add_flag("--design-df", design_df, "Student t reference with varunits - strata df");
  glm->add_option("--out", out, "Output JSON (stdout when omitted)");

  auto* fdr = app.add_subcommand("fdr", "Benjamini-Hochberg adjustment of a test table");
  fdr->add_option("--tests", tests_path, "CSV or JSON with risk_factor,response,m,cadre,coefficient,std_error,p_raw")
      ->required();
  fdr->add_option("--alpha", alpha, "FDR level");
  fdr->add_option("--family", fdr_family, "pooled or per_response");
  fdr->add_option("--out", out, "Output JSON (stdout when omitted)");

  auto* ewas = app.add_subcommand("ewas", "Full study: selection, cadre GLMs, FDR and reports");
  ewas->add_option("--data", data_path, "Survey CSV")->required();
  ewas->add_option("--config", config_path, "Study config JSON")->required();
  ewas->add_option("--out", out, "Output directory (config, then SCM_OUTPUT_DIR)");
  ewas->add_option("--alpha", alpha, "FDR level");
  ewas->add_option("--parallelism", parallelism, "Worker threads");
  ewas->add_option("--fdr-family", fdr_family, "pooled or per_response");
  ewas->add_flag("--design-df", design_df, "Student t reference with varunits - strata df in the cadre GLMs");
  tf.add(ewas, false);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic study with known cadres");
  synth->add_option("--spec", spec_path, "Generator spec JSON (defaults otherwise)");
  synth->add_option("--out", out, "Output directory (SCM_OUTPUT_DIR when omitted)");
  std::optional<int> n, n_true, n_exposures;
  std::optional<std::uint64_t> synth_seed;
  std::optional<double> separation;
  std::optional<std::string> task;
  synth->add_option("--n", n, "Subjects");
  synth->add_option("--cadres-true", n_true, "True cadre count");
  synth->add_option("--exposures", n_exposures, "Exposure columns");
  synth->add_option("--separation", separation, "Distance between true cadre centers");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--task", task, "hyp or cbp");

  auto* report = app.add_subcommand("report", "Rewrite report files from a run.json");
  report->add_option("--run", run_path, "run.json written by ewas")->required();
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 2, e.what());
  }

  try {
    if (*validate) {
      const auto cfg = load_config(config_path);
      const auto data = load_data(data_path, cfg);
      Json violations = Json::array();
      for (const auto& col : cfg.control_cols)
        if (std::find(data.column_names.begin(), data.column_names.end(), col) == data.column_names.end())
          violations.push_back("missing control column '" + col + "'");
      for (const auto& [category, cols] : cfg.categories)
        for (const auto& col : cols)
          if (std::find(data.column_names.begin(), data.column_names.end(), col) == data.column_names.end())
            violations.push_back("missing exposure column '" + col + "' (" + category + ")");
      scm::VariableRoles all;
      for (const auto& v : scm::validate_dataset(data, all)) {
        // Missing exposure values are allowed; categories drop those subjects.
        if (v.rfind("non-finite value", 0) == 0) continue;
        violations.push_back(v);
      }
      if (!violations.empty()) return fail("data", 3, "dataset failed validation", violations);
      std::cout << Json{{"valid", true}, {"rows", data.rows()}, {"columns", data.cols()}}.dump() << '\n';
    } else if (*train) {
      auto cfg = load_config(config_path);
      tf.apply(cfg.train);
      const auto data = load_data(data_path, cfg);
      const auto fd = prepare_factor(cfg, data, factor);
      const auto result = scm::fit_scm(fd.prepared.data, fd.roles, cfg.train, cfg.train.seed);
      Json j = scm::train_result_to_json(result);
      j["risk_factor"] = factor;
      j["config"] = scm::train_config_to_json(cfg.train);
      write_json(out, j);
    } else if (*select) {
      auto cfg = load_config(config_path);
      tf.apply(cfg.train);
      const auto data = load_data(data_path, cfg);
      const auto fd = prepare_factor(cfg, data, factor);
      const auto sel = scm::select_model(fd.prepared.data, fd.roles, cfg.selection, cfg.train,
                                         parallelism.value_or(cfg.parallelism));
      Json j{{"risk_factor", factor}, {"selection", scm::selection_to_json(sel)}};
      const auto best = scm::best_order(sel);
      j["best_m"] = best ? Json(*best) : Json(nullptr);
      write_json(out, j);
    } else if (*glm) {
      const auto cfg = load_config(config_path);
      const auto data = load_data(data_path, cfg);
      const auto fd = prepare_factor(cfg, data, factor);
      scm::GlmSpec spec;
      spec.family = cfg.response == scm::Task::hyp ? scm::GlmFamily::logistic : scm::GlmFamily::linear;
      spec.covariate_cols = {factor};
      spec.covariate_cols.insert(spec.covariate_cols.end(), cfg.control_cols.begin(), cfg.control_cols.end());
      spec.design_df = design_df;
      int m = 1;
      if (!model_path.empty()) {
        const auto params = scm::params_from_json(read_json(model_path).at("params"));
        spec.cadre_labels = scm::assign_cadres(fd.prepared.data, fd.roles, params).hard_labels;
        m = static_cast<int>(params.cadres());
      }
      if (cadre && (*cadre < 1 || *cadre > m)) throw CliError("usage", 2, "--cadre out of range");
      Json fits = Json::array();
      for (int c = 1; c <= m; ++c) {
        if (cadre && c != *cadre) continue;
        if (!model_path.empty()) spec.cadre = c - 1;
        for (const auto& response : fd.prepared.data.response_names) {
          spec.response_col = response;
          fits.push_back({{"cadre", c}, {"response", response}, {"fit", scm::glm_fit_to_json(scm::fit_weighted_glm(fd.prepared.data, spec))}});
        }
      }
      write_json(out, Json{{"risk_factor", factor}, {"m", m}, {"fits", fits}});
    } else if (*fdr) {
      scm::FdrFamily family = scm::FdrFamily::pooled;
      if (fdr_family) family = scm::fdr_family_from_string(*fdr_family);
      const auto table = scm::build_association_table(read_tests(tests_path), alpha.value_or(0.02), family);
      Json j = Json::array();
      for (const auto& r : table) j.push_back(scm::record_to_json(r));
      write_json(out, j);
    } else if (*ewas) {
      auto cfg = load_config(config_path);
      tf.apply(cfg.train);
      if (alpha) cfg.alpha = *alpha;
      if (parallelism) cfg.parallelism = *parallelism;
      if (fdr_family) cfg.fdr_family = scm::fdr_family_from_string(*fdr_family);
      if (design_df) cfg.design_df = true;
      try {
        cfg.check();
      } catch (const std::exception& e) {
        throw CliError("config", 4, e.what());
      }
      const auto data = load_data(data_path, cfg);
      const std::string dir = output_dir(out, &cfg);
      const auto result = scm::run_ewas(cfg, data);
      scm::write_run_artifacts(result, dir);
      int significant = 0;
      for (const auto& r : result.table) significant += r.significant;
      Json errors = Json::object();
      for (const auto& f : result.factors)
        if (!f.errors.empty()) errors[f.risk_factor] = f.errors;
      std::cout << Json{{"output_dir", dir}, {"records", result.table.size()}, {"significant", significant},
                        {"factor_errors", errors}}.dump()
                << '\n';
    } else if (*synth) {
      scm::SyntheticSpec spec;
      if (!spec_path.empty()) spec = scm::synthetic_spec_from_json(read_json(spec_path));
      if (n) spec.n = *n;
      if (n_true) {
        spec.n_cadres_true = *n_true;
        if (static_cast<int>(spec.slopes.size()) != *n_true) {
          spec.slopes.assign(static_cast<std::size_t>(*n_true), 0.0);
          spec.slopes.back() = 1.0;
        }
      }
      if (n_exposures) spec.n_exposures = *n_exposures;
      if (separation) spec.separation = *separation;
      if (synth_seed) spec.seed = *synth_seed;
      if (task) spec.task = scm::task_from_string(*task);
      try {
        spec.check();
      } catch (const std::exception& e) {
        throw CliError("config", 4, e.what());
      }
      const auto study = scm::generate_synthetic(spec);
      const fs::path dir = output_dir(out, nullptr);
      fs::create_directories(dir);
      scm::write_csv((dir / "data.csv").string(), study.data);
      {
        std::ofstream truth(dir / "truth.csv");
        if (!truth) throw CliError("io", 1, "cannot write '" + (dir / "truth.csv").string() + "'");
        truth << "row,cadre\n";
        for (std::size_t i = 0; i < study.true_labels.size(); ++i) truth << i << ',' << study.true_labels[i] + 1 << '\n';
      }
      scm::StudyConfig cfg;
      cfg.response = spec.task;
      cfg.response_cols = study.data.response_names;
      cfg.control_cols = study.control_names;
      cfg.categories["exposures"] = study.exposure_names;
      write_json((dir / "study.json").string(), scm::study_config_to_json(cfg));
      write_json((dir / "spec.json").string(), scm::synthetic_spec_to_json(spec));
      std::cout << Json{{"output_dir", dir.string()}, {"rows", study.data.rows()}}.dump() << '\n';
    } else if (*report) {
      const Json run = read_json(run_path);
      scm::emit_report(scm::report_from_json(run.at("report")), out);
      std::cout << Json{{"output_dir", out}}.dump() << '\n';
    }
  } catch (const CliError& e) {
    return fail(e.kind, e.code, e.what(), e.details);
  } catch (const scm::DataError& e) {
    return fail("data", 3, e.what());
  } catch (const scm::RankDeficient& e) {
    return fail("rank_deficient", 3, e.what(), e.columns());
  } catch (const scm::TrainingDiverged& e) {
    return fail("diverged", 1, e.what());
  } catch (const Json::exception& e) {
    return fail("config", 4, e.what());
  } catch (const std::invalid_argument& e) {
    return fail("config", 4, e.what());
  } catch (const std::exception& e) {
    return fail("runtime", 1, e.what());
  }
  return 0;
}
