#include "scm/select.hpp"

#include <omp.h>

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace scm {

std::vector<std::pair<double, double>> SelectionConfig::default_lambda_grid() {
  const double values[] = {1e-2, std::pow(10.0, -1.5), 1e-1, std::pow(10.0, -0.5), 1.0};
  std::vector<std::pair<double, double>> grid;
  for (double ld : values)
    for (double lw : values) grid.emplace_back(ld, lw);
  return grid;
}

void SelectionConfig::check() const {
  if (m_values.empty()) throw std::invalid_argument("SelectionConfig: m_values is empty");
  if (lambda_grid.empty()) throw std::invalid_argument("SelectionConfig: lambda_grid is empty");
  if (!(entropy_cap >= 0.0)) throw std::invalid_argument("SelectionConfig: entropy_cap must be nonnegative");
  if (restarts < 1) throw std::invalid_argument("SelectionConfig: restarts must be positive");
  for (int m : m_values)
    if (m < 1) throw std::invalid_argument("SelectionConfig: cadre counts must be positive");
}

namespace {

constexpr double kActiveThreshold = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename Mat>
int count_active(const Mat& m) {
  return static_cast<int>((m.array().abs() > kActiveThreshold).count());
}

}  // namespace

std::uint64_t grid_seed(std::uint64_t base, int m, double lambda_d, double lambda_w, int restart) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ static_cast<std::uint64_t>(m));
  h = splitmix64(h ^ std::bit_cast<std::uint64_t>(lambda_d));
  h = splitmix64(h ^ std::bit_cast<std::uint64_t>(lambda_w));
  return splitmix64(h ^ static_cast<std::uint64_t>(restart));
}

int effective_parameter_count(const ScmParams& params) {
  int k = count_active(params.centers) + count_active(params.d) + count_active(params.W0);
  for (const auto& w : params.W) k += count_active(w);
  if (params.sigma2) k += static_cast<int>(params.sigma2->size());
  return k;
}

double bic(const TrainResult& fit, const SurveyDataset& data, const VariableRoles& roles) {
  const double loglik = data_log_likelihood(fit.params, data, roles);
  return effective_parameter_count(fit.params) * std::log(static_cast<double>(data.rows())) - 2.0 * loglik;
}

namespace {

bool better(const Candidate& a, const Candidate& b) {
  return std::make_tuple(a.fit->bic, a.lambda_d, a.lambda_w) < std::make_tuple(b.fit->bic, b.lambda_d, b.lambda_w);
}

}  // namespace

Candidate evaluate_candidate(const SurveyDataset& data, const VariableRoles& roles, const SelectionConfig& cfg,
                             const TrainConfig& base, int m, double lambda_d, double lambda_w) {
  Candidate c;
  c.m = m;
  c.lambda_d = lambda_d;
  c.lambda_w = lambda_w;
  TrainConfig tc = base;
  tc.cadres = m;
  tc.lambda_d = lambda_d;
  tc.lambda_w = lambda_w;
  tc.gamma = cfg.gamma;
  tc.alpha_d = cfg.alpha;
  tc.alpha_w = cfg.alpha;

  std::optional<TrainResult> best;
  std::string last_error;
  for (int r = 0; r < cfg.restarts; ++r) {
    try {
      TrainResult tr = fit_scm(data, roles, tc, grid_seed(base.seed, m, lambda_d, lambda_w, r));
      if (!best || tr.final_objective > best->final_objective) best = std::move(tr);
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (!best) {
    c.reason = "training failed: " + last_error;
    return c;
  }

  FittedScm f;
  f.assignment = assign_cadres(data, roles, best->params);
  f.effective_params = effective_parameter_count(best->params);
  f.bic = bic(*best, data, roles);
  f.train = std::move(*best);
  if (f.assignment.has_empty_cadre()) {
    c.reason = "empty cadre";
  } else if (f.assignment.max_entropy() > cfg.entropy_cap) {
    c.reason = "entropy cap";
  } else if (!std::isfinite(f.bic)) {
    c.reason = "non-finite BIC";
  } else {
    c.admissible = true;
  }
  c.fit = std::move(f);
  return c;
}

std::map<int, SelectedModel> select_model(const SurveyDataset& data, const VariableRoles& roles,
                                          const SelectionConfig& cfg, const TrainConfig& train_base,
                                          int workers) {
  cfg.check();
  const std::size_t grid = cfg.lambda_grid.size();
  const std::size_t total = cfg.m_values.size() * grid;
  std::vector<Candidate> results(total);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (std::size_t k = 0; k < total; ++k) {
    const int m = cfg.m_values[k / grid];
    const auto [ld, lw] = cfg.lambda_grid[k % grid];
    results[k] = evaluate_candidate(data, roles, cfg, train_base, m, ld, lw);
  }
  return aggregate_candidates(cfg, std::move(results));
}

std::map<int, SelectedModel> aggregate_candidates(const SelectionConfig& cfg, std::vector<Candidate> results) {
  const std::size_t grid = cfg.lambda_grid.size();
  if (results.size() != grid * cfg.m_values.size())
    throw std::invalid_argument("aggregate_candidates: expected one candidate per (M, grid point)");
  std::map<int, SelectedModel> out;
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    SelectedModel sel;
    sel.m = cfg.m_values[mi];
    const Candidate* best = nullptr;
    for (std::size_t g = 0; g < grid; ++g) {
      const Candidate& c = results[mi * grid + g];
      if (c.admissible && (!best || better(c, *best))) best = &c;
    }
    if (best) {
      sel.admissible = true;
      sel.fitted = best->fit;
      sel.bic = best->fit->bic;
      sel.lambda_d = best->lambda_d;
      sel.lambda_w = best->lambda_w;
    } else {
      sel.bic = std::numeric_limits<double>::infinity();
      // Report the most common rejection among the grid.
      std::map<std::string, int> reasons;
      for (std::size_t g = 0; g < grid; ++g) ++reasons[results[mi * grid + g].reason];
      std::string common;
      int count = -1;
      for (const auto& [r, n] : reasons)
        if (n > count) {
          common = r;
          count = n;
        }
      sel.rejected_reason = common;
    }
    sel.candidates.assign(std::make_move_iterator(results.begin() + static_cast<std::ptrdiff_t>(mi * grid)),
                          std::make_move_iterator(results.begin() + static_cast<std::ptrdiff_t>((mi + 1) * grid)));
    out[sel.m] = std::move(sel);
  }
  return out;
}

std::optional<int> best_order(const std::map<int, SelectedModel>& selection) {
  std::optional<int> best;
  double best_bic = std::numeric_limits<double>::infinity();
  for (const auto& [m, sel] : selection) {
    if (sel.admissible && sel.bic < best_bic) {
      best = m;
      best_bic = sel.bic;
    }
  }
  return best;
}

}  // namespace scm
