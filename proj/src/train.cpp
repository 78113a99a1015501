#include "scm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace scm {

void TrainConfig::check() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("TrainConfig: " + what); };
  if (!(lambda_d >= 0.0) || !(lambda_w >= 0.0)) fail("lambda_d and lambda_w must be nonnegative");
  if (!(alpha_d >= 0.0 && alpha_d <= 1.0) || !(alpha_w >= 0.0 && alpha_w <= 1.0))
    fail("alpha_d and alpha_w must lie in [0,1]");
  if (!(gamma > 0.0)) fail("gamma must be positive");
  if (cadres < 1) fail("cadres must be at least 1");
  if (batch_size < 1) fail("batch_size must be positive");
  if (max_steps < 1) fail("max_steps must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(tol > 0.0)) fail("tol must be positive");
}

namespace {

double elastic_net(double lambda, double alpha, double l1, double l2sq) {
  return 0.5 * lambda * (alpha * l1 + (1.0 - alpha) * l2sq);
}

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double log_det_sigma(const ScmParams& params) { return params.sigma2->array().log().sum(); }

// Multiplier applied to the penalties: 1 for hyp, 1/|Sigma| for cbp.
double penalty_scale(const ScmParams& params, Task task) {
  return task == Task::cbp ? std::exp(-log_det_sigma(params)) : 1.0;
}

void require_finite_params(const ScmParams& params) {
  bool ok = params.centers.allFinite() && params.d.allFinite() && params.W0.allFinite();
  for (const auto& w : params.W) ok = ok && w.allFinite();
  if (params.sigma2) ok = ok && params.sigma2->allFinite();
  if (!ok) throw std::invalid_argument("non-finite parameters");
}

void check_task(const ScmParams& params, Task task) {
  params.check();
  if (task == Task::cbp && !params.sigma2) throw std::invalid_argument("cbp objective needs sigma2");
}

double full_objective(const Design& dz, const ScmParams& params, const TrainConfig& cfg) {
  const double data = kernels::data_term(dz, params, {}, false).value;
  const double pen = penalty_d(params, cfg) + penalty_w(params, cfg);
  if (dz.task == Task::hyp) return data - pen;
  const double n = static_cast<double>(dz.rows());
  return data - pen * penalty_scale(params, Task::cbp) - (1.0 + n) * log_det_sigma(params);
}

// Gradient of the penalty and log-determinant terms, in ScmGradient layout.
ScmGradient prior_gradient(const ScmParams& params, const TrainConfig& cfg, Task task, double n_rows) {
  ScmGradient g = ScmGradient::zeros_like(params);
  const double scale = penalty_scale(params, task);
  for (Index p = 0; p < params.d.size(); ++p) {
    const double v = params.d[p];
    g.d[p] = -0.5 * cfg.lambda_d * (cfg.alpha_d * sign_or_zero(v) + 2.0 * (1.0 - cfg.alpha_d) * v) * scale;
  }
  for (std::size_t m = 0; m < params.W.size(); ++m) {
    g.W[m] = params.W[m].unaryExpr([&](double v) {
      return -0.5 * cfg.lambda_w * (cfg.alpha_w * sign_or_zero(v) + 2.0 * (1.0 - cfg.alpha_w) * v) * scale;
    });
  }
  if (task == Task::cbp) {
    const double pen = penalty_d(params, cfg) + penalty_w(params, cfg);
    g.log_sigma2.setConstant(pen * scale - (1.0 + n_rows));
  }
  return g;
}

// Cosine decay from the base rate to a tenth of it over max_steps.
double step_size(const TrainConfig& cfg, int step) {
  const double progress = static_cast<double>(step) / static_cast<double>(cfg.max_steps);
  return cfg.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress)));
}

}  // namespace

double penalty_d(const ScmParams& params, const TrainConfig& cfg) {
  return elastic_net(cfg.lambda_d, cfg.alpha_d, params.d.lpNorm<1>(), params.d.squaredNorm());
}

double penalty_w(const ScmParams& params, const TrainConfig& cfg) {
  double l1 = 0.0, l2 = 0.0;
  for (const auto& w : params.W) {
    l1 += w.lpNorm<1>();
    l2 += w.squaredNorm();
  }
  return elastic_net(cfg.lambda_w, cfg.alpha_w, l1, l2);
}

double objective_hyp(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                     const TrainConfig& cfg) {
  if (data.task != Task::hyp) throw std::invalid_argument("objective_hyp needs classification responses");
  check_task(params, Task::hyp);
  require_finite_params(params);
  return full_objective(Design::from(data, roles), params, cfg);
}

double objective_cbp(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                     const TrainConfig& cfg) {
  if (data.task != Task::cbp) throw std::invalid_argument("objective_cbp needs regression responses");
  check_task(params, Task::cbp);
  require_finite_params(params);
  return full_objective(Design::from(data, roles), params, cfg);
}

double objective(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                 const TrainConfig& cfg) {
  return data.task == Task::hyp ? objective_hyp(params, data, roles, cfg) : objective_cbp(params, data, roles, cfg);
}

double data_log_likelihood(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles) {
  check_task(params, data.task);
  const Design dz = Design::from(data, roles);
  const double fit = kernels::data_term(dz, params, {}, false).value;
  if (data.task == Task::hyp) return fit;
  return fit - (1.0 + static_cast<double>(data.rows())) * log_det_sigma(params);
}

ScmGradient objective_gradient(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                               const TrainConfig& cfg) {
  check_task(params, data.task);
  require_finite_params(params);
  const Design dz = Design::from(data, roles);
  ScmGradient g = kernels::data_term(dz, params, {}, true).grad;
  g += prior_gradient(params, cfg, data.task, static_cast<double>(data.rows()));
  return g;
}

namespace {

template <typename Mat>
void append_row_major(VectorXd& out, Index& pos, const Mat& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[pos++] = m(i, j);
}

template <typename Mat>
void read_row_major(const VectorXd& in, Index& pos, Mat& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = in[pos++];
}

Index packed_size(const ScmParams& p) {
  Index n = p.centers.size() + p.d.size() + p.W0.size();
  for (const auto& w : p.W) n += w.size();
  if (p.sigma2) n += p.sigma2->size();
  return n;
}

}  // namespace

VectorXd pack(const ScmParams& params) {
  VectorXd out(packed_size(params));
  Index pos = 0;
  append_row_major(out, pos, params.centers);
  out.segment(pos, params.d.size()) = params.d;
  pos += params.d.size();
  for (const auto& w : params.W) append_row_major(out, pos, w);
  append_row_major(out, pos, params.W0);
  if (params.sigma2) out.segment(pos, params.sigma2->size()) = params.sigma2->array().log().matrix();
  return out;
}

VectorXd pack(const ScmGradient& grad) {
  Index n = grad.centers.size() + grad.d.size() + grad.W0.size() + grad.log_sigma2.size();
  for (const auto& w : grad.W) n += w.size();
  VectorXd out(n);
  Index pos = 0;
  append_row_major(out, pos, grad.centers);
  out.segment(pos, grad.d.size()) = grad.d;
  pos += grad.d.size();
  for (const auto& w : grad.W) append_row_major(out, pos, w);
  append_row_major(out, pos, grad.W0);
  out.segment(pos, grad.log_sigma2.size()) = grad.log_sigma2;
  return out;
}

ScmParams unpack(const VectorXd& flat, const ScmParams& shape) {
  if (flat.size() != packed_size(shape)) throw std::invalid_argument("unpack: length mismatch");
  ScmParams out = shape;
  Index pos = 0;
  read_row_major(flat, pos, out.centers);
  out.d = flat.segment(pos, out.d.size());
  pos += out.d.size();
  for (auto& w : out.W) read_row_major(flat, pos, w);
  read_row_major(flat, pos, out.W0);
  if (out.sigma2) *out.sigma2 = flat.segment(pos, out.sigma2->size()).array().exp().matrix();
  return out;
}

ScmParams initial_params(const Design& design, const TrainConfig& cfg, std::uint64_t seed) {
  const Index n = design.rows();
  const Index m_count = cfg.cadres;
  if (n < m_count) throw std::invalid_argument("fewer subjects than cadres");
  std::mt19937_64 rng(seed);
  ScmParams p = ScmParams::zeros(m_count, design.xc.cols(), design.xt.cols(), design.y.cols(), cfg.gamma,
                                 design.task == Task::cbp);

  // k-means++ seeding on the cadre-assignment columns.
  std::vector<Index> chosen;
  std::uniform_int_distribution<Index> pick(0, n - 1);
  chosen.push_back(pick(rng));
  VectorXd dist2 = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  while (static_cast<Index>(chosen.size()) < m_count) {
    const auto last = design.xc.row(chosen.back());
    for (Index i = 0; i < n; ++i) dist2[i] = std::min(dist2[i], (design.xc.row(i) - last).squaredNorm());
    for (Index c : chosen) dist2[c] = 0.0;
    const double total = dist2.sum();
    Index next = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Index i = 0; i < n; ++i) {
        target -= dist2[i];
        if (target <= 0.0 && dist2[i] > 0.0) {
          next = i;
          break;
        }
      }
      if (next < 0) {
        for (Index i = n - 1; i >= 0; --i)
          if (dist2[i] > 0.0) {
            next = i;
            break;
          }
      }
    } else {
      // All remaining subjects coincide with a chosen one; take distinct rows.
      do {
        next = pick(rng);
      } while (std::find(chosen.begin(), chosen.end(), next) != chosen.end());
    }
    chosen.push_back(next);
  }
  for (Index m = 0; m < m_count; ++m) p.centers.row(m) = design.xc.row(chosen[static_cast<std::size_t>(m)]);

  p.d.setOnes();
  std::normal_distribution<double> normal(0.0, 0.1);
  for (auto& w : p.W)
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = normal(rng);
  for (Index i = 0; i < p.W0.rows(); ++i)
    for (Index j = 0; j < p.W0.cols(); ++j) p.W0(i, j) = normal(rng);
  return p;
}

TrainResult fit_scm(const SurveyDataset& data, const VariableRoles& roles, const TrainConfig& cfg,
                    std::uint64_t init_seed) {
  cfg.check();
  const Design dz = Design::from(data, roles);
  const Index n = dz.rows();
  const Task task = dz.task;
  ScmParams shape = initial_params(dz, cfg, init_seed);
  VectorXd theta = pack(shape);
  const Index dim = theta.size();

  // L1 slope per coordinate (before the |Sigma| scaling) for d and W entries.
  VectorXd l1_slope = VectorXd::Zero(dim);
  {
    const Index d_off = shape.centers.size();
    l1_slope.segment(d_off, shape.d.size()).setConstant(0.5 * cfg.lambda_d * cfg.alpha_d);
    Index w_len = 0;
    for (const auto& w : shape.W) w_len += w.size();
    l1_slope.segment(d_off + shape.d.size(), w_len).setConstant(0.5 * cfg.lambda_w * cfg.alpha_w);
  }

  VectorXd m1 = VectorXd::Zero(dim);
  VectorXd m2 = VectorXd::Zero(dim);
  std::mt19937_64 rng(init_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  auto record = [&](int step, const ScmParams& p) {
    const double v = full_objective(dz, p, cfg);
    result.objective_trace.emplace_back(step, v);
    if (!std::isfinite(v))
      throw TrainingDiverged("objective became non-finite at step " + std::to_string(step), result.objective_trace);
    return v;
  };

  ScmParams current = shape;
  double best_value = record(0, current);
  ScmParams best = current;
  std::vector<double> moving;
  int calm = 0;
  int step = 0;
  const auto batch = static_cast<Index>(cfg.batch_size);
  while (step < cfg.max_steps && !result.converged) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n && step < cfg.max_steps; start += batch) {
      const Index len = std::min(batch, n - start);
      const std::span<const Index> rows(order.data() + start, static_cast<std::size_t>(len));
      const DataTerm dt = kernels::data_term(dz, current, rows, true);
      const VectorXd data_grad = pack(dt.grad) * (static_cast<double>(n) / static_cast<double>(len));
      const VectorXd grad = data_grad + pack(prior_gradient(current, cfg, task, static_cast<double>(n)));
      const double scale = penalty_scale(current, task);

      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(cfg.beta1, step);
      const double c2 = 1.0 - std::pow(cfg.beta2, step);
      const double lr = step_size(cfg, step);
      VectorXd next = theta.array() + lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_eps);
      for (Index j = 0; j < dim; ++j) {
        if (l1_slope[j] <= 0.0) continue;
        if (theta[j] == 0.0) {
          // Stay at zero while the data pull is inside the L1 subdifferential.
          if (std::abs(data_grad[j]) <= l1_slope[j] * scale) next[j] = 0.0;
        } else if (sign_or_zero(next[j]) != sign_or_zero(theta[j])) {
          next[j] = 0.0;
        }
      }
      theta = std::move(next);
      current = unpack(theta, shape);
    }

    const double v = record(step, current);
    if (v > best_value) {
      best_value = v;
      best = current;
    }
    moving.push_back(v);
    if (moving.size() >= 11) {
      const std::size_t k = moving.size();
      double now = 0.0, prev = 0.0;
      for (std::size_t j = 0; j < 10; ++j) {
        now += moving[k - 1 - j];
        prev += moving[k - 2 - j];
      }
      const double rel = std::abs(now - prev) / std::max(std::abs(now), 1e-12);
      calm = rel < cfg.tol ? calm + 1 : 0;
      if (calm >= 10) result.converged = true;
    }
  }

  result.params = std::move(best);
  result.final_objective = best_value;
  result.steps = step;
  return result;
}

}  // namespace scm
