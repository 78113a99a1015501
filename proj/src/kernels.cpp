#include "scm/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scm {

ScmGradient ScmGradient::zeros_like(const ScmParams& params) {
  ScmGradient g;
  g.centers = MatrixXd::Zero(params.centers.rows(), params.centers.cols());
  g.d = VectorXd::Zero(params.d.size());
  g.W.reserve(params.W.size());
  for (const auto& w : params.W) g.W.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  g.W0 = MatrixXd::Zero(params.W0.rows(), params.W0.cols());
  g.log_sigma2 = VectorXd::Zero(params.sigma2 ? params.sigma2->size() : 0);
  return g;
}

ScmGradient& ScmGradient::operator+=(const ScmGradient& other) {
  centers += other.centers;
  d += other.d;
  for (std::size_t m = 0; m < W.size(); ++m) W[m] += other.W[m];
  W0 += other.W0;
  log_sigma2 += other.log_sigma2;
  return *this;
}

ScmGradient& ScmGradient::operator*=(double k) {
  centers *= k;
  d *= k;
  for (auto& w : W) w *= k;
  W0 *= k;
  log_sigma2 *= k;
  return *this;
}

Design Design::from(const SurveyDataset& data, const VariableRoles& roles) {
  Design out;
  out.xc = kernels::gather_columns(data.features, roles.cadre_idx());
  out.xt = kernels::gather_columns(data.features, roles.target_idx());
  out.y = data.responses;
  out.s = data.weights;
  out.task = data.task;
  return out;
}

namespace kernels {

MatrixXd gather_columns(const MatrixXd& x, const std::vector<Index>& cols) {
  MatrixXd out(x.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = x.col(cols[j]);
  return out;
}

void membership_row(const double* xc, const ScmParams& params, double* out) {
  const Index m_count = params.cadres();
  const Index pc = params.cadre_dim();
  double amax = -std::numeric_limits<double>::infinity();
  for (Index m = 0; m < m_count; ++m) {
    double dist = 0.0;
    for (Index p = 0; p < pc; ++p) {
      const double z = xc[p] - params.centers(m, p);
      dist += std::abs(params.d[p]) * z * z;
    }
    out[m] = -params.gamma * dist;
    amax = std::max(amax, out[m]);
  }
  double total = 0.0;
  for (Index m = 0; m < m_count; ++m) {
    out[m] = std::exp(out[m] - amax);
    total += out[m];
  }
  for (Index m = 0; m < m_count; ++m) out[m] /= total;
}

MatrixXd membership_batch(const MatrixXd& xc, const ScmParams& params) {
  // Row-major output so each row is contiguous for membership_row.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g(xc.rows(), params.cadres());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = xc;
  const Index n = xc.rows();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) membership_row(x.row(i).data(), params, g.row(i).data());
  return g;
}

MatrixXd membership_batch_serial(const MatrixXd& xc, const ScmParams& params) {
  MatrixXd g(xc.rows(), params.cadres());
  const VectorXd absd = params.d.cwiseAbs();
  for (Index i = 0; i < xc.rows(); ++i) {
    VectorXd a(params.cadres());
    for (Index m = 0; m < params.cadres(); ++m) {
      const VectorXd z = xc.row(i).transpose() - params.centers.row(m).transpose();
      a[m] = -params.gamma * absd.dot(z.cwiseProduct(z));
    }
    const VectorXd e = (a.array() - a.maxCoeff()).exp();
    g.row(i) = (e / e.sum()).transpose();
  }
  return g;
}

namespace {

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Index row_at(std::span<const Index> rows, Index k) { return rows.empty() ? k : rows[static_cast<std::size_t>(k)]; }

// Per-thread scratch for one row evaluation.
struct RowScratch {
  std::vector<double> g, e, h, ga, f, grad_f;
  explicit RowScratch(const ScmParams& p)
      : g(static_cast<std::size_t>(p.cadres())),
        e(static_cast<std::size_t>(p.cadres() * p.response_dim())),
        h(static_cast<std::size_t>(p.cadres())),
        ga(static_cast<std::size_t>(p.cadres())),
        f(static_cast<std::size_t>(p.response_dim())),
        grad_f(static_cast<std::size_t>(p.response_dim())) {}
};

double accumulate_row(const Design& dz, const ScmParams& params, const VectorXd& inv_sigma2, Index i,
                      bool want_grad, RowScratch& sc, ScmGradient* grad) {
  const Index m_count = params.cadres();
  const Index pc = params.cadre_dim();
  const Index pt = params.target_dim();
  const Index py = params.response_dim();

  double amax = -std::numeric_limits<double>::infinity();
  for (Index m = 0; m < m_count; ++m) {
    double dist = 0.0;
    for (Index p = 0; p < pc; ++p) {
      const double z = dz.xc(i, p) - params.centers(m, p);
      dist += std::abs(params.d[p]) * z * z;
    }
    sc.g[m] = -params.gamma * dist;
    amax = std::max(amax, sc.g[m]);
  }
  double total = 0.0;
  for (Index m = 0; m < m_count; ++m) {
    sc.g[m] = std::exp(sc.g[m] - amax);
    total += sc.g[m];
  }
  for (Index m = 0; m < m_count; ++m) sc.g[m] /= total;

  std::fill(sc.f.begin(), sc.f.end(), 0.0);
  for (Index m = 0; m < m_count; ++m) {
    const MatrixXd& w = params.W[static_cast<std::size_t>(m)];
    for (Index k = 0; k < py; ++k) {
      double e = params.W0(m, k);
      for (Index t = 0; t < pt; ++t) e += w(t, k) * dz.xt(i, t);
      sc.e[static_cast<std::size_t>(m * py + k)] = e;
      sc.f[k] += sc.g[m] * e;
    }
  }

  const double s = dz.s[i];
  double value = 0.0;
  if (dz.task == Task::hyp) {
    const double y = dz.y(i, 0);
    const double slack = 1.0 - y * sc.f[0];
    if (slack > 0.0) {
      value = -s * slack;
      sc.grad_f[0] = s * y;
    } else {
      sc.grad_f[0] = 0.0;
    }
  } else {
    for (Index k = 0; k < py; ++k) {
      const double r = dz.y(i, k) - sc.f[k];
      const double q = 0.5 * s * r * r * inv_sigma2[k];
      value -= q;
      sc.grad_f[k] = s * r * inv_sigma2[k];
      if (want_grad) grad->log_sigma2[k] += q;
    }
  }
  if (!want_grad) return value;

  double hbar = 0.0;
  for (Index m = 0; m < m_count; ++m) {
    double h = 0.0;
    for (Index k = 0; k < py; ++k) h += sc.e[static_cast<std::size_t>(m * py + k)] * sc.grad_f[k];
    sc.h[m] = h;
    hbar += sc.g[m] * h;
  }
  for (Index m = 0; m < m_count; ++m) {
    sc.ga[m] = sc.g[m] * (sc.h[m] - hbar);
    MatrixXd& gw = grad->W[static_cast<std::size_t>(m)];
    for (Index k = 0; k < py; ++k) {
      const double gk = sc.g[m] * sc.grad_f[k];
      grad->W0(m, k) += gk;
      for (Index t = 0; t < pt; ++t) gw(t, k) += gk * dz.xt(i, t);
    }
  }
  for (Index p = 0; p < pc; ++p) {
    const double ad = std::abs(params.d[p]);
    const double sd = sign_or_zero(params.d[p]);
    double gd = 0.0;
    for (Index m = 0; m < m_count; ++m) {
      const double z = dz.xc(i, p) - params.centers(m, p);
      grad->centers(m, p) += sc.ga[m] * 2.0 * params.gamma * ad * z;
      gd -= sc.ga[m] * params.gamma * sd * z * z;
    }
    grad->d[p] += gd;
  }
  return value;
}

VectorXd inverse_sigma2(const Design& design, const ScmParams& params) {
  if (design.task == Task::hyp) return VectorXd();
  return params.sigma2->cwiseInverse();
}

}  // namespace

DataTerm data_term(const Design& design, const ScmParams& params, std::span<const Index> rows, bool want_grad) {
  const Index n = rows.empty() ? design.rows() : static_cast<Index>(rows.size());
  const Index blocks = (n + kBlockRows - 1) / kBlockRows;
  const VectorXd inv_sigma2 = inverse_sigma2(design, params);
  std::vector<double> values(static_cast<std::size_t>(blocks), 0.0);
  std::vector<ScmGradient> grads;
  if (want_grad) grads.assign(static_cast<std::size_t>(blocks), ScmGradient::zeros_like(params));

#pragma omp parallel
  {
    RowScratch scratch(params);
#pragma omp for schedule(static)
    for (Index b = 0; b < blocks; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      const Index end = std::min(n, (b + 1) * kBlockRows);
      double v = 0.0;
      for (Index k = b * kBlockRows; k < end; ++k)
        v += accumulate_row(design, params, inv_sigma2, row_at(rows, k), want_grad, scratch,
                            want_grad ? &grads[bb] : nullptr);
      values[bb] = v;
    }
  }

  DataTerm out;
  out.grad = ScmGradient::zeros_like(params);
  for (Index b = 0; b < blocks; ++b) {
    out.value += values[static_cast<std::size_t>(b)];
    if (want_grad) out.grad += grads[static_cast<std::size_t>(b)];
  }
  return out;
}

DataTerm data_term_serial(const Design& design, const ScmParams& params, std::span<const Index> rows,
                          bool want_grad) {
  const Index n = rows.empty() ? design.rows() : static_cast<Index>(rows.size());
  const Index m_count = params.cadres();
  const VectorXd absd = params.d.cwiseAbs();
  const VectorXd sgnd = params.d.unaryExpr([](double v) { return sign_or_zero(v); });
  DataTerm out;
  out.grad = ScmGradient::zeros_like(params);
  for (Index k = 0; k < n; ++k) {
    const Index i = row_at(rows, k);
    const VectorXd xc = design.xc.row(i).transpose();
    const VectorXd xt = design.xt.row(i).transpose();
    const VectorXd y = design.y.row(i).transpose();
    const double s = design.s[i];

    VectorXd a(m_count);
    for (Index m = 0; m < m_count; ++m) {
      const VectorXd z = xc - params.centers.row(m).transpose();
      a[m] = -params.gamma * absd.dot(z.cwiseProduct(z));
    }
    VectorXd g = (a.array() - a.maxCoeff()).exp();
    g /= g.sum();
    MatrixXd e(params.response_dim(), m_count);
    for (Index m = 0; m < m_count; ++m)
      e.col(m) = params.W[static_cast<std::size_t>(m)].transpose() * xt + params.W0.row(m).transpose();
    const VectorXd f = e * g;

    VectorXd df(params.response_dim());
    if (design.task == Task::hyp) {
      const double slack = 1.0 - y[0] * f[0];
      out.value -= s * std::max(0.0, slack);
      df[0] = slack > 0.0 ? s * y[0] : 0.0;
    } else {
      const VectorXd r = y - f;
      const VectorXd inv = params.sigma2->cwiseInverse();
      out.value -= 0.5 * s * r.cwiseProduct(r).dot(inv);
      df = s * r.cwiseProduct(inv);
      out.grad.log_sigma2 += 0.5 * s * r.cwiseProduct(r).cwiseProduct(inv);
    }
    if (!want_grad) continue;

    const VectorXd h = e.transpose() * df;
    const VectorXd ga = g.cwiseProduct(h.array().matrix() - VectorXd::Constant(m_count, g.dot(h)));
    for (Index m = 0; m < m_count; ++m) {
      const auto mm = static_cast<std::size_t>(m);
      out.grad.W[mm] += g[m] * xt * df.transpose();
      out.grad.W0.row(m) += g[m] * df.transpose();
      const VectorXd z = xc - params.centers.row(m).transpose();
      out.grad.centers.row(m) += (ga[m] * 2.0 * params.gamma * absd.cwiseProduct(z)).transpose();
      out.grad.d -= ga[m] * params.gamma * sgnd.cwiseProduct(z.cwiseProduct(z));
    }
  }
  if (!want_grad) out.grad.log_sigma2.setZero();
  return out;
}

}  // namespace kernels
}  // namespace scm
