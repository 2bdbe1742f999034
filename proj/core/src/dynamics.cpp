#include "channel_axes/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "channel_axes/error.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

double channel_input_capture(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, double sigma0_sq) {
  return 0.5 * std::log1p(w.dot(sigma_x * w) / sigma0_sq);
}

double channel_task_mi(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& c,
                       double sigma0_sq, double sigma_t_sq) {
  const double b = w.dot(c);
  const double d = w.dot(sigma_x * w) + sigma0_sq;
  return -0.5 * std::log1p(-b * b / (d * sigma_t_sq));
}

Eigen::VectorXd grad_ix(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, double sigma0_sq) {
  const Eigen::VectorXd sw = sigma_x * w;
  return sw / (sigma0_sq + w.dot(sw));
}

TaskGradient grad_it(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& c,
                     double sigma0_sq, double sigma_t_sq, double clip) {
  const Eigen::VectorXd sw = sigma_x * w;
  const double b = w.dot(c);
  const double d = w.dot(sw) + sigma0_sq;
  TaskGradient g;
  g.rho_sq = b * b / (d * sigma_t_sq);
  if (g.rho_sq >= 1.0 - clip) throw DegenerateDataError("degenerate task correlation (rho^2 >= 1 - clip)");
  g.direction = c - (b / d) * sw;
  g.scalar = b / ((1.0 - g.rho_sq) * d * sigma_t_sq);
  g.full_grad = g.scalar * g.direction;
  return g;
}

double gradient_inner_product(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x,
                              const Eigen::VectorXd& c, double sigma0_sq) {
  const Eigen::VectorXd sw = sigma_x * w;
  const double b = w.dot(c);
  const double d = w.dot(sw) + sigma0_sq;
  return sw.dot(c) - (b / d) * sw.squaredNorm();
}

Eigen::VectorXd cancelling_task_cov(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x,
                                    const Eigen::VectorXd& c0, double sigma0_sq) {
  const Eigen::VectorXd sw = sigma_x * w;
  const double d = w.dot(sw) + sigma0_sq;
  const Eigen::VectorXd v = sw - (sw.squaredNorm() / d) * w;
  const double vv = v.squaredNorm();
  if (vv == 0.0) return c0;
  return c0 - (c0.dot(v) / vv) * v;
}

std::optional<double> cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

CosineDiagnostics cosine_diagnostics(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& sigma_x,
                                     const Eigen::VectorXd& c, double sigma0_sq, double sigma_t_sq,
                                     const Eigen::MatrixXd& loss_grad) {
  const auto n = weights.rows();
  if (loss_grad.rows() != n || loss_grad.cols() != weights.cols()) {
    throw ValidationError("cosine_diagnostics: gradient shape does not match weights");
  }
  CosineDiagnostics out;
  double s1 = 0, s2 = 0, s3 = 0;
  int n1 = 0, n2 = 0, n3 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd w = weights.row(i).transpose();
    const Eigen::VectorXd gx = grad_ix(w, sigma_x, sigma0_sq);
    Eigen::VectorXd gt;
    try {
      gt = grad_it(w, sigma_x, c, sigma0_sq, sigma_t_sq).full_grad;
    } catch (const DegenerateDataError&) {
      gt = Eigen::VectorXd::Zero(w.size());
    }
    const Eigen::VectorXd update = -loss_grad.row(i).transpose();
    const auto a = cosine(gx, gt);
    const auto b = cosine(update, gx);
    const auto d = cosine(update, gt);
    if (!a || !b || !d) ++out.excluded;
    out.cos_ix_it.push_back(a);
    out.cos_update_ix.push_back(b);
    out.cos_update_it.push_back(d);
    if (a) { s1 += *a; ++n1; }
    if (b) { s2 += *b; ++n2; }
    if (d) { s3 += *d; ++n3; }
  }
  out.mean_ix_it = n1 ? s1 / n1 : 0.0;
  out.mean_update_ix = n2 ? s2 / n2 : 0.0;
  out.mean_update_it = n3 ? s3 / n3 : 0.0;
  return out;
}

namespace {

struct Moments {
  Eigen::MatrixXd sigma;  // [F, F]
  Eigen::VectorXd c;      // cov(X, T)
  double sigma_t_sq = 0;
};

Moments empirical_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
  const auto n = static_cast<double>(x.rows());
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::VectorXd tc = t.array() - t.mean();
  Moments m;
  m.sigma = xc.transpose() * xc / n;
  m.c = xc.transpose() * tc / n;
  m.sigma_t_sq = tc.squaredNorm() / n;
  return m;
}

struct ChannelInfo {
  Eigen::VectorXd i_x, i_ty;
};

ChannelInfo channel_info(const Eigen::MatrixXd& w, const Moments& m, double sigma0_sq) {
  const Eigen::MatrixXd sw = w * m.sigma;
  const Eigen::VectorXd s = (sw.array() * w.array()).rowwise().sum();
  const Eigen::VectorXd b = w * m.c;
  ChannelInfo info;
  info.i_x.resize(w.rows());
  info.i_ty.resize(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    info.i_x[i] = 0.5 * std::log1p(s[i] / sigma0_sq);
    const double rho_sq = std::min(b[i] * b[i] / ((s[i] + sigma0_sq) * m.sigma_t_sq), (1 - 1e-6) * (1 - 1e-6));
    info.i_ty[i] = -0.5 * std::log1p(-rho_sq);
  }
  return info;
}

double safe_spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  try {
    return spearman(a, b);
  } catch (const DegenerateDataError&) {
    return 0.0;
  }
}

}  // namespace

TrajectoryTrace simulate_training(const TrajectoryConfig& config) {
  const int f = config.input_dim;
  const int n = config.channels;
  if (f < 2 || n < 3) throw ValidationError("simulate_training: need input_dim >= 2 and channels >= 3");
  if (config.steps < 0 || config.record_every < 1) {
    throw ValidationError("simulate_training: steps must be >= 0 and record_every >= 1");
  }
  if (config.samples < 3) throw ValidationError("simulate_training: need >= 3 samples");
  if (!(config.sigma0_sq > 0)) throw ValidationError("simulate_training: sigma0_sq must be > 0");
  if (config.aligned_rank < 1 || config.aligned_rank > f) {
    throw ValidationError("simulate_training: aligned_rank must lie in [1, input_dim]");
  }

  // Anisotropic input covariance with a random eigenbasis.
  Rng basis_rng(config.seed, 1);
  Eigen::MatrixXd g(f, f);
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < f; ++j) g(i, j) = basis_rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd lambda(f);
  for (int k = 0; k < f; ++k) lambda[k] = std::exp(-config.spectrum_decay * k / f);
  const Eigen::MatrixXd sigma_true = q * lambda.asDiagonal() * q.transpose();

  // Target direction: weakly aligned with the top eigenvectors.
  Rng beta_rng(config.seed, 2);
  Eigen::VectorXd top = q.leftCols(config.aligned_rank).rowwise().sum();
  top.normalize();
  Eigen::VectorXd rand_dir(f);
  for (int k = 0; k < f; ++k) rand_dir[k] = beta_rng.normal();
  rand_dir.normalize();
  Eigen::VectorXd beta = config.target_alignment * top + (1 - config.target_alignment) * rand_dir;
  beta /= std::sqrt(beta.dot(sigma_true * beta));

  Rng data_rng(config.seed, 3);
  const Eigen::MatrixXd root = q * lambda.cwiseSqrt().asDiagonal();
  Eigen::MatrixXd z(config.samples, f);
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (int k = 0; k < f; ++k) z(r, k) = data_rng.normal();
  const Eigen::MatrixXd x = z * root.transpose();
  Eigen::VectorXd t = x * beta;
  const double eta = std::sqrt(config.target_noise);
  for (Eigen::Index r = 0; r < t.size(); ++r) t[r] += eta * data_rng.normal();
  const Moments m = empirical_moments(x, t);

  std::optional<Moments> perm;
  if (config.permuted_target) {
    Eigen::VectorXd tp = t;
    Rng perm_rng(config.seed, 4);
    std::vector<double> buf(tp.data(), tp.data() + tp.size());
    perm_rng.shuffle(buf);
    tp = Eigen::Map<Eigen::VectorXd>(buf.data(), tp.size());
    perm = empirical_moments(x, tp);
  }

  // Initial weights and readout.
  Rng init_rng(config.seed, 5);
  Eigen::MatrixXd w(n, f);
  const double row_scale = 1.0 / std::sqrt(static_cast<double>(n));
  if (config.alignment == InitAlignment::kAligned) {
    // Every channel starts on the target's projection onto the top eigenspace,
    // so input capture and task information share one ordering (the gain).
    const Eigen::MatrixXd top_basis = q.leftCols(config.aligned_rank);
    Eigen::VectorXd u = top_basis * (top_basis.transpose() * beta);
    u.normalize();
    for (int i = 0; i < n; ++i) {
      const double gain = std::exp(init_rng.uniform(-1.0, 1.0));
      Eigen::VectorXd row = gain * u;
      for (int j = 0; j < f; ++j) row[j] += config.init_noise * init_rng.normal() / std::sqrt(static_cast<double>(f));
      w.row(i) = row_scale * row.transpose();
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < f; ++j) w(i, j) = row_scale * init_rng.normal() / std::sqrt(static_cast<double>(f));
  }
  Eigen::VectorXd a(n);
  for (int i = 0; i < n; ++i) a[i] = config.readout_init * init_rng.normal() / std::sqrt(static_cast<double>(n));

  TrajectoryTrace trace;
  trace.config = config;
  double prev_coupling = 0.0;
  bool first = true;
  for (int step = 0; step <= config.steps; ++step) {
    const Eigen::MatrixXd sw = w * m.sigma;                  // [N, F]
    const Eigen::MatrixXd cov_y = sw * w.transpose();        // W Sigma W'
    const Eigen::VectorXd cov_yt = w * m.c;
    const double loss = m.sigma_t_sq - 2 * a.dot(cov_yt) + a.dot(cov_y * a) + config.sigma0_sq * a.squaredNorm();
    if (!std::isfinite(loss)) {
      throw DegenerateDataError("simulate_training: loss diverged at step " + std::to_string(step));
    }
    const Eigen::VectorXd grad_a = -2 * cov_yt + 2 * (cov_y * a) + 2 * config.sigma0_sq * a;
    const Eigen::VectorXd resid = sw.transpose() * a - m.c;  // Sigma W' a - c
    const Eigen::MatrixXd grad_w = 2 * a * resid.transpose();

    if (step % config.record_every == 0 || step == config.steps) {
      double sigma0 = config.sigma0_sq;
      if (config.remedian_sigma0) {
        std::vector<double> s;
        for (Eigen::Index i = 0; i < n; ++i) s.push_back(sw.row(i).dot(w.row(i)));
        sigma0 = median(s);
      }
      const ChannelInfo info = channel_info(w, m, sigma0);
      const CosineDiagnostics cd = cosine_diagnostics(w, m.sigma, m.c, sigma0, m.sigma_t_sq, grad_w);
      TrajectoryPoint p;
      p.step = step;
      p.loss = loss;
      p.coupling = safe_spearman(info.i_x, info.i_ty);
      p.cos_ix_it = cd.mean_ix_it;
      p.cos_update_ix = cd.mean_update_ix;
      p.cos_update_it = cd.mean_update_it;
      p.mean_i_x = info.i_x.mean();
      p.mean_i_ty = info.i_ty.mean();
      p.delta_coupling = first ? 0.0 : p.coupling - prev_coupling;
      if (perm) {
        const ChannelInfo pi = channel_info(w, *perm, sigma0);
        p.permuted_coupling = safe_spearman(pi.i_x, pi.i_ty);
        p.permuted_mean_i_ty = pi.i_ty.mean();
      }
      prev_coupling = p.coupling;
      first = false;
      trace.points.push_back(p);
      trace.i_x.push_back(info.i_x);
      trace.i_ty.push_back(info.i_ty);
    }
    if (step == config.steps) break;
    a -= config.lr * grad_a;
    w -= config.lr * grad_w;
  }
  const auto& final_ix = trace.i_x.back();
  const auto& final_ty = trace.i_ty.back();
  for (std::size_t k = 0; k < trace.points.size(); ++k) {
    trace.points[k].rank_persistence_ix = safe_spearman(trace.i_x[k], final_ix);
    trace.points[k].rank_persistence_ty = safe_spearman(trace.i_ty[k], final_ty);
  }
  return trace;
}

}  // namespace channel_axes
