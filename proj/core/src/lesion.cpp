#include "channel_axes/lesion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "channel_axes/axis_metrics.hpp"
#include "channel_axes/error.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/replaceability.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

std::optional<double> recovery_fraction(double delta_loss, double delta_loss_replaced,
                                        double threshold) {
  if (!(delta_loss > threshold) || delta_loss <= 0.0) return std::nullopt;
  return (delta_loss - delta_loss_replaced) / delta_loss;
}

namespace {

std::optional<double> safe_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 3) return std::nullopt;
  try {
    return spearman(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                    Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
  } catch (const DegenerateDataError&) {
    return std::nullopt;
  }
}

std::optional<double> safe_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 3) return std::nullopt;
  try {
    return correlation(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                       Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
  } catch (const DegenerateDataError&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<LesionThresholdSummary> summarize_lesions(const std::vector<LesionRecord>& records,
                                                      const std::vector<double>& thresholds) {
  std::vector<LesionThresholdSummary> out;
  for (double t : thresholds) {
    LesionThresholdSummary s;
    s.threshold = t;
    std::vector<double> rec, pr2, tmi, ix;
    for (const auto& r : records) {
      const auto v = recovery_fraction(r.delta_loss, r.delta_loss_replaced, t);
      if (!v) continue;
      rec.push_back(*v);
      pr2.push_back(r.peer_r2);
      tmi.push_back(r.task_mi);
      ix.push_back(r.i_x);
    }
    s.n = static_cast<int>(rec.size());
    if (s.n > 0) {
      s.median_recovery = median(rec);
      s.frac_peer_helps =
          static_cast<double>(std::count_if(rec.begin(), rec.end(), [](double v) { return v > 0; })) / s.n;
    }
    s.rho_peer_r2 = safe_spearman(pr2, rec);
    s.rho_task_mi = safe_spearman(tmi, rec);
    s.rho_i_x = safe_spearman(ix, rec);
    out.push_back(s);
  }
  return out;
}

LesionResult lesion_experiment(const LinearGaussianModel& model, const std::vector<int>& channels,
                               const LesionConfig& config, int layer_id) {
  model.validate();
  const auto n_ch = static_cast<int>(model.num_channels());
  for (int c : channels) {
    if (c < 0 || c >= n_ch) throw ValidationError("lesion_experiment: channel index out of range");
  }
  if (config.samples < 10) throw ValidationError("lesion_experiment: need >= 10 samples");
  if (!(config.fit_fraction > 0 && config.fit_fraction < 1)) {
    throw ValidationError("lesion_experiment: fit_fraction must lie in (0, 1)");
  }
  const LayerSample data = sample_layer(model, config.samples, config.seed);
  const auto n_fit = static_cast<Eigen::Index>(std::floor(config.fit_fraction * static_cast<double>(config.samples)));
  const Eigen::Index n_eval = config.samples - n_fit;
  if (n_fit < 3 || n_eval < 3) throw ValidationError("lesion_experiment: fit/eval split too small");
  const Eigen::MatrixXd y_fit = data.outputs.topRows(n_fit);
  const Eigen::MatrixXd y_eval = data.outputs.bottomRows(n_eval);
  const Eigen::VectorXd t_eval = data.target.tail(n_eval);
  const Eigen::VectorXd& r = model.readout;

  const Eigen::VectorXd pred = y_eval * r;
  const double base_loss = (t_eval - pred).squaredNorm() / static_cast<double>(n_eval);

  const InputCapture ic = input_capture(model.weights, data.inputs.topRows(n_fit));
  const TaskMi tm = task_mi(y_fit, data.target.head(n_fit));

  LesionResult out;
  out.records.resize(channels.size());
  parallel_for(channels.size(), [&](std::size_t k) {
    const int c = channels[k];
    LesionRecord rec;
    rec.layer = layer_id;
    rec.channel = c;
    rec.task_mi = tm.i_ty[c];
    rec.i_x = ic.i_x[c];
    // Zeroing channel c shifts every prediction by -r_c * y_c.
    const Eigen::VectorXd lesioned = pred - r[c] * y_eval.col(c);
    rec.delta_loss = (t_eval - lesioned).squaredNorm() / static_cast<double>(n_eval) - base_loss;
    const PeerReconstruction peer = peer_reconstruction(c, y_fit, config.peers, config.ridge);
    rec.peer_r2 = peer.r2_fit;
    const Eigen::VectorXd replaced = lesioned + r[c] * peer.reconstruct(y_eval);
    rec.delta_loss_replaced = (t_eval - replaced).squaredNorm() / static_cast<double>(n_eval) - base_loss;
    rec.recovery = recovery_fraction(rec.delta_loss, rec.delta_loss_replaced);
    out.records[k] = rec;
  });
  out.summary = summarize_lesions(out.records, config.thresholds);
  return out;
}

MatchedTaskResult matched_task_analysis(const std::vector<LesionRecord>& records, int n_bins,
                                        double threshold) {
  if (n_bins < 1) throw ValidationError("matched_task_analysis: n_bins must be >= 1");
  struct Row {
    double task_mi, peer_r2, i_x, recovery;
  };
  std::map<int, std::vector<Row>> cells;
  for (const auto& r : records) {
    const auto v = recovery_fraction(r.delta_loss, r.delta_loss_replaced, threshold);
    if (!v) continue;
    cells[r.layer].push_back({r.task_mi, r.peer_r2, r.i_x, *v});
  }

  MatchedTaskResult out;
  std::vector<double> res_pr2, res_tmi, res_ix, res_rec;
  auto centered_ranks = [](const std::vector<double>& v) {
    const Eigen::VectorXd ranks =
        average_ranks(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    const auto m = static_cast<double>(v.size());
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (ranks[static_cast<Eigen::Index>(i)] - 0.5 * (m + 1)) / m;
    return out;
  };

  for (auto& [layer, rows] : cells) {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.task_mi < b.task_mi; });
    const auto n = rows.size();
    std::vector<std::vector<Row>> bins(static_cast<std::size_t>(n_bins));
    for (std::size_t i = 0; i < n; ++i) bins[i * static_cast<std::size_t>(n_bins) / n].push_back(rows[i]);
    for (const auto& bin : bins) {
      if (bin.size() < 2) {
        if (!bin.empty()) ++out.bins_skipped;
        continue;
      }
      ++out.bins_used;
      std::vector<double> pr2, tmi, ix, rec;
      for (const auto& r : bin) {
        pr2.push_back(r.peer_r2);
        tmi.push_back(r.task_mi);
        ix.push_back(r.i_x);
        rec.push_back(r.recovery);
      }
      for (double v : centered_ranks(pr2)) res_pr2.push_back(v);
      for (double v : centered_ranks(tmi)) res_tmi.push_back(v);
      for (double v : centered_ranks(ix)) res_ix.push_back(v);
      for (double v : centered_ranks(rec)) res_rec.push_back(v);
      for (std::size_t a = 0; a < bin.size(); ++a) {
        for (std::size_t b = a + 1; b < bin.size(); ++b) {
          if (bin[a].peer_r2 == bin[b].peer_r2) continue;
          const auto& hi = bin[a].peer_r2 > bin[b].peer_r2 ? bin[a] : bin[b];
          const auto& lo = bin[a].peer_r2 > bin[b].peer_r2 ? bin[b] : bin[a];
          ++out.pairs;
          if (hi.recovery > lo.recovery) ++out.wins;
        }
      }
    }
  }
  const auto n = static_cast<int>(res_rec.size());
  out.residual.push_back({"peer_r2", safe_pearson(res_pr2, res_rec), n});
  out.residual.push_back({"task_mi", safe_pearson(res_tmi, res_rec), n});
  out.residual.push_back({"i_x", safe_pearson(res_ix, res_rec), n});
  if (out.pairs > 0) {
    out.win_rate = static_cast<double>(out.wins) / static_cast<double>(out.pairs);
    out.win_ci = wilson_ci(out.wins, out.pairs);
  }
  return out;
}

}  // namespace channel_axes
