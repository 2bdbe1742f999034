#include <algorithm>
#include <cmath>

#include "channel_axes/error.hpp"
#include "channel_axes/pruning.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

namespace {

constexpr std::string_view kExternalPrefix = "external:";

const std::vector<std::string> kMethods{
    "magnitude", "taylor",       "random",       "fpgm",          "act_rms",
    "bn_scale",  "i_x",          "r_bar_x_neg",  "composite_ix",  "mixed_mag_ix",
    "ix_minus_red", "composite_pid", "i_ty",     "local_compact",
};

const std::vector<std::string> kMetricMethods{"i_x",          "r_bar_x_neg", "composite_ix",
                                              "mixed_mag_ix", "ix_minus_red", "composite_pid",
                                              "i_ty",         "local_compact"};

Eigen::VectorXd baseline(const LayerRecord& layer, const std::string& name) {
  auto it = layer.baseline_scores.find(name);
  if (it == layer.baseline_scores.end()) {
    throw ValidationError("layer '" + layer.name + "' field 'baseline_scores." + name +
                          "': required by the score method but absent");
  }
  return to_vector(it->second);
}

Eigen::VectorXd row_norms(const Eigen::MatrixXd& w) { return w.rowwise().norm(); }

Eigen::VectorXd fpgm(const Eigen::MatrixXd& w) {
  const auto n = w.rows();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (w.row(i) - w.row(j)).norm();
      out[i] += d;
      out[j] += d;
    }
  }
  return out;
}

Eigen::VectorXd activation_rms(const LayerRecord& layer) {
  auto it = layer.baseline_scores.find("act_rms");
  if (it != layer.baseline_scores.end()) return to_vector(it->second);
  const Eigen::MatrixXd acts = to_matrix(layer.spatial_acts ? *layer.spatial_acts : layer.pooled_acts);
  return (acts.colwise().squaredNorm() / static_cast<double>(acts.rows())).cwiseSqrt().transpose();
}

}  // namespace

const std::vector<std::string>& score_methods() { return kMethods; }

bool is_score_method(std::string_view method) {
  if (method.substr(0, kExternalPrefix.size()) == kExternalPrefix && method.size() > kExternalPrefix.size()) {
    return true;
  }
  return std::find(kMethods.begin(), kMethods.end(), method) != kMethods.end();
}

bool score_needs_metrics(std::string_view method) {
  return std::find(kMetricMethods.begin(), kMetricMethods.end(), method) != kMetricMethods.end();
}

bool score_needs_hulls(std::string_view method) { return method == "local_compact"; }

ScoreTable compute_scores(const TensorBundle& bundle, const ChannelMetricTable* metrics,
                          const std::vector<std::vector<Hull>>* hulls, std::string_view method,
                          const ScoreParams& params) {
  if (!is_score_method(method)) throw ValidationError("unknown score method '" + std::string(method) + "'");
  if (score_needs_metrics(method) && !metrics) {
    throw ValidationError("score method '" + std::string(method) + "' needs channel metrics");
  }
  if (score_needs_hulls(method) && !hulls) {
    throw ValidationError("score method '" + std::string(method) + "' needs replaceability hulls");
  }
  ScoreTable table;
  table.method = std::string(method);
  const bool zscored = method == "composite_ix" || method == "mixed_mag_ix" || method == "composite_pid" ||
                       method == "local_compact";
  table.normalization = zscored ? Normalization::kWithinLayerZ : Normalization::kRaw;

  for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
    const LayerRecord& layer = bundle.layers[l];
    const auto n = layer.num_channels;
    const LayerMetrics* lm = metrics ? &metrics->layer(layer.name) : nullptr;
    Eigen::VectorXd s;
    if (method == "magnitude") {
      s = row_norms(to_matrix(layer.weight));
    } else if (method == "taylor") {
      s = baseline(layer, "taylor");
    } else if (method == "random") {
      Rng rng(params.seed, l);
      s.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) s[i] = rng.uniform();
    } else if (method == "fpgm") {
      s = fpgm(to_matrix(layer.weight));
    } else if (method == "act_rms") {
      s = activation_rms(layer);
    } else if (method == "bn_scale") {
      s = baseline(layer, "bn_scale").cwiseAbs();
    } else if (method == "i_x") {
      s = lm->i_x;
    } else if (method == "r_bar_x_neg") {
      s = -lm->r_bar_x;
    } else if (method == "composite_ix") {
      s = params.composite_alpha * zscore(lm->i_x) - params.composite_gamma * zscore(lm->r_bar_x);
    } else if (method == "mixed_mag_ix") {
      s = zscore(row_norms(to_matrix(layer.weight))) + params.mixed_alpha * zscore(lm->i_x);
    } else if (method == "ix_minus_red") {
      s = lm->i_x - params.red_beta * lm->r_bar_x;
    } else if (method == "composite_pid") {
      s = zscore(lm->i_ty.at(lm->primary_target)) + zscore(lm->syn) - zscore(lm->red_t);
    } else if (method == "i_ty") {
      s = lm->i_ty.at(lm->primary_target);
    } else if (method == "local_compact") {
      if (hulls->size() != bundle.layers.size()) throw ValidationError("local_compact: hull table does not cover every layer");
      s = -compact_scores(lm->i_x, (*hulls)[l]).local_compact;
    } else {
      s = baseline(layer, std::string(method.substr(kExternalPrefix.size())));
    }
    if (s.size() != n) {
      throw ValidationError("layer '" + layer.name + "': score method '" + std::string(method) +
                            "' produced " + std::to_string(s.size()) + " values for " + std::to_string(n) +
                            " channels");
    }
    if (!s.allFinite()) {
      throw DegenerateDataError("layer '" + layer.name + "': non-finite scores from '" + std::string(method) + "'");
    }
    std::vector<int> forced(static_cast<std::size_t>(n), 0);
    if (lm) {
      for (int i : lm->excluded) forced[i] = params.excluded == ExcludedPolicy::kForceDrop ? -1 : 1;
    }
    table.layers.push_back(layer.name);
    table.scores.push_back(std::move(s));
    table.forced.push_back(std::move(forced));
  }
  return table;
}

}  // namespace channel_axes
