#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "channel_axes/axis_metrics.hpp"
#include "channel_axes/bundle.hpp"
#include "channel_axes/linear_gaussian.hpp"
#include "channel_axes/replaceability.hpp"

namespace channel_axes {

// ---------------------------------------------------------------------------
// Scores (higher = keep)

enum class Normalization { kRaw, kWithinLayerZ };

enum class ExcludedPolicy { kForceDrop, kForceKeep };

struct ScoreTable {
  std::string method;
  Normalization normalization = Normalization::kRaw;
  std::vector<std::string> layers;
  std::vector<Eigen::VectorXd> scores;
  // +1 never removed, -1 removed before any scored channel, 0 scored.
  std::vector<std::vector<int>> forced;
};

struct ScoreParams {
  double composite_alpha = 2.0;  // composite_ix: alpha z(I_X) - gamma z(R_bar_X)
  double composite_gamma = 0.25;
  double mixed_alpha = 1.0;      // mixed_mag_ix: z(|w|) + alpha z(I_X)
  double red_beta = 1.0;         // ix_minus_red: I_X - beta R_bar_X
  std::uint64_t seed = 0;        // random
  std::string external;          // external(name)
  ExcludedPolicy excluded = ExcludedPolicy::kForceDrop;
};

// Known names: magnitude, taylor, random, fpgm, act_rms, bn_scale, i_x,
// r_bar_x_neg, composite_ix, mixed_mag_ix, ix_minus_red, composite_pid, i_ty,
// local_compact, external:<name>.
bool is_score_method(std::string_view method);
bool score_needs_metrics(std::string_view method);
bool score_needs_hulls(std::string_view method);
const std::vector<std::string>& score_methods();

// `metrics` and `hulls` may be null when the method does not need them.
ScoreTable compute_scores(const TensorBundle& bundle, const ChannelMetricTable* metrics,
                          const std::vector<std::vector<Hull>>* hulls, std::string_view method,
                          const ScoreParams& params = {});

// ---------------------------------------------------------------------------
// Architecture and FLOPs (multiply-accumulates)

struct LayerShape {
  std::string name;
  LayerKind kind = LayerKind::kStandard;
  std::int64_t channels = 0;
  std::int64_t fan_in = 0;  // F = C_in * kh * kw
  std::int64_t kh = 1, kw = 1;
  std::int64_t h = 1, w = 1;
};

struct Architecture {
  std::vector<LayerShape> layers;
  GraphSpec graph;

  std::size_t index_of(const std::string& name) const;
};

Architecture architecture_of(const TensorBundle& bundle);

struct PruneMask {
  std::vector<std::string> layers;
  std::vector<std::vector<bool>> keep;
  double sparsity_nominal = 0.0;
  double sparsity_achieved = 0.0;
  double flops_fraction_pruned = 0.0;
  bool min_keep_bound = false;  // nominal sparsity unreachable

  static PruneMask full(const Architecture& arch);
};

struct FlopsReport {
  std::vector<double> per_layer;  // pruned MACs
  std::vector<double> per_layer_unpruned;
  double total = 0.0;
  double total_unpruned = 0.0;
  double fraction_pruned = 0.0;
};

FlopsReport flops(const Architecture& arch, const PruneMask& mask);

// ---------------------------------------------------------------------------
// Masks

struct MaskOptions {
  int min_keep = 1;
};

// Removes round(sparsity * total channels) lowest-scoring units pooled across
// layers. Coupled layers form one unit per channel index, scored by the mean
// of their members.
PruneMask global_threshold_mask(const Architecture& arch, const ScoreTable& scores, double sparsity,
                                const MaskOptions& options = {});

// Per-layer removal counts from `allocation`, channel choice within each
// layer (or coupling group) from `selection`.
PruneMask hybrid_mask(const Architecture& arch, const ScoreTable& allocation, const ScoreTable& selection,
                      double sparsity, const MaskOptions& options = {});

// ---------------------------------------------------------------------------
// Curves, AUC and comparisons

struct CurvePoint {
  double sparsity_nominal = 0.0;
  double flops_fraction = 0.0;
  double retention = 0.0;
};

struct PruneCurve {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;  // sorted by flops_fraction
};

std::vector<double> default_sparsity_levels();

// Retention of the synthetic chain under per-layer keep masks: every pruned
// layer's outputs are rebuilt by least squares from its kept channels, and
// retention = R^2(pruned) / R^2(unpruned) of the fixed head, clipped below at 0.
double synthetic_retention(const SyntheticModel& model, const PruneMask& mask);

// One curve per sparsity level list; `with_origin` prepends (0, 0, 1).
PruneCurve sweep_synthetic(const SyntheticModel& model, const Architecture& arch, const ScoreTable& scores,
                           const std::vector<double>& levels, std::uint64_t seed, bool with_origin = true,
                           const MaskOptions& options = {});

struct ExternalAccuracy {
  std::string method;
  std::uint64_t seed = 0;
  double sparsity_nominal = 0.0;
  double flops_fraction = 0.0;
  double accuracy = 0.0;
};

// Rows with sparsity_nominal == 0 hold the unpruned accuracy for their
// (method, seed); retention = accuracy / unpruned.
std::vector<PruneCurve> curves_from_accuracy(const std::vector<ExternalAccuracy>& rows);

struct AucResult {
  double lo = 0.0, hi = 0.0;
  std::vector<double> auc;  // per input curve
};

double interpolate_curve(const PruneCurve& curve, double x);
AucResult auc_common_interval(const std::vector<PruneCurve>& curves);

struct FamilyDelta {
  std::string label;  // "best_local - best_target", ...
  std::string left, right;
  double mean_delta = 0.0, ci95_lo = 0.0, ci95_hi = 0.0;
  int n_seeds = 0;
};

struct CompareResult {
  // method -> seed -> AUC (per-seed common interval)
  std::map<std::string, std::map<std::uint64_t, double>> auc;
  std::map<std::string, std::string> family_best;  // family -> method
  std::map<std::string, double> method_mean;
  std::vector<FamilyDelta> deltas;
};

CompareResult compare_methods(const std::vector<PruneCurve>& curves,
                              const std::map<std::string, std::string>& family_of, int n_boot,
                              std::uint64_t seed);

// method -> seed -> AUC with the per-seed common interval.
std::map<std::string, std::map<std::uint64_t, double>> per_seed_auc(const std::vector<PruneCurve>& curves);

struct LosoFold {
  std::uint64_t held_out = 0;
  std::string chosen;
  double chosen_auc = 0.0;
  std::string oracle;
  double oracle_auc = 0.0;
  double gap_to_oracle = 0.0;  // chosen - oracle, <= 0
  std::map<std::string, double> delta_vs;  // comparator -> chosen - comparator
};

struct LosoResult {
  std::vector<LosoFold> folds;
  double mean_gap = 0.0;
  std::map<std::string, double> mean_delta_vs;
};

LosoResult loso_selector(const std::map<std::string, std::map<std::uint64_t, double>>& auc,
                         const std::set<std::string>& family, const std::vector<std::string>& comparators);

}  // namespace channel_axes
