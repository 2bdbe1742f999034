#include <algorithm>
#include <cmath>
#include <sstream>

#include "channel_axes/error.hpp"
#include "channel_axes/pruning.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

std::vector<double> default_sparsity_levels() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
}

namespace {

double head_r2(const SyntheticModel& model, const PruneMask* mask) {
  Eigen::MatrixXd s = model.layers.front().sigma_x;
  Eigen::VectorXd c = model.layers.front().task_cov;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::MatrixXd p = layer.weights * s * layer.weights.transpose() +
                        layer.sigma0_sq * layer.noise_mix * layer.noise_mix.transpose();
    Eigen::VectorXd q = layer.weights * c;
    std::vector<Eigen::Index> kept;
    if (mask) {
      for (std::size_t i = 0; i < mask->keep[l].size(); ++i) {
        if (mask->keep[l][i]) kept.push_back(static_cast<Eigen::Index>(i));
      }
    }
    if (mask && static_cast<Eigen::Index>(kept.size()) < layer.num_channels()) {
      const Eigen::MatrixXd ref = layer.output_cov();
      const auto k = static_cast<Eigen::Index>(kept.size());
      Eigen::MatrixXd ref_kk(k, k), ref_nk(layer.num_channels(), k), p_kk(k, k);
      Eigen::VectorXd q_k(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        ref_nk.col(a) = ref.col(kept[a]);
        q_k[a] = q[kept[a]];
        for (Eigen::Index b = 0; b < k; ++b) {
          ref_kk(a, b) = ref(kept[a], kept[b]);
          p_kk(a, b) = p(kept[a], kept[b]);
        }
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ref_kk);
      cod.setThreshold(1e-12);
      const Eigen::MatrixXd a = cod.solve(ref_nk.transpose()).transpose();  // [N, k]
      p = a * p_kk * a.transpose();
      q = a * q_k;
    }
    s = 0.5 * (p + p.transpose());
    c = q;
  }
  const auto& last = model.layers.back();
  const Eigen::VectorXd& r = last.readout;
  const double var_t = last.target_var;
  const double mse = var_t - 2.0 * r.dot(c) + r.dot(s * r);
  return 1.0 - mse / var_t;
}

}  // namespace

double synthetic_retention(const SyntheticModel& model, const PruneMask& mask) {
  if (mask.keep.size() != model.layers.size()) {
    throw ValidationError("synthetic_retention: mask covers " + std::to_string(mask.keep.size()) +
                          " layers, model has " + std::to_string(model.layers.size()));
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (static_cast<Eigen::Index>(mask.keep[l].size()) != model.layers[l].num_channels()) {
      throw ValidationError("synthetic_retention: mask length mismatch in layer " + std::to_string(l));
    }
  }
  const double full = head_r2(model, nullptr);
  if (!(full > 0)) throw DegenerateDataError("synthetic_retention: unpruned model explains no target variance");
  return std::max(0.0, head_r2(model, &mask) / full);
}

PruneCurve sweep_synthetic(const SyntheticModel& model, const Architecture& arch, const ScoreTable& scores,
                           const std::vector<double>& levels, std::uint64_t seed, bool with_origin,
                           const MaskOptions& options) {
  PruneCurve curve;
  curve.method = scores.method;
  curve.seed = seed;
  if (with_origin) curve.points.push_back({0.0, 0.0, 1.0});
  for (double level : levels) {
    const PruneMask mask = global_threshold_mask(arch, scores, level, options);
    curve.points.push_back({level, mask.flops_fraction_pruned, synthetic_retention(model, mask)});
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.flops_fraction < b.flops_fraction; });
  return curve;
}

std::vector<PruneCurve> curves_from_accuracy(const std::vector<ExternalAccuracy>& rows) {
  std::map<std::pair<std::string, std::uint64_t>, std::vector<ExternalAccuracy>> grouped;
  for (const auto& r : rows) grouped[{r.method, r.seed}].push_back(r);
  std::vector<PruneCurve> out;
  for (const auto& [key, group] : grouped) {
    const ExternalAccuracy* base = nullptr;
    for (const auto& r : group) {
      if (r.sparsity_nominal == 0.0) base = &r;
    }
    if (!base) {
      throw ValidationError("accuracy rows for method '" + key.first + "' seed " + std::to_string(key.second) +
                            " lack the sparsity_nominal = 0 (unpruned) entry");
    }
    if (!(base->accuracy > 0)) throw DegenerateDataError("unpruned accuracy must be > 0 for method '" + key.first + "'");
    PruneCurve c;
    c.method = key.first;
    c.seed = key.second;
    for (const auto& r : group) {
      c.points.push_back({r.sparsity_nominal, r.flops_fraction, std::max(0.0, r.accuracy / base->accuracy)});
    }
    std::stable_sort(c.points.begin(), c.points.end(),
                     [](const CurvePoint& a, const CurvePoint& b) { return a.flops_fraction < b.flops_fraction; });
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

// Sorted (x, y) with duplicate x merged by averaging.
std::vector<std::pair<double, double>> curve_xy(const PruneCurve& curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : curve.points) pts.emplace_back(p.flops_fraction, p.retention);
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, double>> merged;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    double sum = 0;
    while (j < pts.size() && pts[j].first == pts[i].first) sum += pts[j++].second;
    merged.emplace_back(pts[i].first, sum / static_cast<double>(j - i));
    i = j;
  }
  return merged;
}

double interpolate_xy(const std::vector<std::pair<double, double>>& xy, double x) {
  if (x <= xy.front().first) return xy.front().second;
  if (x >= xy.back().first) return xy.back().second;
  const auto it = std::upper_bound(xy.begin(), xy.end(), x, [](double v, const auto& p) { return v < p.first; });
  const auto& [x1, y1] = *it;
  const auto& [x0, y0] = *(it - 1);
  return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

}  // namespace

double interpolate_curve(const PruneCurve& curve, double x) {
  if (curve.points.empty()) throw ValidationError("interpolate_curve: empty curve");
  return interpolate_xy(curve_xy(curve), x);
}

AucResult auc_common_interval(const std::vector<PruneCurve>& curves) {
  if (curves.empty()) throw ValidationError("auc: no curves");
  AucResult out;
  out.lo = -INFINITY;
  out.hi = INFINITY;
  std::vector<std::vector<std::pair<double, double>>> xys;
  for (const auto& c : curves) {
    auto xy = curve_xy(c);
    if (xy.size() < 2) {
      throw ValidationError("auc: curve '" + c.method + "' seed " + std::to_string(c.seed) +
                            " needs >= 2 distinct FLOPs points");
    }
    out.lo = std::max(out.lo, xy.front().first);
    out.hi = std::min(out.hi, xy.back().first);
    xys.push_back(std::move(xy));
  }
  if (!(out.hi > out.lo)) {
    std::ostringstream msg;
    msg << "auc: empty common interval; supports:";
    for (std::size_t i = 0; i < curves.size(); ++i) {
      msg << " " << curves[i].method << "/" << curves[i].seed << "=[" << xys[i].front().first << ", "
          << xys[i].back().first << "]";
    }
    throw ValidationError(msg.str());
  }
  for (const auto& xy : xys) {
    std::vector<double> xs{out.lo};
    for (const auto& [x, y] : xy) {
      if (x > out.lo && x < out.hi) xs.push_back(x);
    }
    xs.push_back(out.hi);
    double area = 0;
    for (std::size_t k = 1; k < xs.size(); ++k) {
      area += 0.5 * (xs[k] - xs[k - 1]) * (interpolate_xy(xy, xs[k]) + interpolate_xy(xy, xs[k - 1]));
    }
    out.auc.push_back(area / (out.hi - out.lo));
  }
  return out;
}

std::map<std::string, std::map<std::uint64_t, double>> per_seed_auc(const std::vector<PruneCurve>& curves) {
  std::map<std::uint64_t, std::vector<const PruneCurve*>> by_seed;
  for (const auto& c : curves) by_seed[c.seed].push_back(&c);
  std::map<std::string, std::map<std::uint64_t, double>> out;
  for (const auto& [seed, list] : by_seed) {
    std::vector<PruneCurve> group;
    for (const auto* c : list) group.push_back(*c);
    const AucResult r = auc_common_interval(group);
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (out[group[i].method].count(seed)) {
        throw ValidationError("duplicate curve for method '" + group[i].method + "' seed " + std::to_string(seed));
      }
      out[group[i].method][seed] = r.auc[i];
    }
  }
  return out;
}

namespace {

FamilyDelta paired_delta(const std::string& label, const std::string& left, const std::string& right,
                         const std::map<std::string, std::map<std::uint64_t, double>>& auc, int n_boot,
                         std::uint64_t seed) {
  FamilyDelta d;
  d.label = label;
  d.left = left;
  d.right = right;
  std::vector<std::pair<double, double>> pairs;
  for (const auto& [s, v] : auc.at(left)) {
    auto it = auc.at(right).find(s);
    if (it != auc.at(right).end()) pairs.emplace_back(v, it->second);
  }
  d.n_seeds = static_cast<int>(pairs.size());
  if (pairs.empty()) return d;
  if (pairs.size() == 1) {
    d.mean_delta = d.ci95_lo = d.ci95_hi = pairs[0].first - pairs[0].second;
    return d;
  }
  const BootstrapInterval b = bootstrap_mean_diff(pairs, n_boot, seed);
  d.mean_delta = b.mean_delta;
  d.ci95_lo = b.ci95_lo;
  d.ci95_hi = b.ci95_hi;
  return d;
}

}  // namespace

CompareResult compare_methods(const std::vector<PruneCurve>& curves,
                              const std::map<std::string, std::string>& family_of, int n_boot,
                              std::uint64_t seed) {
  CompareResult out;
  out.auc = per_seed_auc(curves);
  std::map<std::string, std::vector<std::string>> members;
  for (const auto& [method, by_seed] : out.auc) {
    double sum = 0;
    for (const auto& [s, v] : by_seed) sum += v;
    out.method_mean[method] = sum / static_cast<double>(by_seed.size());
    auto f = family_of.find(method);
    if (f != family_of.end()) members[f->second].push_back(method);
  }
  for (const auto& [method, family] : family_of) {
    if (!out.auc.count(method)) {
      throw ValidationError("compare: method '" + method + "' (family '" + family + "') has no curves");
    }
  }
  if (!members.count("local")) throw ValidationError("compare: family 'local' has no methods");
  for (const auto& [family, list] : members) {
    std::string best = list.front();
    for (const auto& m : list) {
      if (out.method_mean[m] > out.method_mean[best]) best = m;
    }
    out.family_best[family] = best;
  }
  const std::string& local = out.family_best["local"];
  std::uint64_t stream = 0;
  if (out.family_best.count("target")) {
    out.deltas.push_back(paired_delta("best_local - best_target", local, out.family_best["target"], out.auc,
                                      n_boot, derive_seed(seed, stream++)));
  }
  if (out.family_best.count("hybrid")) {
    out.deltas.push_back(paired_delta("best_local - best_hybrid", local, out.family_best["hybrid"], out.auc,
                                      n_boot, derive_seed(seed, stream++)));
  }
  if (members.count("baseline")) {
    for (const auto& m : members["baseline"]) {
      out.deltas.push_back(paired_delta("best_local - " + m, local, m, out.auc, n_boot, derive_seed(seed, stream++)));
    }
  }
  return out;
}

LosoResult loso_selector(const std::map<std::string, std::map<std::uint64_t, double>>& auc,
                         const std::set<std::string>& family, const std::vector<std::string>& comparators) {
  if (family.empty()) throw ValidationError("loso: empty score family");
  std::set<std::uint64_t> seeds;
  for (const auto& name : family) {
    auto it = auc.find(name);
    if (it == auc.end()) throw ValidationError("loso: family score '" + name + "' has no curves");
    for (const auto& [s, v] : it->second) seeds.insert(s);
  }
  for (const auto& c : comparators) {
    if (!auc.count(c)) throw ValidationError("loso: comparator '" + c + "' has no curves");
  }
  if (seeds.size() < 2) throw ValidationError("loso: need >= 2 seeds");
  for (const auto& name : family) {
    if (auc.at(name).size() != seeds.size()) {
      throw ValidationError("loso: score '" + name + "' is missing seeds");
    }
  }

  LosoResult out;
  std::map<std::string, int> delta_counts;
  for (auto held : seeds) {
    LosoFold fold;
    fold.held_out = held;
    double best_mean = -INFINITY;
    for (const auto& name : family) {
      double sum = 0;
      int n = 0;
      for (const auto& [s, v] : auc.at(name)) {
        if (s == held) continue;
        sum += v;
        ++n;
      }
      const double mean = sum / n;
      if (mean > best_mean) {
        best_mean = mean;
        fold.chosen = name;
      }
    }
    fold.chosen_auc = auc.at(fold.chosen).at(held);
    fold.oracle_auc = -INFINITY;
    for (const auto& name : family) {
      const double v = auc.at(name).at(held);
      if (v > fold.oracle_auc) {
        fold.oracle_auc = v;
        fold.oracle = name;
      }
    }
    fold.gap_to_oracle = fold.chosen_auc - fold.oracle_auc;
    for (const auto& c : comparators) {
      auto it = auc.at(c).find(held);
      if (it == auc.at(c).end()) continue;
      fold.delta_vs[c] = fold.chosen_auc - it->second;
      out.mean_delta_vs[c] += fold.delta_vs[c];
      ++delta_counts[c];
    }
    out.mean_gap += fold.gap_to_oracle;
    out.folds.push_back(std::move(fold));
  }
  out.mean_gap /= static_cast<double>(out.folds.size());
  for (auto& [c, v] : out.mean_delta_vs) v /= delta_counts[c];
  return out;
}

}  // namespace channel_axes
