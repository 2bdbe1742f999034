#include "channel_axes/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "channel_axes/error.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/rng.hpp"

namespace channel_axes {

namespace {

void check_pair(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) {
    throw ValidationError("correlation: length mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  }
  if (x.size() < 3) throw ValidationError("correlation: need >= 3 samples");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("correlation: non-finite entry");
}

double pearson_unchecked(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  const double scale_x = x.cwiseAbs().maxCoeff();
  const double scale_y = y.cwiseAbs().maxCoeff();
  const auto n = static_cast<double>(x.size());
  if (sxx <= 1e-24 * n * std::max(1.0, scale_x * scale_x) ||
      syy <= 1e-24 * n * std::max(1.0, scale_y * scale_y)) {
    throw DegenerateDataError("degenerate input: zero variance");
  }
  return std::clamp(xc.dot(yc) / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::int64_t choose2(std::int64_t n) { return n * (n - 1) / 2; }

}  // namespace

Eigen::VectorXd average_ranks(const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  Eigen::VectorXd ranks(x.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  check_pair(x, y);
  return pearson_unchecked(average_ranks(x), average_ranks(y));
}

double kendall_tau_b(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  check_pair(x, y);
  const auto n = x.size();
  std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0) {
        ++ties_x;
      } else if (dy == 0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const auto pairs = choose2(n);
  const double denom = std::sqrt(static_cast<double>(pairs - ties_x) *
                                 static_cast<double>(pairs - ties_y));
  if (denom == 0) throw DegenerateDataError("degenerate input: zero variance");
  return static_cast<double>(concordant - discordant) / denom;
}

double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y, CorrelationMethod method) {
  switch (method) {
    case CorrelationMethod::kPearson:
      check_pair(x, y);
      return pearson_unchecked(x, y);
    case CorrelationMethod::kSpearman:
      return spearman(x, y);
    case CorrelationMethod::kKendall:
      return kendall_tau_b(x, y);
  }
  return 0.0;
}

Eigen::VectorXd zscore(const Eigen::VectorXd& x) {
  const auto n = x.size();
  if (n < 2) return Eigen::VectorXd::Zero(n);
  const double mean = x.mean();
  const Eigen::VectorXd c = x.array() - mean;
  const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(n - 1));
  if (!(sd > 1e-300) || sd <= 1e-13 * std::max(1.0, std::abs(mean))) return Eigen::VectorXd::Zero(n);
  return c / sd;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

Partition canonical_partition(const Partition& labels) {
  std::map<int, int> remap;
  Partition out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

double adjusted_rand_index(const Partition& a, const Partition& b) {
  if (a.size() != b.size()) {
    throw ValidationError("adjusted_rand_index: length mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  const auto n = static_cast<std::int64_t>(a.size());
  if (n < 2) throw ValidationError("adjusted_rand_index: need >= 2 items");
  const Partition ca = canonical_partition(a);
  const Partition cb = canonical_partition(b);
  const int ka = *std::max_element(ca.begin(), ca.end()) + 1;
  const int kb = *std::max_element(cb.begin(), cb.end()) + 1;
  std::vector<std::int64_t> table(static_cast<std::size_t>(ka) * kb, 0), rows(ka, 0), cols(kb, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    ++table[static_cast<std::size_t>(ca[i]) * kb + cb[i]];
    ++rows[ca[i]];
    ++cols[cb[i]];
  }
  double index = 0, sum_a = 0, sum_b = 0;
  for (auto v : table) index += static_cast<double>(choose2(v));
  for (auto v : rows) sum_a += static_cast<double>(choose2(v));
  for (auto v : cols) sum_b += static_cast<double>(choose2(v));
  const double expected = sum_a * sum_b / static_cast<double>(choose2(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0) return ca == cb ? 1.0 : 0.0;
  return (index - expected) / denom;
}

PermutationNull permutation_null_ari(const Partition& a, const Partition& b, int n_perm,
                                     std::uint64_t seed) {
  if (n_perm < 100) throw ValidationError("permutation_null_ari: n_perm must be >= 100");
  PermutationNull out;
  out.n_perm = n_perm;
  out.observed = adjusted_rand_index(a, b);
  std::vector<double> null(static_cast<std::size_t>(n_perm));
  parallel_for(null.size(), [&](std::size_t i) {
    Partition perm = b;
    Rng rng(seed, i);
    rng.shuffle(perm);
    null[i] = adjusted_rand_index(a, perm);
  });
  double sum = 0;
  int exceed = 0;
  for (double v : null) {
    sum += v;
    if (v >= out.observed - 1e-12) ++exceed;
  }
  out.null_mean = sum / n_perm;
  out.null_p95 = quantile(null, 0.95);
  out.p_value = static_cast<double>(exceed) / n_perm;
  return out;
}

namespace {

struct LloydRun {
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  double inertia = 0;
  std::vector<double> trace;
};

LloydRun lloyd(const Eigen::MatrixXd& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  LloydRun run;
  run.centers.resize(k, x.cols());
  // k-means++ seeding
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
  run.centers.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - run.centers.row(c - 1)).squaredNorm());
    }
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    }
    run.centers.row(c) = x.row(pick);
  }

  run.labels.assign(static_cast<std::size_t>(n), -1);
  Eigen::VectorXd dist(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    double inertia = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - run.centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (run.labels[i] != best) changed = true;
      run.labels[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    // Empty clusters take the point farthest from its center.
    std::vector<int> counts(k, 0);
    for (int l : run.labels) ++counts[l];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i) {
        if (dist[i] > dist[far] && counts[run.labels[i]] > 1) far = i;
      }
      if (counts[run.labels[far]] <= 1) continue;
      inertia -= dist[far];
      --counts[run.labels[far]];
      run.labels[far] = c;
      ++counts[c];
      dist[far] = 0;
      changed = true;
    }
    run.trace.push_back(inertia);
    run.inertia = inertia;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(run.labels[i]) += x.row(i);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) run.centers.row(c) = sums.row(c) / counts[c];
    }
    if (!changed && iter > 0) break;
  }
  // Final inertia against the updated centers.
  double inertia = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    inertia += (x.row(i) - run.centers.row(run.labels[i])).squaredNorm();
  }
  run.inertia = inertia;
  run.trace.push_back(inertia);
  return run;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int n_init, std::uint64_t seed,
                    int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (n < k) {
    throw ValidationError("kmeans: N < k (" + std::to_string(n) + " < " + std::to_string(k) + ")");
  }
  if (n_init < 1) throw ValidationError("kmeans: n_init must be >= 1");
  if (!points.allFinite()) throw ValidationError("kmeans: non-finite point");

  // Work on lexicographically sorted points so the result does not depend on
  // input order.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < points.cols(); ++d) {
      if (points(a, d) != points(b, d)) return points(a, d) < points(b, d);
    }
    return false;
  });
  Eigen::MatrixXd sorted(n, points.cols());
  for (Eigen::Index i = 0; i < n; ++i) sorted.row(i) = points.row(order[i]);

  LloydRun best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < n_init; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    LloydRun run = lloyd(sorted, k, rng, max_iter);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  KMeansResult out;
  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) out.labels[order[i]] = best.labels[i];
  out.centers = best.centers;
  out.inertia = best.inertia;
  out.inertia_trace = best.trace;
  return out;
}

BootstrapInterval bootstrap_mean_diff(const std::vector<std::pair<double, double>>& paired,
                                      int n_boot, std::uint64_t seed) {
  if (paired.size() < 2) throw ValidationError("bootstrap_mean_diff: need >= 2 units");
  if (n_boot < 1) throw ValidationError("bootstrap_mean_diff: n_boot must be >= 1");
  std::vector<double> deltas;
  deltas.reserve(paired.size());
  for (const auto& [x, y] : paired) deltas.push_back(x - y);
  BootstrapInterval out;
  out.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
  std::vector<double> means(static_cast<std::size_t>(n_boot));
  parallel_for(means.size(), [&](std::size_t b) {
    Rng rng(seed, b);
    double sum = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) sum += deltas[rng.index(deltas.size())];
    means[b] = sum / static_cast<double>(deltas.size());
  });
  out.ci95_lo = quantile(means, 0.025);
  out.ci95_hi = quantile(means, 0.975);
  // Constant deltas give an exactly degenerate interval.
  if (std::all_of(deltas.begin(), deltas.end(), [&](double d) { return d == deltas[0]; })) {
    out.mean_delta = out.ci95_lo = out.ci95_hi = deltas[0];
  }
  return out;
}

std::pair<double, double> wilson_ci(std::int64_t successes, std::int64_t trials, double z) {
  if (trials < 1 || successes < 0 || successes > trials) {
    throw ValidationError("wilson_ci: need 0 <= successes <= trials and trials >= 1");
  }
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1 + z2 / n;
  const double center = (p + z2 / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
  double lo = center - half;
  double hi = center + half;
  if (successes == 0) lo = 0.0;
  if (successes == trials) hi = 1.0;
  return {std::max(0.0, lo), std::min(1.0, hi)};
}

}  // namespace channel_axes
