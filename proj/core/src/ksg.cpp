#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "channel_axes/error.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/pid.hpp"
#include "channel_axes/rng.hpp"

namespace channel_axes {

namespace {

// Index-keyed jitter of relative size 1e-10 so exact ties cannot occur.
std::vector<double> jittered(const Eigen::VectorXd& v, std::uint64_t stream) {
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size()));
  const double scale = 1e-10 * (sd > 0 ? sd : std::max(1.0, std::abs(mean)));
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Rng rng(static_cast<std::uint64_t>(i), stream);
    out[i] = v[i] + scale * (rng.uniform() - 0.5);
  }
  return out;
}

// Number of values strictly inside (c - r, c + r) in a sorted vector.
std::int64_t count_open(const std::vector<double>& sorted, double c, double r) {
  const auto lo = std::upper_bound(sorted.begin(), sorted.end(), c - r);
  const auto hi = std::lower_bound(sorted.begin(), sorted.end(), c + r);
  return hi > lo ? hi - lo : 0;
}

}  // namespace

double ksg_mi(const Eigen::VectorXd& x_in, const Eigen::VectorXd& y_in, int k) {
  if (x_in.size() != y_in.size()) throw ValidationError("ksg_mi: length mismatch");
  const auto n = static_cast<std::int64_t>(x_in.size());
  if (k < 1) throw ValidationError("ksg_mi: k must be >= 1");
  if (2 * static_cast<std::int64_t>(k) >= n) throw ValidationError("ksg_mi: k must be < n/2");
  if (n < 2 * k + 2) throw ValidationError("ksg_mi: need n >= 2k + 2 samples");
  if (!x_in.allFinite() || !y_in.allFinite()) throw ValidationError("ksg_mi: non-finite value");

  const std::vector<double> x = jittered(x_in, 0x6b73);
  const std::vector<double> y = jittered(y_in, 0x6b74);

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> xs(static_cast<std::size_t>(n)), ys_by_x(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) {
    xs[r] = x[order[r]];
    ys_by_x[r] = y[order[r]];
  }
  std::vector<double> ys = y;
  std::sort(ys.begin(), ys.end());

  std::vector<double> terms(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t r_idx) {
    const auto r = static_cast<std::int64_t>(r_idx);
    std::priority_queue<double> heap;  // k smallest joint distances
    auto visit = [&](std::int64_t j) {
      const double d = std::max(std::abs(xs[j] - xs[r]), std::abs(ys_by_x[j] - ys_by_x[r]));
      if (static_cast<int>(heap.size()) < k) {
        heap.push(d);
      } else if (d < heap.top()) {
        heap.pop();
        heap.push(d);
      }
    };
    std::int64_t lo = r - 1, hi = r + 1;
    while (lo >= 0 || hi < n) {
      const double dlo = lo >= 0 ? xs[r] - xs[lo] : INFINITY;
      const double dhi = hi < n ? xs[hi] - xs[r] : INFINITY;
      const double next = std::min(dlo, dhi);
      if (static_cast<int>(heap.size()) == k && next >= heap.top()) break;
      if (dlo <= dhi) {
        visit(lo--);
      } else {
        visit(hi++);
      }
    }
    const double eps = heap.top();
    const std::int64_t nx = count_open(xs, xs[r], eps) - 1;
    const std::int64_t ny = count_open(ys, ys_by_x[r], eps) - 1;
    terms[r_idx] = boost::math::digamma(static_cast<double>(nx + 1)) +
                   boost::math::digamma(static_cast<double>(ny + 1));
  });
  double mean_term = 0;
  for (double t : terms) mean_term += t;
  mean_term /= static_cast<double>(n);
  return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
         mean_term;
}

}  // namespace channel_axes
