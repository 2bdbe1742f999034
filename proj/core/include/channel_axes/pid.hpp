#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "channel_axes/gaussian_mi.hpp"

namespace channel_axes {

// Minimum-mutual-information PID of two sources about T (nats).
struct PidAtoms {
  double red = 0.0;
  double uniq1 = 0.0;
  double uniq2 = 0.0;
  double syn = 0.0;
  bool clamped = false;  // I_joint was raised to max(I1, I2)
};

PidAtoms mmi_pid(double i1, double i2, double i_joint);

struct TripletConfig {
  int top_k = 24;
  int max_triples = 1500;
  std::uint64_t seed = 0;
  double ridge = kDefaultRidge;
  double clip = kDefaultCorrClip;
};

struct TripletExcess {
  std::optional<double> s3_over_s2;  // empty when every S2 is below tolerance
  int n_triples = 0;       // triples evaluated
  int n_used = 0;          // triples with S2 > 1e-9
  double mean_s3 = 0.0;    // over used triples, S3 clipped at 0
  double mean_s2 = 0.0;
  bool enumerated = false; // all C(top_k, 3) triples
  std::vector<std::array<int, 3>> triples;
};

TripletExcess triplet_excess(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t,
                             const std::vector<bool>& excluded, const TripletConfig& config);

TripletExcess triplet_excess(const Eigen::MatrixXd& pooled, const Eigen::VectorXd& target,
                             const TripletConfig& config);

// Kraskov-Stoegbauer-Grassberger estimator (algorithm 1, max-norm), nats.
double ksg_mi(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int k = 4);

}  // namespace channel_axes
