#include "channel_axes/synth.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "channel_axes/error.hpp"
#include "channel_axes/rng.hpp"

namespace channel_axes {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kStreamSpectrum = 1,
  kStreamTarget = 2,
  kStreamWeights = 100,
  kStreamPooled = 1000,
  kStreamPatches = 1001,
  kStreamSpatial = 1002,
};

void check_spec(const SynthSpec& spec) {
  if (spec.channels.empty()) throw ValidationError("synth spec: 'channels' must list >= 1 layer");
  for (auto n : spec.channels) {
    if (n < 2) throw ValidationError("synth spec: every layer needs >= 2 channels");
  }
  if (spec.input_dim < 2) throw ValidationError("synth spec: input_dim must be >= 2");
  if (spec.batch < 2) throw ValidationError("synth spec: batch must be >= 2");
  if (spec.patches < 2) throw ValidationError("synth spec: patches must be >= 2");
  if (spec.spatial_per_sample < 0) throw ValidationError("synth spec: spatial_per_sample must be >= 0");
  if (!(spec.noise > 0)) throw ValidationError("synth spec: noise must be > 0");
  if (!(spec.target_noise >= 0)) throw ValidationError("synth spec: target_noise must be >= 0");
  if (!(spec.target_alignment >= 0 && spec.target_alignment <= 1)) {
    throw ValidationError("synth spec: target_alignment must lie in [0, 1]");
  }
  const auto layers = spec.channels.size();
  std::vector<std::set<std::size_t>> targets(layers), sources(layers);
  for (const auto& d : spec.duplication_plan) {
    if (d.layer >= layers) throw ValidationError("duplication_plan: layer index out of range");
    const auto n = static_cast<std::size_t>(spec.channels[d.layer]);
    if (d.target >= n) throw ValidationError("duplication_plan: target channel out of range");
    if (d.sources.empty()) throw ValidationError("duplication_plan: entry needs >= 1 source");
    if (!d.coeffs.empty() && d.coeffs.size() != d.sources.size()) {
      throw ValidationError("duplication_plan: coeffs and sources differ in length");
    }
    if (!targets[d.layer].insert(d.target).second) {
      throw ValidationError("duplication_plan: channel " + std::to_string(d.target) +
                            " is derived twice");
    }
    for (auto s : d.sources) {
      if (s >= n) throw ValidationError("duplication_plan: source channel out of range");
      if (s == d.target) throw ValidationError("duplication_plan: channel cannot derive from itself");
      sources[d.layer].insert(s);
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    for (auto s : sources[l]) {
      if (targets[l].count(s)) {
        throw ValidationError("duplication_plan: source channel " + std::to_string(s) +
                              " is itself derived");
      }
    }
  }
  for (const auto& [l, c] : spec.zero_readout) {
    if (l >= layers || c >= static_cast<std::size_t>(spec.channels[l])) {
      throw ValidationError("zero_readout: index out of range");
    }
  }
}

Eigen::MatrixXd random_orthogonal(Eigen::Index f, Rng& rng) {
  Eigen::MatrixXd g(f, f);
  for (Eigen::Index i = 0; i < f; ++i)
    for (Eigen::Index j = 0; j < f; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Sign-fix so Q is a deterministic function of g.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < f; ++i) {
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  }
  return q;
}

// Base weight rows for one layer, before duplication.
Eigen::MatrixXd base_weights(const SynthSpec& spec, const Eigen::MatrixXd& sigma,
                             Eigen::Index n, std::size_t layer,
                             const std::set<std::size_t>& derived) {
  const Eigen::Index f = sigma.rows();
  Rng rng(spec.seed, kStreamWeights + layer);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, f);
  std::vector<Eigen::VectorXd> basis;  // Sigma-orthonormal rows so far
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd g(f);
    for (Eigen::Index k = 0; k < f; ++k) g[k] = rng.normal();
    const double gain = std::exp(rng.uniform(-spec.power_spread, spec.power_spread));
    if (derived.count(static_cast<std::size_t>(i))) continue;
    if (spec.structure == ChannelStructure::kOrthogonal) {
      for (const auto& b : basis) g -= (b.dot(sigma * g)) * b;
      const double norm_sq = g.dot(sigma * g);
      if (norm_sq < 1e-10) {
        throw ValidationError("synth spec: orthogonal structure needs at most rank(Sigma_X) base "
                              "channels in layer " + std::to_string(layer));
      }
      g /= std::sqrt(norm_sq);
      basis.push_back(g);
    } else {
      const double norm_sq = g.dot(sigma * g);
      if (norm_sq < 1e-14) throw DegenerateDataError("synth: zero-power weight draw");
      g /= std::sqrt(norm_sq);
    }
    w.row(i) = gain * g.transpose();
  }
  return w;
}

}  // namespace

SyntheticModel synth_model(const SynthSpec& spec) {
  check_spec(spec);
  const Eigen::Index f0 = spec.input_dim;

  Rng spectrum_rng(spec.seed, kStreamSpectrum);
  const Eigen::MatrixXd q = random_orthogonal(f0, spectrum_rng);
  Eigen::VectorXd eigvals(f0);
  for (Eigen::Index k = 0; k < f0; ++k) {
    eigvals[k] = std::exp(-spec.spectrum_decay * static_cast<double>(k) / static_cast<double>(f0));
  }
  Eigen::MatrixXd sigma = q * eigvals.asDiagonal() * q.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());

  // beta mixes the top eigendirection with a random direction.
  Rng target_rng(spec.seed, kStreamTarget);
  Eigen::VectorXd g(f0);
  for (Eigen::Index k = 0; k < f0; ++k) g[k] = target_rng.normal();
  g.normalize();
  const double a = spec.target_alignment;
  Eigen::VectorXd beta = a * q.col(0) + (1.0 - a) * g;
  if (beta.norm() < 1e-12) beta = q.col(0);
  beta /= std::sqrt(beta.dot(sigma * beta));

  SyntheticModel model;
  model.input_task_weights = beta;
  const double target_var = 1.0 + spec.target_noise;
  Eigen::VectorXd task_cov = sigma * beta;

  for (std::size_t l = 0; l < spec.channels.size(); ++l) {
    const Eigen::Index n = spec.channels[l];
    std::set<std::size_t> derived;
    for (const auto& d : spec.duplication_plan) {
      if (d.layer == l) derived.insert(d.target);
    }
    Eigen::MatrixXd w_base = base_weights(spec, sigma, n, l, derived);
    Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd w = w_base;
    for (const auto& d : spec.duplication_plan) {
      if (d.layer != l) continue;
      const auto t = static_cast<Eigen::Index>(d.target);
      mix.row(t).setZero();
      w.row(t).setZero();
      for (std::size_t k = 0; k < d.sources.size(); ++k) {
        const double coeff =
            d.coeffs.empty() ? 1.0 / std::sqrt(static_cast<double>(d.sources.size())) : d.coeffs[k];
        const auto s = static_cast<Eigen::Index>(d.sources[k]);
        mix(t, s) += coeff;
        w.row(t) += coeff * w_base.row(s);
      }
    }

    LinearGaussianModel layer;
    layer.sigma_x = sigma;
    layer.weights = w;
    layer.noise_mix = mix;
    layer.task_cov = task_cov;
    layer.sigma0_sq = spec.noise;
    layer.target_var = target_var;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sigma);
    cod.setThreshold(1e-10);
    layer.target_noise = std::max(0.0, target_var - task_cov.dot(cod.solve(task_cov)));
    layer.readout = layer.least_squares_readout();
    for (const auto& [zl, zc] : spec.zero_readout) {
      if (zl == l) layer.readout[static_cast<Eigen::Index>(zc)] = 0.0;
    }

    Eigen::MatrixXd next_sigma = layer.output_cov();
    sigma = 0.5 * (next_sigma + next_sigma.transpose());
    task_cov = layer.output_target_cov();
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace {

struct ChainSample {
  std::vector<Eigen::MatrixXd> inputs;   // per layer [n, F_l]
  std::vector<Eigen::MatrixXd> outputs;  // per layer [n, N_l]
  Eigen::VectorXd target;
};

ChainSample sample_chain(const SyntheticModel& model, double target_noise, std::int64_t n,
                         std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  const auto& first = model.layers.front();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(first.sigma_x);
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Eigen::Index f0 = first.input_dim();

  ChainSample out;
  Eigen::MatrixXd z(n, f0);
  for (std::int64_t r = 0; r < n; ++r)
    for (Eigen::Index k = 0; k < f0; ++k) z(r, k) = rng.normal();
  Eigen::MatrixXd x = z * root.transpose();
  out.target = x * model.input_task_weights;
  const double eta_sd = std::sqrt(target_noise);
  for (std::int64_t r = 0; r < n; ++r) out.target[r] += eta_sd * rng.normal();

  for (const auto& layer : model.layers) {
    const Eigen::Index channels = layer.num_channels();
    Eigen::MatrixXd eps(n, channels);
    const double sd = std::sqrt(layer.sigma0_sq);
    for (std::int64_t r = 0; r < n; ++r)
      for (Eigen::Index k = 0; k < channels; ++k) eps(r, k) = sd * rng.normal();
    Eigen::MatrixXd y = x * layer.weights.transpose() + eps * layer.noise_mix.transpose();
    out.inputs.push_back(x);
    out.outputs.push_back(y);
    x = std::move(y);
  }
  return out;
}

}  // namespace

SynthResult synth_bundle(const SynthSpec& spec) {
  SynthResult result;
  result.model = synth_model(spec);
  const auto& model = result.model;
  const auto layers = model.layers.size();

  const auto pooled = sample_chain(model, spec.target_noise, spec.batch, spec.seed, kStreamPooled);
  const auto patches = sample_chain(model, spec.target_noise, spec.patches, spec.seed, kStreamPatches);
  std::optional<ChainSample> spatial;
  if (spec.spatial_per_sample > 0) {
    spatial = sample_chain(model, spec.target_noise, spec.batch * spec.spatial_per_sample,
                           spec.seed, kStreamSpatial);
  }

  // First-order saliency |a * dL/da| for L = (readout' Y_last - T)^2 / 2,
  // backpropagated through the linear chain.
  std::vector<Eigen::MatrixXd> grads(layers);
  {
    const auto& last = model.layers.back();
    const Eigen::VectorXd residual = pooled.outputs.back() * last.readout - pooled.target;
    grads[layers - 1] = residual * last.readout.transpose();
    for (std::size_t l = layers - 1; l > 0; --l) {
      grads[l - 1] = grads[l] * model.layers[l].weights;
    }
  }

  auto& b = result.bundle;
  b.model_name = spec.model_name;
  b.seed = spec.seed;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& lm = model.layers[l];
    LayerRecord rec;
    rec.name = "layer" + std::to_string(l);
    rec.relative_depth = layers == 1 ? 0.0 : static_cast<double>(l) / static_cast<double>(layers - 1);
    rec.num_channels = lm.num_channels();
    rec.weight = from_matrix(lm.weights);
    rec.input_patches = from_matrix(patches.inputs[l]);
    rec.pooled_acts = from_matrix(pooled.outputs[l]);
    if (spatial) rec.spatial_acts = from_matrix(spatial->outputs[l]);
    const Eigen::VectorXd taylor =
        (pooled.outputs[l].array() * grads[l].array()).abs().colwise().mean().transpose();
    rec.baseline_scores["taylor"] = from_vector(taylor);
    const Eigen::VectorXd sd = lm.output_cov().diagonal().cwiseMax(0.0).cwiseSqrt();
    rec.baseline_scores["readout_contribution"] =
        from_vector((lm.readout.cwiseAbs().array() * sd.array()).matrix());
    b.layers.push_back(std::move(rec));
    if (l + 1 < layers) {
      b.graph.edges.emplace_back("layer" + std::to_string(l), "layer" + std::to_string(l + 1));
    }
    b.graph.layer_kind["layer" + std::to_string(l)] = LayerKind::kStandard;
  }
  b.targets["gt_margin"] = from_vector(pooled.target);
  validate_bundle(b);
  return result;
}

// ---------------------------------------------------------------------------
// JSON

SynthSpec parse_synth_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("synth spec: parse error: ") + e.what());
  }
  SynthSpec s;
  static const std::set<std::string> kKeys = {
      "model_name", "channels",       "input_dim",      "batch",     "patches",
      "spatial_per_sample", "duplication_plan", "target_alignment", "noise", "target_noise",
      "power_spread", "spectrum_decay", "structure",    "zero_readout", "seed"};
  if (!j.is_object()) throw ValidationError("synth spec: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ValidationError("synth spec: unknown field '" + key + "'");
  }
  try {
    if (!j.contains("channels")) throw ValidationError("synth spec: missing field 'channels'");
    s.channels = j.at("channels").get<std::vector<std::int64_t>>();
    s.model_name = j.value("model_name", s.model_name);
    s.input_dim = j.value("input_dim", s.input_dim);
    s.batch = j.value("batch", s.batch);
    s.patches = j.value("patches", s.patches);
    s.spatial_per_sample = j.value("spatial_per_sample", s.spatial_per_sample);
    s.target_alignment = j.value("target_alignment", s.target_alignment);
    s.noise = j.value("noise", s.noise);
    s.target_noise = j.value("target_noise", s.target_noise);
    s.power_spread = j.value("power_spread", s.power_spread);
    s.spectrum_decay = j.value("spectrum_decay", s.spectrum_decay);
    s.seed = j.value("seed", s.seed);
    const auto structure = j.value("structure", std::string("random"));
    if (structure == "random") {
      s.structure = ChannelStructure::kRandom;
    } else if (structure == "orthogonal") {
      s.structure = ChannelStructure::kOrthogonal;
    } else {
      throw ValidationError("synth spec: unknown structure '" + structure + "'");
    }
    if (j.contains("duplication_plan")) {
      for (const auto& d : j["duplication_plan"]) {
        DuplicationEntry e;
        e.layer = d.value("layer", std::size_t{0});
        e.target = d.at("target").get<std::size_t>();
        e.sources = d.at("sources").get<std::vector<std::size_t>>();
        e.coeffs = d.value("coeffs", std::vector<double>{});
        s.duplication_plan.push_back(std::move(e));
      }
    }
    if (j.contains("zero_readout")) {
      for (const auto& z : j["zero_readout"]) {
        s.zero_readout.emplace_back(z.at(0).get<std::size_t>(), z.at(1).get<std::size_t>());
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  check_spec(s);
  return s;
}

std::string synth_spec_to_json(const SynthSpec& s) {
  json j;
  j["model_name"] = s.model_name;
  j["channels"] = s.channels;
  j["input_dim"] = s.input_dim;
  j["batch"] = s.batch;
  j["patches"] = s.patches;
  j["spatial_per_sample"] = s.spatial_per_sample;
  j["target_alignment"] = s.target_alignment;
  j["noise"] = s.noise;
  j["target_noise"] = s.target_noise;
  j["power_spread"] = s.power_spread;
  j["spectrum_decay"] = s.spectrum_decay;
  j["structure"] = s.structure == ChannelStructure::kOrthogonal ? "orthogonal" : "random";
  j["seed"] = s.seed;
  j["duplication_plan"] = json::array();
  for (const auto& d : s.duplication_plan) {
    j["duplication_plan"].push_back(
        {{"layer", d.layer}, {"target", d.target}, {"sources", d.sources}, {"coeffs", d.coeffs}});
  }
  j["zero_readout"] = json::array();
  for (const auto& [l, c] : s.zero_readout) j["zero_readout"].push_back({l, c});
  return j.dump(2);
}

}  // namespace channel_axes
