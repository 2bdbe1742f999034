#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "channel_axes/bundle.hpp"
#include "channel_axes/linear_gaussian.hpp"

namespace channel_axes {

// Channel `target` of `layer` is replaced by sum_k coeffs[k] * channel sources[k]
// (outputs and noise alike). Empty coeffs means 1/sqrt(|sources|) each.
struct DuplicationEntry {
  std::size_t layer = 0;
  std::size_t target = 0;
  std::vector<std::size_t> sources;
  std::vector<double> coeffs;
};

enum class ChannelStructure {
  kRandom,      // independent Gaussian weight rows
  kOrthogonal,  // base channels uncorrelated in population (rows Sigma_X-orthogonal)
};

struct SynthSpec {
  std::string model_name = "synthetic";
  std::vector<std::int64_t> channels;  // N per layer; layer l+1 reads layer l
  std::int64_t input_dim = 16;         // F of the first layer
  std::int64_t batch = 2000;           // B pooled rows
  std::int64_t patches = 2000;         // P patch rows
  std::int64_t spatial_per_sample = 0; // >0 emits spatial_acts with B*S rows
  std::vector<DuplicationEntry> duplication_plan;
  double target_alignment = 0.5;  // 1: T along the top input eigenvector
  double noise = 0.1;             // channel noise variance sigma0^2
  double target_noise = 0.5;      // Var(T | X0); signal variance is 1
  double power_spread = 0.7;      // log-uniform half-width of channel gains
  double spectrum_decay = 2.0;    // input eigenvalues exp(-decay * k / F)
  ChannelStructure structure = ChannelStructure::kRandom;
  std::vector<std::pair<std::size_t, std::size_t>> zero_readout;  // (layer, channel)
  std::uint64_t seed = 0;
};

SynthSpec parse_synth_spec(std::string_view json_text);  // throws ValidationError
std::string synth_spec_to_json(const SynthSpec& spec);

struct SynthResult {
  TensorBundle bundle;
  SyntheticModel model;
};

// Samples a bundle from a known linear-Gaussian chain so every downstream
// metric has a population closed form. Deterministic in spec.seed.
SynthResult synth_bundle(const SynthSpec& spec);

// Builds only the population model (no sampling).
SyntheticModel synth_model(const SynthSpec& spec);

}  // namespace channel_axes
