#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "channel_axes/tensor.hpp"

namespace channel_axes {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";

enum class LayerKind { kStandard, kDepthwise, kLinear };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

// One exported layer. Weights are flattened to [N, F] with
// F = C_in * k_h * k_w in (c_in, k_h, k_w) row-major order.
struct LayerRecord {
  std::string name;
  double relative_depth = 0.0;
  std::int64_t num_channels = 0;
  std::array<std::int64_t, 2> kernel_size{1, 1};
  Tensor weight;         // [N, F]
  Tensor input_patches;  // [P, F]
  Tensor pooled_acts;    // [B, N]
  std::optional<Tensor> spatial_acts;           // [M, N]
  std::map<std::string, Tensor> baseline_scores;  // name -> [N]

  std::int64_t fan_in() const { return weight.rank() == 2 ? weight.shape[1] : 0; }

  bool operator==(const LayerRecord&) const = default;
};

// Producer/consumer connectivity. Coupling groups list layers whose channels
// are tied index-by-index (residual adds, depthwise ties) and must be pruned
// with identical keep patterns.
struct GraphSpec {
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::string, LayerKind> layer_kind;
  std::vector<std::vector<std::string>> coupling_groups;
  std::map<std::string, std::array<std::int64_t, 2>> spatial_sizes;

  LayerKind kind_of(const std::string& layer) const;
  std::array<std::int64_t, 2> spatial_size_of(const std::string& layer) const;
  std::vector<std::string> producers_of(const std::string& layer) const;

  bool operator==(const GraphSpec&) const = default;
};

struct TensorBundle {
  int manifest_version = kManifestVersion;
  std::string model_name;
  std::uint64_t seed = 0;
  std::vector<LayerRecord> layers;
  std::map<std::string, Tensor> targets;  // name -> [B]
  GraphSpec graph;

  std::int64_t batch_size() const;
  std::size_t layer_index(std::string_view name) const;  // throws if absent
  const LayerRecord& layer(std::string_view name) const;
  const Tensor& target(const std::string& name) const;  // throws ValidationError

  bool operator==(const TensorBundle&) const = default;
};

// Checks every structural invariant; throws ValidationError naming the
// offending layer and field.
void validate_bundle(const TensorBundle& bundle);

// Reads and validates a bundle directory (manifest.json + headerless
// little-endian float32 tensors).
TensorBundle load_bundle(const std::filesystem::path& dir);

// Writes the bundle; load_bundle(dir) reproduces it bit-exactly.
void write_bundle(const TensorBundle& bundle, const std::filesystem::path& dir);

// Byte-level helpers for .f32 files (little-endian on every host).
std::vector<float> read_f32_file(const std::filesystem::path& path,
                                 std::int64_t expected_elements,
                                 const std::string& context);
void write_f32_file(const std::filesystem::path& path, const std::vector<float>& data);

}  // namespace channel_axes
