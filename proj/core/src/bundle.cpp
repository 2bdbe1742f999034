#include "channel_axes/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <set>

#include <json.hpp>

#include "channel_axes/error.hpp"

namespace channel_axes {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(sizeof(float) == 4);

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kStandard: return "standard";
    case LayerKind::kDepthwise: return "depthwise";
    case LayerKind::kLinear: return "linear";
  }
  return "standard";
}

LayerKind parse_layer_kind(std::string_view text) {
  if (text == "standard") return LayerKind::kStandard;
  if (text == "depthwise") return LayerKind::kDepthwise;
  if (text == "linear") return LayerKind::kLinear;
  throw ValidationError("unknown layer kind '" + std::string(text) + "'");
}

LayerKind GraphSpec::kind_of(const std::string& layer) const {
  auto it = layer_kind.find(layer);
  return it == layer_kind.end() ? LayerKind::kStandard : it->second;
}

std::array<std::int64_t, 2> GraphSpec::spatial_size_of(const std::string& layer) const {
  auto it = spatial_sizes.find(layer);
  return it == spatial_sizes.end() ? std::array<std::int64_t, 2>{1, 1} : it->second;
}

std::vector<std::string> GraphSpec::producers_of(const std::string& layer) const {
  std::vector<std::string> out;
  for (const auto& [from, to] : edges) {
    if (to == layer) out.push_back(from);
  }
  return out;
}

std::int64_t TensorBundle::batch_size() const {
  if (layers.empty() || layers.front().pooled_acts.rank() != 2) return 0;
  return layers.front().pooled_acts.shape[0];
}

std::size_t TensorBundle::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  throw ValidationError("unknown layer '" + std::string(name) + "'");
}

const LayerRecord& TensorBundle::layer(std::string_view name) const {
  return layers[layer_index(name)];
}

const Tensor& TensorBundle::target(const std::string& name) const {
  auto it = targets.find(name);
  if (it == targets.end()) {
    throw ValidationError("bundle has no target '" + name + "' (field 'targets')");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// validation

namespace {

[[noreturn]] void fail(const std::string& layer, const std::string& field,
                       const std::string& message) {
  throw ValidationError("layer '" + layer + "' field '" + field + "': " + message);
}

void check_finite(const Tensor& t, const std::string& layer, const std::string& field) {
  for (float v : t.data) {
    if (!std::isfinite(v)) fail(layer, field, "non-finite value");
  }
}

void check_shape(const Tensor& t, const std::vector<std::int64_t>& expected,
                 const std::string& layer, const std::string& field) {
  if (t.shape.size() != expected.size()) {
    fail(layer, field, "expected rank " + std::to_string(expected.size()) + ", got shape " +
                           shape_string(t.shape));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] >= 0 && t.shape[i] != expected[i]) {
      fail(layer, field, "expected shape " + shape_string(expected) + ", got " +
                             shape_string(t.shape));
    }
  }
  if (Tensor::element_count(t.shape) != t.numel()) {
    fail(layer, field, "data length does not match shape " + shape_string(t.shape));
  }
}

void check_dag(const TensorBundle& b) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& layer : b.layers) indegree[layer.name] = 0;
  for (const auto& [from, to] : b.graph.edges) {
    if (!indegree.count(from)) fail(from, "graph.edges", "edge references unknown layer");
    if (!indegree.count(to)) fail(to, "graph.edges", "edge references unknown layer");
    ++indegree[to];
    out[from].push_back(to);
  }
  std::queue<std::string> ready;
  for (const auto& [name, d] : indegree) {
    if (d == 0) ready.push(name);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto name = ready.front();
    ready.pop();
    ++visited;
    for (const auto& next : out[name]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  if (visited != indegree.size()) {
    std::string cyclic;
    for (const auto& [name, d] : indegree) {
      if (d > 0) {
        cyclic = name;
        break;
      }
    }
    fail(cyclic, "graph.edges", "non-DAG graph (cycle detected)");
  }
}

}  // namespace

void validate_bundle(const TensorBundle& b) {
  if (b.layers.empty()) throw ValidationError("bundle must contain ≥1 layer");
  if (b.manifest_version != kManifestVersion) {
    throw ValidationError("unsupported manifest_version " + std::to_string(b.manifest_version));
  }
  std::set<std::string> names;
  std::int64_t batch = -1;
  for (const auto& layer : b.layers) {
    const auto& name = layer.name;
    if (name.empty()) throw ValidationError("layer with empty name");
    if (!names.insert(name).second) fail(name, "name", "duplicate layer name");
    if (!(layer.relative_depth >= 0.0 && layer.relative_depth <= 1.0)) {
      fail(name, "relative_depth", "must lie in [0, 1]");
    }
    const auto n = layer.num_channels;
    if (n < 1) fail(name, "num_channels", "must be >= 1");
    if (layer.kernel_size[0] < 1 || layer.kernel_size[1] < 1) {
      fail(name, "kernel_size", "entries must be >= 1");
    }
    check_shape(layer.weight, {n, -1}, name, "weight");
    const auto f = layer.weight.shape[1];
    if (f < 1) fail(name, "weight", "fan-in F must be >= 1");
    if (f % (layer.kernel_size[0] * layer.kernel_size[1]) != 0) {
      fail(name, "kernel_size", "F=" + std::to_string(f) + " not divisible by k_h*k_w");
    }
    check_shape(layer.input_patches, {-1, f}, name, "input_patches");
    if (layer.input_patches.shape[0] < 2) fail(name, "input_patches", "need P >= 2 patches");
    check_shape(layer.pooled_acts, {-1, n}, name, "pooled_acts");
    if (batch < 0) batch = layer.pooled_acts.shape[0];
    if (layer.pooled_acts.shape[0] != batch) {
      fail(name, "pooled_acts", "batch dimension " + std::to_string(layer.pooled_acts.shape[0]) +
                                    " differs from " + std::to_string(batch));
    }
    check_finite(layer.weight, name, "weight");
    check_finite(layer.input_patches, name, "input_patches");
    check_finite(layer.pooled_acts, name, "pooled_acts");
    if (layer.spatial_acts) {
      check_shape(*layer.spatial_acts, {-1, n}, name, "spatial_acts");
      check_finite(*layer.spatial_acts, name, "spatial_acts");
    }
    for (const auto& [score, t] : layer.baseline_scores) {
      check_shape(t, {n}, name, "baseline_scores." + score);
      check_finite(t, name, "baseline_scores." + score);
    }
  }
  for (const auto& [tname, t] : b.targets) {
    if (t.rank() != 1 || t.shape[0] != batch) {
      throw ValidationError("target '" + tname + "' field 'targets': expected shape [" +
                            std::to_string(batch) + "], got " + shape_string(t.shape));
    }
    for (float v : t.data) {
      if (!std::isfinite(v)) throw ValidationError("target '" + tname + "': non-finite value");
    }
  }

  const auto& g = b.graph;
  check_dag(b);
  for (const auto& [name, kind] : g.layer_kind) {
    if (!names.count(name)) fail(name, "graph.layer_kind", "unknown layer");
    if (kind == LayerKind::kDepthwise) {
      const auto& layer = b.layer(name);
      if (layer.fan_in() != layer.kernel_size[0] * layer.kernel_size[1]) {
        fail(name, "graph.layer_kind", "depthwise layer must have one input channel per filter");
      }
      for (const auto& producer : g.producers_of(name)) {
        if (b.layer(producer).num_channels != layer.num_channels) {
          fail(name, "graph.layer_kind", "depthwise layer requires C_in = C_out = N");
        }
      }
    }
  }
  for (const auto& group : g.coupling_groups) {
    if (group.empty()) throw ValidationError("empty coupling group in 'graph.coupling_groups'");
    std::int64_t n = -1;
    for (const auto& name : group) {
      if (!names.count(name)) fail(name, "graph.coupling_groups", "unknown layer");
      const auto ln = b.layer(name).num_channels;
      if (n < 0) n = ln;
      if (ln != n) fail(name, "graph.coupling_groups", "coupled layers must have equal N");
    }
  }
  std::set<std::string> coupled;
  for (const auto& group : g.coupling_groups) {
    for (const auto& name : group) {
      if (!coupled.insert(name).second) {
        fail(name, "graph.coupling_groups", "layer appears in more than one coupling group");
      }
    }
  }
  for (const auto& [name, hw] : g.spatial_sizes) {
    if (!names.count(name)) fail(name, "graph.spatial_sizes", "unknown layer");
    if (hw[0] < 1 || hw[1] < 1) fail(name, "graph.spatial_sizes", "entries must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// raw float32 I/O

std::vector<float> read_f32_file(const fs::path& path, std::int64_t expected_elements,
                                 const std::string& context) {
  std::error_code ec;
  if (!fs::exists(path, ec)) {
    throw ValidationError(context + ": missing file " + path.string());
  }
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw IoError(context + ": cannot stat " + path.string());
  const auto expected_bytes = static_cast<std::uintmax_t>(expected_elements) * 4u;
  if (bytes != expected_bytes) {
    throw ValidationError(context + ": byte-length mismatch (expected " +
                          std::to_string(expected_bytes) + " bytes, got " +
                          std::to_string(bytes) + ") in " + path.string());
  }
  std::vector<float> data(static_cast<std::size_t>(expected_elements));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(context + ": cannot open " + path.string());
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError(context + ": short read on " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : data) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = __builtin_bswap32(u);
      v = std::bit_cast<float>(u);
    }
  }
  return data;
}

void write_f32_file(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float v : data) {
      auto u = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  } else {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on " + path.string());
}

// ---------------------------------------------------------------------------
// manifest

namespace {

std::string file_stem(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out;
}

json tensor_ref(const std::string& file, const Tensor& t) {
  return json{{"file", file}, {"shape", t.shape}};
}

Tensor read_tensor_ref(const fs::path& dir, const json& ref, const std::string& context) {
  if (!ref.is_object() || !ref.contains("file") || !ref.contains("shape")) {
    throw ValidationError(context + ": tensor reference needs 'file' and 'shape'");
  }
  Tensor t;
  try {
    t.shape = ref.at("shape").get<std::vector<std::int64_t>>();
  } catch (const json::exception&) {
    throw ValidationError(context + ": 'shape' must be a list of integers");
  }
  for (auto d : t.shape) {
    if (d < 0) throw ValidationError(context + ": negative dimension in shape");
  }
  t.data = read_f32_file(dir / ref.at("file").get<std::string>(), Tensor::element_count(t.shape),
                         context);
  return t;
}

template <class T>
T get_field(const json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) throw ValidationError(context + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(context + ": field '" + key + "' has wrong type");
  }
}

}  // namespace

TensorBundle load_bundle(const fs::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("missing file " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest.json: parse error: ") + e.what());
  }

  TensorBundle b;
  try {
    b.manifest_version = get_field<int>(m, "manifest_version", "manifest");
    b.model_name = get_field<std::string>(m, "model_name", "manifest");
    b.seed = get_field<std::uint64_t>(m, "seed", "manifest");
    if (!m.contains("layers") || !m["layers"].is_array()) {
      throw ValidationError("manifest: missing field 'layers'");
    }
    for (const auto& jl : m["layers"]) {
      LayerRecord layer;
      layer.name = get_field<std::string>(jl, "name", "layer");
      const std::string ctx = "layer '" + layer.name + "'";
      layer.relative_depth = get_field<double>(jl, "relative_depth", ctx);
      layer.num_channels = get_field<std::int64_t>(jl, "num_channels", ctx);
      if (jl.contains("kernel_size")) {
        layer.kernel_size = get_field<std::array<std::int64_t, 2>>(jl, "kernel_size", ctx);
      }
      auto field_ctx = [&](const std::string& f) { return ctx + " field '" + f + "'"; };
      for (const char* f : {"weight", "input_patches", "pooled_acts"}) {
        if (!jl.contains(f)) throw ValidationError(field_ctx(f) + ": missing");
      }
      layer.weight = read_tensor_ref(dir, jl["weight"], field_ctx("weight"));
      layer.input_patches = read_tensor_ref(dir, jl["input_patches"], field_ctx("input_patches"));
      layer.pooled_acts = read_tensor_ref(dir, jl["pooled_acts"], field_ctx("pooled_acts"));
      if (jl.contains("spatial_acts")) {
        layer.spatial_acts = read_tensor_ref(dir, jl["spatial_acts"], field_ctx("spatial_acts"));
      }
      if (jl.contains("baseline_scores")) {
        for (const auto& [name, ref] : jl["baseline_scores"].items()) {
          layer.baseline_scores[name] =
              read_tensor_ref(dir, ref, field_ctx("baseline_scores." + name));
        }
      }
      b.layers.push_back(std::move(layer));
    }
    if (m.contains("targets")) {
      for (const auto& [name, ref] : m["targets"].items()) {
        b.targets[name] = read_tensor_ref(dir, ref, "target '" + name + "'");
      }
    }
    if (m.contains("graph")) {
      const auto& g = m["graph"];
      if (g.contains("edges")) {
        for (const auto& e : g["edges"]) {
          if (!e.is_array() || e.size() != 2) {
            throw ValidationError("graph.edges: each edge must be [producer, consumer]");
          }
          b.graph.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
        }
      }
      if (g.contains("layer_kind")) {
        for (const auto& [name, kind] : g["layer_kind"].items()) {
          b.graph.layer_kind[name] = parse_layer_kind(kind.get<std::string>());
        }
      }
      if (g.contains("coupling_groups")) {
        b.graph.coupling_groups =
            g["coupling_groups"].get<std::vector<std::vector<std::string>>>();
      }
      if (g.contains("spatial_sizes")) {
        for (const auto& [name, hw] : g["spatial_sizes"].items()) {
          b.graph.spatial_sizes[name] = hw.get<std::array<std::int64_t, 2>>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: malformed field: ") + e.what());
  }
  validate_bundle(b);
  return b;
}

void write_bundle(const TensorBundle& b, const fs::path& dir) {
  validate_bundle(b);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());

  json m;
  m["manifest_version"] = b.manifest_version;
  m["model_name"] = b.model_name;
  m["seed"] = b.seed;
  m["layers"] = json::array();
  auto emit = [&](const std::string& file, const Tensor& t) {
    write_f32_file(dir / file, t.data);
    return tensor_ref(file, t);
  };
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const auto& layer = b.layers[i];
    const auto stem = std::to_string(i) + "_" + file_stem(layer.name);
    json jl;
    jl["name"] = layer.name;
    jl["relative_depth"] = layer.relative_depth;
    jl["num_channels"] = layer.num_channels;
    jl["kernel_size"] = layer.kernel_size;
    jl["weight"] = emit(stem + ".weight.f32", layer.weight);
    jl["input_patches"] = emit(stem + ".input_patches.f32", layer.input_patches);
    jl["pooled_acts"] = emit(stem + ".pooled_acts.f32", layer.pooled_acts);
    if (layer.spatial_acts) {
      jl["spatial_acts"] = emit(stem + ".spatial_acts.f32", *layer.spatial_acts);
    }
    if (!layer.baseline_scores.empty()) {
      json scores;
      for (const auto& [name, t] : layer.baseline_scores) {
        scores[name] = emit(stem + ".score." + file_stem(name) + ".f32", t);
      }
      jl["baseline_scores"] = scores;
    }
    m["layers"].push_back(jl);
  }
  json targets = json::object();
  for (const auto& [name, t] : b.targets) {
    targets[name] = emit("target." + file_stem(name) + ".f32", t);
  }
  m["targets"] = targets;

  json g;
  g["edges"] = json::array();
  for (const auto& [from, to] : b.graph.edges) g["edges"].push_back({from, to});
  g["layer_kind"] = json::object();
  for (const auto& [name, kind] : b.graph.layer_kind) g["layer_kind"][name] = to_string(kind);
  g["coupling_groups"] = b.graph.coupling_groups;
  g["spatial_sizes"] = json::object();
  for (const auto& [name, hw] : b.graph.spatial_sizes) g["spatial_sizes"][name] = hw;
  m["graph"] = g;

  const auto tmp = dir / (std::string(kManifestFile) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << m.dump(2) << '\n';
    if (!out) throw IoError("short write on " + tmp.string());
  }
  fs::rename(tmp, dir / kManifestFile, ec);
  if (ec) throw IoError("cannot finalize " + (dir / kManifestFile).string());
}

}  // namespace channel_axes
