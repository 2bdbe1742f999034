#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "channel_axes/axis_metrics.hpp"
#include "channel_axes/bundle.hpp"
#include "channel_axes/crosslayer.hpp"
#include "channel_axes/dynamics.hpp"
#include "channel_axes/error.hpp"
#include "channel_axes/lesion.hpp"
#include "channel_axes/modularity.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/pid.hpp"
#include "channel_axes/pruning.hpp"
#include "channel_axes/replaceability.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/stats.hpp"
#include "channel_axes/synth.hpp"
#include "channel_axes_cli/cli.hpp"
#include "channel_axes_cli/plot.hpp"
#include "channel_axes_cli/report.hpp"

namespace channel_axes::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSubcommands{"validate", "synth", "metrics", "pid",       "hulls", "lesion", "graphs",
                                            "traj",     "crosslayer", "prune", "auc", "loso",  "plot"};

struct Context {
  std::uint64_t seed = 0;
  bool seed_given = false;
  fs::path out_dir = ".";
  std::ostream* out = nullptr;

  fs::path resolve(const std::string& name) const {
    const fs::path p(name);
    return p.is_absolute() ? p : out_dir / p;
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// ---------------------------------------------------------------------------
// Inputs

struct Input {
  TensorBundle bundle;
  std::optional<SynthSpec> spec;
  std::optional<SyntheticModel> model;
  std::string hash;
};

SynthSpec read_spec(const std::string& path, const Context& ctx) {
  SynthSpec spec = parse_synth_spec(read_text_file(path));
  if (ctx.seed_given) spec.seed = ctx.seed;
  return spec;
}

Input load_input(const std::string& bundle_dir, const std::string& spec_path, const Context& ctx) {
  Input in;
  if (!bundle_dir.empty() && !spec_path.empty()) {
    throw ValidationError("give either a bundle directory or --synth-spec, not both");
  }
  if (!spec_path.empty()) {
    SynthSpec spec = read_spec(spec_path, ctx);
    SynthResult r = synth_bundle(spec);
    in.hash = sha256_hex(synth_spec_to_json(spec));
    in.bundle = std::move(r.bundle);
    in.model = std::move(r.model);
    in.spec = spec;
    return in;
  }
  if (bundle_dir.empty()) throw ValidationError("missing input: bundle directory or --synth-spec");
  in.bundle = load_bundle(bundle_dir);
  in.hash = hash_directory(bundle_dir);
  return in;
}

std::vector<std::uint64_t> input_seeds(const Input& in) { return {in.spec ? in.spec->seed : in.bundle.seed}; }

// ---------------------------------------------------------------------------
// Metrics

struct MetricsOptions {
  std::string targets = "gt_margin";
  int m = 10;
  std::string partner_rule = "top_task";
  double clip = kDefaultCorrClip;
  double eps_cov = 0.0;
  int k = 3;
  int n_perm = 1000;
};

MetricsConfig metrics_config(const MetricsOptions& o, std::uint64_t seed) {
  MetricsConfig c;
  c.targets = split_list(o.targets);
  if (c.targets.empty()) throw ValidationError("--targets: empty list");
  c.partner.m = o.m;
  c.partner.rule = parse_partner_rule(o.partner_rule);
  c.partner.clip = o.clip;
  c.partner.seed = seed;
  c.eps_cov = o.eps_cov;
  return c;
}

Json metrics_config_json(const MetricsOptions& o, std::uint64_t seed) {
  return Json{{"targets", split_list(o.targets)}, {"m", o.m}, {"partner_rule", o.partner_rule},
              {"clip", o.clip}, {"eps_cov", o.eps_cov}, {"k", o.k}, {"n_perm", o.n_perm}, {"seed", seed}};
}

std::vector<int> kept_channels(const LayerMetrics& lm) {
  std::vector<int> idx;
  for (int i = 0; i < lm.num_channels; ++i) {
    if (!lm.is_excluded(i)) idx.push_back(i);
  }
  return idx;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

Json layer_alignment(const LayerMetrics& lm, const MetricsOptions& o, std::uint64_t seed, std::size_t l) {
  const auto idx = kept_channels(lm);
  Json a;
  a["k"] = o.k;
  a["n"] = idx.size();
  const Eigen::VectorXd ix = gather(lm.i_x, idx);
  const Eigen::VectorXd ity = gather(lm.i_ty.at(lm.primary_target), idx);
  try {
    a["spearman_ix_ity"] = spearman(ix, ity);
  } catch (const Error&) {
    a["spearman_ix_ity"] = nullptr;
  }
  if (static_cast<int>(idx.size()) < std::max(3, o.k + 1)) {
    a["ari"] = nullptr;
    return a;
  }
  Eigen::MatrixXd local(idx.size(), 2), target(idx.size(), 2);
  local.col(0) = zscore(ix);
  local.col(1) = zscore(gather(lm.r_bar_x, idx));
  target.col(0) = zscore(ity);
  target.col(1) = zscore(gather(lm.syn, idx));
  const auto kl = kmeans(local, o.k, 10, derive_seed(seed, 100 + l));
  const auto kt = kmeans(target, o.k, 10, derive_seed(seed, 200 + l));
  const auto null = permutation_null_ari(kl.labels, kt.labels, o.n_perm, derive_seed(seed, 300 + l));
  a["ari"] = null.observed;
  a["null_mean"] = null.null_mean;
  a["null_p95"] = null.null_p95;
  a["p_value"] = null.p_value;
  a["n_perm"] = null.n_perm;
  return a;
}

double masked_mean(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  if (idx.empty()) return nan();
  double s = 0;
  for (int i : idx) s += v[i];
  return s / static_cast<double>(idx.size());
}

Json layer_metrics_json(const LayerMetrics& lm) {
  const auto idx = kept_channels(lm);
  Json j;
  j["name"] = lm.name;
  j["relative_depth"] = lm.relative_depth;
  j["num_channels"] = lm.num_channels;
  j["sigma0_sq"] = lm.sigma0_sq;
  j["peer_from_pooled"] = lm.peer_from_pooled;
  j["primary_target"] = lm.primary_target;
  j["excluded"] = lm.excluded;
  Json ch;
  ch["s"] = vec_json(lm.s);
  ch["rq"] = vec_json(lm.rq);
  ch["i_x"] = vec_json(lm.i_x);
  ch["w_norm_sq"] = vec_json(lm.w_norm_sq);
  ch["r_bar_x"] = vec_json(lm.r_bar_x);
  Json ity = Json::object();
  for (const auto& [t, v] : lm.i_ty) ity[t] = vec_json(v);
  ch["i_ty"] = ity;
  ch["red_t"] = vec_json(lm.red_t);
  ch["syn"] = vec_json(lm.syn);
  j["channels"] = ch;
  j["summary"] = Json{{"mean_i_x", masked_mean(lm.i_x, idx)},
                      {"mean_r_bar_x", masked_mean(lm.r_bar_x, idx)},
                      {"mean_i_ty", masked_mean(lm.i_ty.at(lm.primary_target), idx)},
                      {"mean_red_t", masked_mean(lm.red_t, idx)},
                      {"mean_syn", masked_mean(lm.syn, idx)}};
  return j;
}

std::string layer_metrics_csv(const LayerMetrics& lm, const RunManifest& manifest) {
  std::vector<std::string> header{"channel", "s", "rq", "i_x", "w_norm_sq", "r_bar_x"};
  for (const auto& [t, v] : lm.i_ty) header.push_back("i_ty_" + t);
  for (const char* h : {"red_t", "syn", "excluded"}) header.emplace_back(h);
  CsvWriter w(manifest, "channel-axes/metrics_layer/1", header);
  for (Eigen::Index i = 0; i < lm.num_channels; ++i) {
    w.cell(static_cast<std::int64_t>(i)).cell(lm.s[i]).cell(lm.rq[i]).cell(lm.i_x[i]).cell(lm.w_norm_sq[i]);
    w.cell(lm.r_bar_x[i]);
    for (const auto& [t, v] : lm.i_ty) w.cell(v[i]);
    w.cell(lm.red_t[i]).cell(lm.syn[i]).cell(lm.is_excluded(static_cast<int>(i)));
    w.end_row();
  }
  return w.text();
}

std::string file_stem_with(const std::string& name, const std::string& suffix, const std::string& ext) {
  fs::path p(name);
  fs::path stem = p.parent_path() / p.stem();
  return stem.string() + "_" + suffix + ext;
}

std::string safe_name(const std::string& layer) {
  std::string s;
  for (char c : layer) s.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_validate(const Context& ctx, const std::string& dir) {
  const TensorBundle b = load_bundle(dir);
  std::vector<std::string> targets;
  for (const auto& [t, v] : b.targets) targets.push_back(t);
  *ctx.out << "ok " << dir << ": " << b.layers.size() << " layers, batch " << b.batch_size() << ", targets";
  for (const auto& t : targets) *ctx.out << " " << t;
  *ctx.out << "\n";
  return kExitOk;
}

int cmd_synth(const Context& ctx, const std::string& spec_path, const std::string& out) {
  const SynthSpec spec = read_spec(spec_path, ctx);
  const SynthResult r = synth_bundle(spec);
  const fs::path dir = ctx.resolve(out);
  write_bundle(r.bundle, dir);
  *ctx.out << "wrote " << dir.string() << ": " << r.bundle.layers.size() << " layers\n";
  return kExitOk;
}

int cmd_metrics(const Context& ctx, const std::string& bundle_dir, const std::string& spec_path,
                const MetricsOptions& o, const std::string& out) {
  const Input in = load_input(bundle_dir, spec_path, ctx);
  const Json config = metrics_config_json(o, ctx.seed);
  const RunManifest manifest = make_manifest("metrics", config, in.hash, input_seeds(in));
  const ChannelMetricTable table = compute_metrics(in.bundle, metrics_config(o, ctx.seed));
  Json report = json_report(manifest, "channel-axes/metrics/1");
  report["config"] = config;
  report["targets"] = table.target_names;
  Json layers = Json::array();
  for (std::size_t l = 0; l < table.layers.size(); ++l) {
    Json lj = layer_metrics_json(table.layers[l]);
    lj["alignment"] = layer_alignment(table.layers[l], o, ctx.seed, l);
    layers.push_back(std::move(lj));
  }
  report["layers"] = std::move(layers);
  write_file_atomic(ctx.resolve(out), dump_json(report));
  for (const auto& lm : table.layers) {
    write_file_atomic(ctx.resolve(file_stem_with(out, safe_name(lm.name), ".csv")), layer_metrics_csv(lm, manifest));
  }
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

struct PidOptions {
  bool triplets = false;
  int top_k = 24;
  int max_triples = 1500;
};

int cmd_pid(const Context& ctx, const std::string& bundle_dir, const std::string& spec_path,
            const MetricsOptions& mo, const PidOptions& o, const std::string& out) {
  const Input in = load_input(bundle_dir, spec_path, ctx);
  Json config = metrics_config_json(mo, ctx.seed);
  config["triplets"] = o.triplets;
  config["top_k"] = o.top_k;
  config["max_triples"] = o.max_triples;
  const RunManifest manifest = make_manifest("pid", config, in.hash, input_seeds(in));
  const ChannelMetricTable table = compute_metrics(in.bundle, metrics_config(mo, ctx.seed));
  Json report = json_report(manifest, "channel-axes/pid/1");
  report["config"] = config;
  Json layers = Json::array();
  for (std::size_t l = 0; l < table.layers.size(); ++l) {
    const LayerMetrics& lm = table.layers[l];
    const Eigen::VectorXd& rho = lm.rho_t.at(lm.primary_target);
    const Eigen::VectorXd& ity = lm.i_ty.at(lm.primary_target);
    double red = 0, u1 = 0, u2 = 0, syn = 0, max_err = 0;
    int pairs = 0, clamped = 0;
    for (Eigen::Index i = 0; i < lm.num_channels; ++i) {
      for (int j : lm.partners[static_cast<std::size_t>(i)]) {
        const double joint = joint_task_mi(lm.pooled_corr, rho, {static_cast<int>(i), j}, mo.clip);
        const PidAtoms a = mmi_pid(ity[i], ity[j], joint);
        red += a.red;
        u1 += a.uniq1;
        u2 += a.uniq2;
        syn += a.syn;
        clamped += a.clamped;
        if (!a.clamped) max_err = std::max(max_err, std::abs(a.red + a.uniq1 + a.uniq2 + a.syn - joint));
        ++pairs;
      }
    }
    Json lj;
    lj["name"] = lm.name;
    lj["relative_depth"] = lm.relative_depth;
    lj["pairs"] = pairs;
    const double np = pairs > 0 ? pairs : nan();
    lj["mean_red"] = red / np;
    lj["mean_uniq1"] = u1 / np;
    lj["mean_uniq2"] = u2 / np;
    lj["mean_syn"] = syn / np;
    lj["clamped_pairs"] = clamped;
    lj["max_reconstruction_error"] = max_err;
    const auto idx = kept_channels(lm);
    try {
      lj["spearman_red_t_i_ty"] = spearman(gather(lm.red_t, idx), gather(ity, idx));
    } catch (const Error&) {
      lj["spearman_red_t_i_ty"] = nullptr;
    }
    if (o.triplets) {
      TripletConfig tc;
      tc.top_k = o.top_k;
      tc.max_triples = o.max_triples;
      tc.seed = derive_seed(ctx.seed, l);
      tc.clip = mo.clip;
      const TripletExcess t = triplet_excess(lm.pooled_corr, rho, lm.excluded_mask(), tc);
      lj["triplet"] = Json{{"s3_over_s2", opt_json(t.s3_over_s2)}, {"n_triples", t.n_triples},
                           {"n_used", t.n_used},                   {"mean_s3", t.mean_s3},
                           {"mean_s2", t.mean_s2},                 {"enumerated", t.enumerated}};
    }
    lj["broja"] = nullptr;
    layers.push_back(std::move(lj));
  }
  report["layers"] = std::move(layers);
  write_file_atomic(ctx.resolve(out), dump_json(report));
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

struct HullOptions {
  double eps = 0.05;
  int cap = 10;
  int pool = 32;
};

std::vector<std::vector<Hull>> bundle_hulls(const TensorBundle& bundle, const ChannelMetricTable& table,
                                            const HullConfig& hc) {
  std::vector<std::vector<Hull>> out;
  for (const auto& lm : table.layers) out.push_back(layer_hulls(lm.corr, hc, lm.excluded_mask()));
  (void)bundle;
  return out;
}

HullConfig hull_config(const HullOptions& o) {
  HullConfig hc;
  hc.eps = o.eps;
  hc.cap = o.cap;
  hc.pool_size = o.pool;
  return hc;
}

int cmd_hulls(const Context& ctx, const std::string& bundle_dir, const std::string& spec_path,
              const MetricsOptions& mo, const HullOptions& o, const std::string& out) {
  const Input in = load_input(bundle_dir, spec_path, ctx);
  Json config = metrics_config_json(mo, ctx.seed);
  config["eps"] = o.eps;
  config["cap"] = o.cap;
  config["pool"] = o.pool;
  const RunManifest manifest = make_manifest("hulls", config, in.hash, input_seeds(in));
  const ChannelMetricTable table = compute_metrics(in.bundle, metrics_config(mo, ctx.seed));
  const auto hulls = bundle_hulls(in.bundle, table, hull_config(o));
  Json report = json_report(manifest, "channel-axes/hulls/1");
  report["config"] = config;
  report["pool_note"] = "candidate pool = top " + std::to_string(o.pool) + " peers by |rho|";
  Json layers = Json::array();
  for (std::size_t l = 0; l < table.layers.size(); ++l) {
    const LayerMetrics& lm = table.layers[l];
    const HullSummary s = hull_summary(hulls[l]);
    const CompactScores cs = compact_scores(lm.i_x, hulls[l]);
    Json lj;
    lj["name"] = lm.name;
    lj["relative_depth"] = lm.relative_depth;
    lj["summary"] = Json{{"mean_size", s.mean_size},       {"frac_singleton", s.frac_singleton},
                         {"frac_saturated", s.frac_saturated}, {"n_hulls", s.n_hulls},
                         {"n_irreplaceable", s.n_irreplaceable}};
    Json chans = Json::array();
    for (const Hull& h : hulls[l]) {
      chans.push_back(Json{{"channel", h.channel},
                           {"members", h.members},
                           {"e_trace", h.e_trace},
                           {"e_full", h.e_full},
                           {"status", std::string(to_string(h.status))},
                           {"compact", cs.compact[h.channel]},
                           {"local_compact", cs.local_compact[h.channel]}});
    }
    lj["channels"] = std::move(chans);
    layers.push_back(std::move(lj));
  }
  report["layers"] = std::move(layers);
  write_file_atomic(ctx.resolve(out), dump_json(report));
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

struct LesionOptions {
  int layer = 0;
  int channels = 200;
  std::int64_t samples = 10000;
  int peers = 8;
  double ridge = 1e-3;
  int bins = 5;
};

int cmd_lesion(const Context& ctx, const std::string& spec_path, const LesionOptions& o, const std::string& out) {
  if (spec_path.empty()) throw ValidationError("lesion needs --synth-spec");
  const SynthSpec spec = read_spec(spec_path, ctx);
  const SyntheticModel model = synth_model(spec);
  if (o.layer < 0 || o.layer >= static_cast<int>(model.layers.size())) {
    throw ValidationError("--layer " + std::to_string(o.layer) + " out of range");
  }
  const auto& layer = model.layers[static_cast<std::size_t>(o.layer)];
  std::vector<int> channels(static_cast<std::size_t>(layer.num_channels()));
  std::iota(channels.begin(), channels.end(), 0);
  if (o.channels < 1) throw ValidationError("--channels must be >= 1");
  if (static_cast<int>(channels.size()) > o.channels) {
    Rng rng(spec.seed, 77);
    rng.shuffle(channels);
    channels.resize(static_cast<std::size_t>(o.channels));
    std::sort(channels.begin(), channels.end());
  }
  LesionConfig lc;
  lc.samples = o.samples;
  lc.peers = o.peers;
  lc.ridge = o.ridge;
  lc.seed = spec.seed;
  const Json config{{"layer", o.layer}, {"channels", o.channels}, {"samples", o.samples}, {"peers", o.peers},
                    {"ridge", o.ridge},  {"bins", o.bins},         {"thresholds", lc.thresholds}};
  const RunManifest manifest = make_manifest("lesion", config, sha256_hex(synth_spec_to_json(spec)), {spec.seed});
  const LesionResult r = lesion_experiment(layer, channels, lc, o.layer);

  CsvWriter w(manifest, "channel-axes/lesions/1",
              {"layer", "channel", "delta_loss", "peer_r2", "delta_loss_replaced", "recovery", "task_mi", "i_x"});
  for (const auto& rec : r.records) {
    w.cell(rec.layer).cell(rec.channel).cell(rec.delta_loss).cell(rec.peer_r2).cell(rec.delta_loss_replaced);
    w.cell(rec.recovery ? *rec.recovery : nan()).cell(rec.task_mi).cell(rec.i_x);
    w.end_row();
  }
  write_file_atomic(ctx.resolve(out), w.text());

  Json summary = json_report(manifest, "channel-axes/lesion_summary/1");
  summary["config"] = config;
  Json th = Json::array();
  for (const auto& s : r.summary) {
    const MatchedTaskResult mt = matched_task_analysis(r.records, o.bins, s.threshold);
    Json residual = Json::object();
    for (const auto& rc : mt.residual) residual[rc.predictor] = Json{{"rho", opt_json(rc.rho)}, {"n", rc.n}};
    th.push_back(Json{{"threshold", s.threshold},
                      {"n", s.n},
                      {"median_recovery", s.n > 0 ? Json(s.median_recovery) : Json(nullptr)},
                      {"frac_peer_helps", s.frac_peer_helps},
                      {"rho_peer_r2", opt_json(s.rho_peer_r2)},
                      {"rho_task_mi", opt_json(s.rho_task_mi)},
                      {"rho_i_x", opt_json(s.rho_i_x)},
                      {"matched_task", Json{{"residual", residual},
                                            {"wins", mt.wins},
                                            {"pairs", mt.pairs},
                                            {"win_rate", mt.win_rate},
                                            {"win_ci", {mt.win_ci.first, mt.win_ci.second}},
                                            {"bins_used", mt.bins_used},
                                            {"bins_skipped", mt.bins_skipped}}}});
  }
  summary["thresholds"] = std::move(th);
  write_file_atomic(ctx.resolve(file_stem_with(out, "summary", ".json")), dump_json(summary));
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

int cmd_graphs(const Context& ctx, const std::string& bundle_dir, const std::string& spec_path,
               const MetricsOptions& mo, double top_frac, const std::string& out) {
  if (!(top_frac > 0 && top_frac <= 1)) throw ValidationError("--top-frac must lie in (0, 1]");
  const Input in = load_input(bundle_dir, spec_path, ctx);
  Json config = metrics_config_json(mo, ctx.seed);
  config["top_frac"] = top_frac;
  const RunManifest manifest = make_manifest("graphs", config, in.hash, input_seeds(in));
  const ChannelMetricTable table = compute_metrics(in.bundle, metrics_config(mo, ctx.seed));
  CsvWriter w(manifest, "channel-axes/graphs/1",
              {"layer", "relative_depth", "q_r", "q_s", "gap", "edges_r", "edges_s"});
  for (const auto& lm : table.layers) {
    const LayerModularity m = compare_graphs(lm, top_frac, mo.clip);
    w.cell(lm.name).cell(lm.relative_depth).cell(m.q_r).cell(m.q_s).cell(m.gap).cell(m.edges_r).cell(m.edges_s);
    w.end_row();
  }
  write_file_atomic(ctx.resolve(out), w.text());
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

TrajectoryConfig parse_trajectory_config(const std::string& text) {
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("trajectory config: not a JSON object");
  TrajectoryConfig c;
  static const std::set<std::string> known{"input_dim",        "channels",       "steps",          "lr",
                                           "seed",             "alignment",      "record_every",   "samples",
                                           "sigma0_sq",        "target_noise",   "spectrum_decay", "target_alignment",
                                           "aligned_rank",     "remedian_sigma0", "permuted_target",
                                           "init_noise",       "readout_init"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("trajectory config: unknown field '" + key + "'");
  }
  try {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.channels = j.value("channels", c.channels);
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.record_every = j.value("record_every", c.record_every);
    c.samples = j.value("samples", c.samples);
    c.sigma0_sq = j.value("sigma0_sq", c.sigma0_sq);
    c.target_noise = j.value("target_noise", c.target_noise);
    c.spectrum_decay = j.value("spectrum_decay", c.spectrum_decay);
    c.target_alignment = j.value("target_alignment", c.target_alignment);
    c.aligned_rank = j.value("aligned_rank", c.aligned_rank);
    c.init_noise = j.value("init_noise", c.init_noise);
    c.readout_init = j.value("readout_init", c.readout_init);
    c.remedian_sigma0 = j.value("remedian_sigma0", c.remedian_sigma0);
    c.permuted_target = j.value("permuted_target", c.permuted_target);
    const std::string align = j.value("alignment", std::string("aligned"));
    if (align == "aligned") {
      c.alignment = InitAlignment::kAligned;
    } else if (align == "residual") {
      c.alignment = InitAlignment::kResidual;
    } else {
      throw ValidationError("trajectory config field 'alignment': expected aligned or residual");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("trajectory config: ") + e.what());
  }
  return c;
}

Json trajectory_config_json(const TrajectoryConfig& c) {
  return Json{{"input_dim", c.input_dim},
              {"channels", c.channels},
              {"steps", c.steps},
              {"lr", c.lr},
              {"seed", c.seed},
              {"alignment", c.alignment == InitAlignment::kAligned ? "aligned" : "residual"},
              {"record_every", c.record_every},
              {"samples", c.samples},
              {"sigma0_sq", c.sigma0_sq},
              {"target_noise", c.target_noise},
              {"spectrum_decay", c.spectrum_decay},
              {"target_alignment", c.target_alignment},
              {"aligned_rank", c.aligned_rank},
              {"init_noise", c.init_noise},
              {"readout_init", c.readout_init},
              {"remedian_sigma0", c.remedian_sigma0},
              {"permuted_target", c.permuted_target}};
}

int cmd_traj(const Context& ctx, const std::string& config_path, const std::string& out) {
  TrajectoryConfig c = config_path.empty() ? TrajectoryConfig{} : parse_trajectory_config(read_text_file(config_path));
  if (ctx.seed_given) c.seed = ctx.seed;
  const Json config = trajectory_config_json(c);
  const RunManifest manifest = make_manifest("traj", config, sha256_hex(config.dump()), {c.seed});
  const TrajectoryTrace trace = simulate_training(c);
  CsvWriter w(manifest, "channel-axes/trajectory/1",
              {"step", "loss", "coupling", "cos_ix_it", "cos_update_ix", "cos_update_it", "mean_I_X", "mean_I_TY",
               "rank_persistence_ix", "rank_persistence_ty", "delta_coupling", "permuted_coupling",
               "permuted_mean_I_TY"});
  for (const auto& p : trace.points) {
    w.cell(p.step).cell(p.loss).cell(p.coupling).cell(p.cos_ix_it).cell(p.cos_update_ix).cell(p.cos_update_it);
    w.cell(p.mean_i_x).cell(p.mean_i_ty).cell(p.rank_persistence_ix).cell(p.rank_persistence_ty);
    w.cell(p.delta_coupling);
    if (c.permuted_target) {
      w.cell(p.permuted_coupling).cell(p.permuted_mean_i_ty);
    } else {
      w.cell(nan()).cell(nan());
    }
    w.end_row();
  }
  write_file_atomic(ctx.resolve(out), w.text());
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

int cmd_crosslayer(const Context& ctx, const std::string& bundle_dir, const std::string& spec_path,
                   const MetricsOptions& mo, const std::string& out) {
  const Input in = load_input(bundle_dir, spec_path, ctx);
  const Json config = metrics_config_json(mo, ctx.seed);
  const RunManifest manifest = make_manifest("crosslayer", config, in.hash, input_seeds(in));
  const ChannelMetricTable table = compute_metrics(in.bundle, metrics_config(mo, ctx.seed));
  const auto mats = propagation_matrices(in.bundle, table);
  CsvWriter w(manifest, "channel-axes/crosslayer/1",
              {"source", "destination", "source_metric", "destination_metric", "spearman", "n_destinations"});
  for (const auto& pm : mats) {
    for (int s = 0; s < 4; ++s) {
      for (int d = 0; d < 4; ++d) {
        w.cell(pm.source).cell(pm.destination).cell(kAxisMetricNames[s]).cell(kAxisMetricNames[d]);
        w.cell(pm.entries(s, d)).cell(pm.n_destinations);
        w.end_row();
      }
    }
  }
  write_file_atomic(ctx.resolve(out), w.text());

  Json summary = json_report(manifest, "channel-axes/crosslayer_summary/1");
  Json pairs = Json::array();
  double sums[3] = {0, 0, 0};
  int counts[3] = {0, 0, 0};
  for (const auto& pm : mats) {
    pairs.push_back(Json{{"source", pm.source},
                         {"destination", pm.destination},
                         {"local_local", opt_json(pm.local_local)},
                         {"target_target", opt_json(pm.target_target)},
                         {"cross", opt_json(pm.cross)}});
    const std::optional<double> blocks[3] = {pm.local_local, pm.target_target, pm.cross};
    for (int b = 0; b < 3; ++b) {
      if (blocks[b]) {
        sums[b] += *blocks[b];
        ++counts[b];
      }
    }
  }
  summary["pairs"] = std::move(pairs);
  auto block_mean = [&](int b) { return counts[b] ? Json(sums[b] / counts[b]) : Json(nullptr); };
  summary["mean"] = Json{{"local_local", block_mean(0)}, {"target_target", block_mean(1)}, {"cross", block_mean(2)}};
  write_file_atomic(ctx.resolve(file_stem_with(out, "summary", ".json")), dump_json(summary));
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Pruning

const std::vector<std::string> kDefaultMethods{"magnitude",   "taylor",       "random",       "fpgm",
                                               "act_rms",     "i_x",          "r_bar_x_neg",  "composite_ix",
                                               "mixed_mag_ix", "ix_minus_red", "composite_pid", "i_ty",
                                               "local_compact"};

const std::map<std::string, std::vector<std::string>>& default_families() {
  static const std::map<std::string, std::vector<std::string>> f{
      {"local", {"i_x", "r_bar_x_neg", "composite_ix", "mixed_mag_ix", "ix_minus_red", "local_compact"}},
      {"target", {"i_ty", "composite_pid"}},
      {"baseline", {"magnitude", "taylor", "random", "fpgm", "act_rms", "bn_scale"}},
  };
  return f;
}

struct PruneOptions {
  std::string methods;
  std::string levels = "10";
  std::string seeds;
  std::string hybrid;
  int min_keep = 1;
  double alpha = 2.0, gamma = 0.25, mixed_alpha = 1.0, red_beta = 1.0;
  std::string excluded = "drop";
  std::string accuracy;
};

std::vector<double> parse_levels(const std::string& text) {
  const auto items = split_list(text);
  if (items.size() == 1 && items[0].find('.') == std::string::npos) {
    int n = 0;
    try {
      n = std::stoi(items[0]);
    } catch (const std::exception&) {
      throw ValidationError("--levels: expected a count or a list of fractions");
    }
    if (n == 10) return default_sparsity_levels();
    if (n < 1) throw ValidationError("--levels: count must be >= 1");
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? 0.5 : 0.1 + 0.85 * i / (n - 1));
    return out;
  }
  std::vector<double> out;
  for (const auto& s : items) {
    double v = 0;
    try {
      v = std::stod(s);
    } catch (const std::exception&) {
      throw ValidationError("--levels: bad value '" + s + "'");
    }
    if (!(v > 0 && v < 1)) throw ValidationError("--levels: sparsity " + s + " outside (0, 1)");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("--levels: empty list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text, std::uint64_t fallback) {
  if (text.empty()) return {fallback};
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) {
    try {
      out.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ValidationError("--seeds: bad value '" + s + "'");
    }
  }
  return out;
}

ScoreParams score_params(const PruneOptions& o, std::uint64_t seed) {
  ScoreParams p;
  p.composite_alpha = o.alpha;
  p.composite_gamma = o.gamma;
  p.mixed_alpha = o.mixed_alpha;
  p.red_beta = o.red_beta;
  p.seed = seed;
  if (o.excluded == "drop") {
    p.excluded = ExcludedPolicy::kForceDrop;
  } else if (o.excluded == "keep") {
    p.excluded = ExcludedPolicy::kForceKeep;
  } else {
    throw ValidationError("--excluded: expected drop or keep");
  }
  return p;
}

struct ScoreSource {
  const TensorBundle* bundle = nullptr;
  const MetricsOptions* mo = nullptr;
  const HullOptions* ho = nullptr;
  std::uint64_t seed = 0;
  std::optional<ChannelMetricTable> metrics;
  std::optional<std::vector<std::vector<Hull>>> hulls;
  std::map<std::string, ScoreTable> cache;

  const ScoreTable& get(const std::string& method, const ScoreParams& params) {
    auto it = cache.find(method);
    if (it != cache.end()) return it->second;
    if (!is_score_method(method)) throw ValidationError("unknown score method '" + method + "'");
    if (score_needs_metrics(method) && !metrics) metrics = compute_metrics(*bundle, metrics_config(*mo, seed));
    if (score_needs_hulls(method) && !hulls) hulls = bundle_hulls(*bundle, *metrics, hull_config(*ho));
    return cache.emplace(method, compute_scores(*bundle, metrics ? &*metrics : nullptr, hulls ? &*hulls : nullptr,
                                                method, params))
        .first->second;
  }
};

std::vector<std::pair<std::string, std::string>> parse_hybrids(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || item.rfind("external:", 0) == 0) {
      throw ValidationError("--hybrid: expected allocation:selection, got '" + item + "'");
    }
    out.emplace_back(item.substr(0, colon), item.substr(colon + 1));
  }
  return out;
}

std::string hybrid_name(const std::pair<std::string, std::string>& h) {
  return "hybrid(" + h.first + "|" + h.second + ")";
}

std::vector<ExternalAccuracy> read_accuracy(const std::string& path) {
  const CsvTable t = parse_csv(read_text_file(path), path);
  const auto cm = t.column("method"), cs = t.column("seed"), cn = t.column("sparsity_nominal"),
             cf = t.column("flops_fraction"), ca = t.column("accuracy");
  std::vector<ExternalAccuracy> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    try {
      rows.push_back({row[cm], std::stoull(row[cs]), std::stod(row[cn]), std::stod(row[cf]), std::stod(row[ca])});
    } catch (const std::exception&) {
      throw ValidationError(path + ": unparsable value in data row " + std::to_string(r + 1));
    }
  }
  return rows;
}

void write_curves(const Context& ctx, const RunManifest& manifest, const std::vector<PruneCurve>& curves,
                  const std::map<std::pair<std::string, std::uint64_t>, std::map<double, double>>& achieved,
                  const std::string& out) {
  CsvWriter w(manifest, "channel-axes/prune_curves/1",
              {"method", "seed", "sparsity_nominal", "sparsity_achieved", "flops_fraction", "retention"});
  for (const auto& c : curves) {
    const auto a = achieved.find({c.method, c.seed});
    for (const auto& p : c.points) {
      double ach = p.sparsity_nominal == 0.0 ? 0.0 : nan();
      if (a != achieved.end()) {
        auto it = a->second.find(p.sparsity_nominal);
        if (it != a->second.end()) ach = it->second;
      }
      w.cell(c.method).cell(c.seed).cell(p.sparsity_nominal).cell(ach).cell(p.flops_fraction).cell(p.retention);
      w.end_row();
    }
  }
  write_file_atomic(ctx.resolve(out), w.text());
}

int cmd_prune(const Context& ctx, const std::string& bundle_dir, const std::string& spec_path,
              const MetricsOptions& mo, const HullOptions& ho, const PruneOptions& o, const std::string& out) {
  if (o.min_keep < 1) throw ValidationError("--min-keep must be >= 1");
  std::vector<std::string> methods = o.methods.empty() ? kDefaultMethods : split_list(o.methods);
  for (const auto& m : methods) {
    if (!is_score_method(m)) throw ValidationError("unknown score method '" + m + "'");
  }
  const auto hybrids = parse_hybrids(o.hybrid);
  const auto levels = parse_levels(o.levels);
  MaskOptions mask_opts;
  mask_opts.min_keep = o.min_keep;

  Json config = metrics_config_json(mo, ctx.seed);
  config["methods"] = methods;
  config["levels"] = levels;
  config["hybrid"] = o.hybrid;
  config["min_keep"] = o.min_keep;
  config["score_params"] = Json{{"alpha", o.alpha}, {"gamma", o.gamma}, {"mixed_alpha", o.mixed_alpha},
                                {"red_beta", o.red_beta}, {"excluded", o.excluded}};
  config["hulls"] = Json{{"eps", ho.eps}, {"cap", ho.cap}, {"pool", ho.pool}};

  if (!o.accuracy.empty()) {
    const auto curves = curves_from_accuracy(read_accuracy(o.accuracy));
    std::set<std::uint64_t> seeds;
    for (const auto& c : curves) seeds.insert(c.seed);
    const RunManifest manifest = make_manifest("prune", Json{{"accuracy", true}},
                                               sha256_hex(read_text_file(o.accuracy)),
                                               std::vector<std::uint64_t>(seeds.begin(), seeds.end()));
    write_curves(ctx, manifest, curves, {}, out);
    *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
    return kExitOk;
  }

  if (!spec_path.empty()) {
    const SynthSpec base = read_spec(spec_path, ctx);
    const auto seeds = parse_seeds(o.seeds, base.seed);
    config["seeds"] = seeds;
    std::string spec_json = synth_spec_to_json(base);
    const RunManifest manifest = make_manifest("prune", config, sha256_hex(spec_json), seeds);
    std::vector<PruneCurve> curves;
    std::map<std::pair<std::string, std::uint64_t>, std::map<double, double>> achieved;
    for (auto seed : seeds) {
      SynthSpec spec = base;
      spec.seed = seed;
      const SynthResult sr = synth_bundle(spec);
      const Architecture arch = architecture_of(sr.bundle);
      ScoreSource source{&sr.bundle, &mo, &ho, seed, {}, {}, {}};
      const ScoreParams params = score_params(o, seed);
      auto record = [&](const std::string& name, auto&& mask_at) {
        PruneCurve curve;
        curve.method = name;
        curve.seed = seed;
        curve.points.push_back({0.0, 0.0, 1.0});
        for (double level : levels) {
          const PruneMask mask = mask_at(level);
          curve.points.push_back({level, mask.flops_fraction_pruned, synthetic_retention(sr.model, mask)});
          achieved[{name, seed}][level] = mask.sparsity_achieved;
        }
        std::stable_sort(curve.points.begin(), curve.points.end(), [](const CurvePoint& a, const CurvePoint& b) {
          return a.flops_fraction < b.flops_fraction;
        });
        curves.push_back(std::move(curve));
      };
      for (const auto& m : methods) {
        const ScoreTable& table = source.get(m, params);
        record(m, [&](double level) { return global_threshold_mask(arch, table, level, mask_opts); });
      }
      for (const auto& h : hybrids) {
        const ScoreTable alloc = source.get(h.first, params);
        const ScoreTable& sel = source.get(h.second, params);
        record(hybrid_name(h), [&](double level) { return hybrid_mask(arch, alloc, sel, level, mask_opts); });
      }
    }
    write_curves(ctx, manifest, curves, achieved, out);
    *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
    return kExitOk;
  }

  // Real bundle: masks and FLOPs only; accuracy comes back through --accuracy.
  const Input in = load_input(bundle_dir, "", ctx);
  const RunManifest manifest = make_manifest("prune", config, in.hash, input_seeds(in));
  const Architecture arch = architecture_of(in.bundle);
  ScoreSource source{&in.bundle, &mo, &ho, ctx.seed, {}, {}, {}};
  const ScoreParams params = score_params(o, ctx.seed);
  CsvWriter w(manifest, "channel-axes/prune_masks/1",
              {"method", "sparsity_nominal", "sparsity_achieved", "flops_fraction", "min_keep_bound", "layer", "kept",
               "channels"});
  auto emit = [&](const std::string& name, const PruneMask& mask) {
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
      const auto kept = std::count(mask.keep[l].begin(), mask.keep[l].end(), true);
      w.cell(name).cell(mask.sparsity_nominal).cell(mask.sparsity_achieved).cell(mask.flops_fraction_pruned);
      w.cell(mask.min_keep_bound).cell(mask.layers[l]).cell(static_cast<std::int64_t>(kept));
      w.cell(static_cast<std::int64_t>(mask.keep[l].size()));
      w.end_row();
    }
  };
  for (const auto& m : methods) {
    const ScoreTable& table = source.get(m, params);
    for (double level : levels) emit(m, global_threshold_mask(arch, table, level, mask_opts));
  }
  for (const auto& h : hybrids) {
    const ScoreTable alloc = source.get(h.first, params);
    const ScoreTable& sel = source.get(h.second, params);
    for (double level : levels) emit(hybrid_name(h), hybrid_mask(arch, alloc, sel, level, mask_opts));
  }
  write_file_atomic(ctx.resolve(out), w.text());
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

std::vector<PruneCurve> read_curves(const std::string& path) {
  const CsvTable t = parse_csv(read_text_file(path), path);
  if (!t.schema.empty() && t.schema != "channel-axes/prune_curves/1") {
    throw ValidationError(path + ": expected schema channel-axes/prune_curves/1, got '" + t.schema + "'");
  }
  const auto cm = t.column("method"), cs = t.column("seed"), cn = t.column("sparsity_nominal"),
             cf = t.column("flops_fraction"), cr = t.column("retention");
  std::map<std::pair<std::string, std::uint64_t>, PruneCurve> by_key;
  std::vector<std::pair<std::string, std::uint64_t>> order;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    try {
      const std::pair<std::string, std::uint64_t> key{row[cm], std::stoull(row[cs])};
      auto [it, fresh] = by_key.try_emplace(key);
      if (fresh) {
        it->second.method = key.first;
        it->second.seed = key.second;
        order.push_back(key);
      }
      it->second.points.push_back({std::stod(row[cn]), std::stod(row[cf]), std::stod(row[cr])});
    } catch (const std::invalid_argument&) {
      throw ValidationError(path + ": unparsable value in data row " + std::to_string(r + 1));
    }
  }
  std::vector<PruneCurve> curves;
  for (const auto& k : order) curves.push_back(std::move(by_key[k]));
  return curves;
}

std::map<std::string, std::vector<std::string>> read_families(const std::string& path) {
  if (path.empty()) return default_families();
  const Json j = Json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError(path + ": families must be a JSON object");
  std::map<std::string, std::vector<std::string>> f;
  for (const auto& [family, list] : j.items()) {
    if (!list.is_array()) throw ValidationError(path + ": family '" + family + "' must list method names");
    for (const auto& m : list) {
      if (!m.is_string()) throw ValidationError(path + ": family '" + family + "' must list method names");
      f[family].push_back(m.get<std::string>());
    }
    if (f[family].empty()) throw ValidationError(path + ": family '" + family + "' has no methods");
  }
  return f;
}

int cmd_auc(const Context& ctx, const std::string& curves_path, const std::string& families_path, int n_boot,
            const std::string& out) {
  if (n_boot < 100) throw ValidationError("--n-boot must be >= 100");
  const auto curves = read_curves(curves_path);
  std::set<std::string> present;
  for (const auto& c : curves) present.insert(c.method);
  std::map<std::string, std::string> family_of;
  for (const auto& [family, list] : read_families(families_path)) {
    for (const auto& m : list) {
      if (families_path.empty() && !present.count(m)) continue;
      auto [it, fresh] = family_of.emplace(m, family);
      if (!fresh && it->second != family) {
        throw ValidationError("method '" + m + "' listed in families '" + it->second + "' and '" + family + "'");
      }
    }
  }
  const Json config{{"families", family_of}, {"n_boot", n_boot}, {"seed", ctx.seed}};
  std::set<std::uint64_t> seeds;
  for (const auto& c : curves) seeds.insert(c.seed);
  const RunManifest manifest = make_manifest("auc", config, sha256_hex(read_text_file(curves_path)),
                                             std::vector<std::uint64_t>(seeds.begin(), seeds.end()));
  const CompareResult r = compare_methods(curves, family_of, n_boot, ctx.seed);

  Json report = json_report(manifest, "channel-axes/auc/1");
  report["config"] = config;
  Json intervals = Json::array();
  for (auto seed : seeds) {
    std::vector<PruneCurve> group;
    for (const auto& c : curves) {
      if (c.seed == seed) group.push_back(c);
    }
    const AucResult a = auc_common_interval(group);
    intervals.push_back(Json{{"seed", seed}, {"lo", a.lo}, {"hi", a.hi}});
  }
  report["intervals"] = std::move(intervals);
  Json methods = Json::array();
  for (const auto& [m, by_seed] : r.auc) {
    Json per = Json::object();
    for (const auto& [s, v] : by_seed) per[std::to_string(s)] = v;
    auto f = family_of.find(m);
    methods.push_back(Json{{"method", m},
                           {"family", f == family_of.end() ? Json(nullptr) : Json(f->second)},
                           {"mean_auc", r.method_mean.at(m)},
                           {"per_seed", per}});
  }
  report["methods"] = std::move(methods);
  report["family_best"] = r.family_best;
  Json deltas = Json::array();
  for (const auto& d : r.deltas) {
    deltas.push_back(Json{{"label", d.label},
                          {"left", d.left},
                          {"right", d.right},
                          {"mean_delta", d.mean_delta},
                          {"ci95", {d.ci95_lo, d.ci95_hi}},
                          {"n_seeds", d.n_seeds}});
  }
  report["deltas"] = std::move(deltas);
  write_file_atomic(ctx.resolve(out), dump_json(report));
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

int cmd_loso(const Context& ctx, const std::string& curves_path, const std::string& family,
             const std::string& families_path, const std::string& comparators, const std::string& out) {
  const auto curves = read_curves(curves_path);
  const auto auc = per_seed_auc(curves);
  std::set<std::string> members;
  const auto families = read_families(families_path);
  auto fam = families.find(family);
  if (fam != families.end()) {
    for (const auto& m : fam->second) {
      if (auc.count(m) || !families_path.empty()) members.insert(m);
    }
  } else {
    for (const auto& m : split_list(family)) members.insert(m);
  }
  if (members.empty()) throw ValidationError("--family '" + family + "' has no methods with curves");
  std::vector<std::string> comps;
  if (comparators.empty()) {
    auto base = families.find("baseline");
    if (base != families.end()) {
      for (const auto& m : base->second) {
        if (auc.count(m)) comps.push_back(m);
      }
    }
  } else {
    comps = split_list(comparators);
  }
  const Json config{{"family", family}, {"members", members}, {"comparators", comps}};
  std::set<std::uint64_t> seeds;
  for (const auto& c : curves) seeds.insert(c.seed);
  const RunManifest manifest = make_manifest("loso", config, sha256_hex(read_text_file(curves_path)),
                                             std::vector<std::uint64_t>(seeds.begin(), seeds.end()));
  const LosoResult r = loso_selector(auc, members, comps);
  Json report = json_report(manifest, "channel-axes/loso/1");
  report["config"] = config;
  Json folds = Json::array();
  for (const auto& f : r.folds) {
    folds.push_back(Json{{"held_out", f.held_out},
                         {"chosen", f.chosen},
                         {"chosen_auc", f.chosen_auc},
                         {"oracle", f.oracle},
                         {"oracle_auc", f.oracle_auc},
                         {"gap_to_oracle", f.gap_to_oracle},
                         {"delta_vs", f.delta_vs}});
  }
  report["folds"] = std::move(folds);
  report["mean_gap_to_oracle"] = r.mean_gap;
  report["mean_delta_vs"] = r.mean_delta_vs;
  write_file_atomic(ctx.resolve(out), dump_json(report));
  *ctx.out << "wrote " << ctx.resolve(out).string() << "\n";
  return kExitOk;
}

int cmd_plot(const Context& ctx, const std::string& report_path, const std::string& kind, const std::string& out) {
  const PlotKind k = parse_plot_kind(kind);
  const Figure fig = figure_from_report(read_text_file(report_path), k);
  const std::string name = out.empty() ? std::string(to_string(k)) + ".svg" : out;
  write_file_atomic(ctx.resolve(name), render_svg(fig));
  *ctx.out << "wrote " << ctx.resolve(name).string() << "\n";
  return kExitOk;
}

void add_metric_flags(CLI::App* sub, MetricsOptions& o) {
  sub->add_option("--targets", o.targets, "comma-separated target names; the first drives Red_T/Syn");
  sub->add_option("--m", o.m, "partners per channel");
  sub->add_option("--partner-rule", o.partner_rule, "top_task, top_joint, top_synergy or random_top_pool");
  sub->add_option("--clip", o.clip, "correlation clip");
  sub->add_option("--eps-cov", o.eps_cov, "ridge added to the patch covariance");
}

void add_hull_flags(CLI::App* sub, HullOptions& o) {
  sub->add_option("--eps", o.eps, "hull tolerance");
  sub->add_option("--cap", o.cap, "maximum hull size");
  sub->add_option("--pool", o.pool, "candidate peers per channel");
}

}  // namespace

const std::vector<std::string>& subcommands() { return kSubcommands; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto usage = [&] {
    err << "usage: channel-axes <subcommand> [options]\nsubcommands:";
    for (const auto& s : kSubcommands) err << " " << s;
    err << "\nglobal options: --seed, --workers, --out-dir\n";
  };
  if (args.empty()) {
    usage();
    return kExitUsage;
  }
  // Global options may precede the subcommand.
  std::size_t first = 0;
  while (first < args.size() && (args[first] == "--seed" || args[first] == "--workers" || args[first] == "--out-dir")) {
    first += 2;
  }
  if (first >= args.size()) {
    usage();
    return kExitUsage;
  }
  const std::string command = args[first];
  if (command != "--help" && command != "-h" &&
      std::find(kSubcommands.begin(), kSubcommands.end(), command) == kSubcommands.end()) {
    err << "unknown subcommand '" << command << "'\n";
    usage();
    return kExitUsage;
  }

  CLI::App app{"Channel information analysis engine", "channel-axes"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out_dir = ".";
  auto* seed_opt = app.add_option("--seed", seed, "base random seed")->capture_default_str();
  app.add_option("--workers", workers, "worker threads (0 = all cores)");
  app.add_option("--out-dir", out_dir, "directory for reports");

  std::string bundle, synth_spec, output, config_path, families, comparators, family = "local", kind;
  MetricsOptions mo;
  PidOptions po;
  HullOptions ho;
  LesionOptions lo;
  PruneOptions pr;
  double top_frac = 0.10;
  int n_boot = 2000;
  std::map<std::string, CLI::App*> subs;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    subs[name] = s;
    return s;
  };

  {
    auto* s = sub("validate", "check a bundle directory");
    s->add_option("bundle", bundle, "bundle directory")->required();
  }
  {
    auto* s = sub("synth", "sample a synthetic bundle from a spec");
    s->add_option("--spec", synth_spec, "synthetic model spec (JSON)")->required();
    s->add_option("--out", output, "output bundle directory")->required();
  }
  {
    auto* s = sub("metrics", "per-channel axis metrics");
    s->add_option("bundle", bundle, "bundle directory");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec instead of a bundle");
    add_metric_flags(s, mo);
    s->add_option("--k", mo.k, "clusters for the local/target agreement");
    s->add_option("--n-perm", mo.n_perm, "permutations for the ARI null");
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("pid", "pairwise MMI decomposition and triplet excess");
    s->add_option("bundle", bundle, "bundle directory");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec instead of a bundle");
    add_metric_flags(s, mo);
    s->add_flag("--triplets", po.triplets, "compute the triplet excess ratio");
    s->add_option("--top-k", po.top_k, "channels entering the triplet sample");
    s->add_option("--max-triples", po.max_triples, "triplet sample cap");
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("hulls", "replaceability hulls");
    s->add_option("bundle", bundle, "bundle directory");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec instead of a bundle");
    add_metric_flags(s, mo);
    add_hull_flags(s, ho);
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("lesion", "lesion and peer-replacement simulation");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec")->required();
    s->add_option("--layer", lo.layer, "layer index");
    s->add_option("--channels", lo.channels, "channels to lesion");
    s->add_option("--samples", lo.samples, "simulated samples");
    s->add_option("--peers", lo.peers, "peers in the replacement regression");
    s->add_option("--ridge", lo.ridge, "replacement ridge");
    s->add_option("--bins", lo.bins, "task-MI bins for the matched analysis");
    s->add_option("--out", output, "lesion table");
  }
  {
    auto* s = sub("graphs", "redundancy vs synergy graph modularity");
    s->add_option("bundle", bundle, "bundle directory");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec instead of a bundle");
    add_metric_flags(s, mo);
    s->add_option("--top-frac", top_frac, "fraction of positive pairs kept as edges");
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("traj", "training-trajectory simulation");
    s->add_option("--config", config_path, "trajectory config (JSON)");
    s->add_option("--out", output, "trace file");
  }
  {
    auto* s = sub("crosslayer", "cross-layer metric propagation");
    s->add_option("bundle", bundle, "bundle directory");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec instead of a bundle");
    add_metric_flags(s, mo);
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("prune", "pruning curves");
    s->add_option("bundle", bundle, "bundle directory (masks and FLOPs only)");
    s->add_option("--synth-spec", synth_spec, "synthetic model spec (retention curves)");
    s->add_option("--accuracy", pr.accuracy, "external accuracy CSV to convert into curves");
    add_metric_flags(s, mo);
    add_hull_flags(s, ho);
    s->add_option("--methods", pr.methods, "comma-separated score methods");
    s->add_option("--levels", pr.levels, "level count or comma-separated sparsities");
    s->add_option("--seeds", pr.seeds, "comma-separated model seeds (synthetic only)");
    s->add_option("--hybrid", pr.hybrid, "comma-separated allocation:selection pairs");
    s->add_option("--min-keep", pr.min_keep, "channels kept per layer at least");
    s->add_option("--alpha", pr.alpha, "composite_ix weight on z(I_X)");
    s->add_option("--gamma", pr.gamma, "composite_ix weight on z(R_bar_X)");
    s->add_option("--mixed-alpha", pr.mixed_alpha, "mixed_mag_ix weight on z(I_X)");
    s->add_option("--red-beta", pr.red_beta, "ix_minus_red weight on R_bar_X");
    s->add_option("--excluded", pr.excluded, "zero-variance channels: drop or keep");
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("auc", "FLOPs-matched AUC comparison");
    s->add_option("curves", bundle, "curves CSV")->required();
    s->add_option("--families", families, "family -> methods JSON");
    s->add_option("--n-boot", n_boot, "bootstrap resamples");
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("loso", "leave-one-seed-out score selection");
    s->add_option("curves", bundle, "curves CSV")->required();
    s->add_option("--family", family, "family name or comma-separated methods");
    s->add_option("--families", families, "family -> methods JSON");
    s->add_option("--comparators", comparators, "comma-separated comparator methods");
    s->add_option("--out", output, "report file");
  }
  {
    auto* s = sub("plot", "render a report as SVG");
    s->add_option("report", bundle, "report file")->required();
    s->add_option("--kind", kind, "scatter_axes, ari_null, depth_profiles, prune_curves or trajectory")->required();
    s->add_option("--out", output, "SVG file");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    usage();
    return kExitUsage;
  }

  static const std::map<std::string, std::string> kDefaultOutput{
      {"metrics", "metrics.json"}, {"pid", "pid.json"},       {"hulls", "hulls.json"},
      {"lesion", "lesions.csv"},   {"graphs", "graphs.csv"},  {"traj", "trace.csv"},
      {"crosslayer", "crosslayer.csv"}, {"prune", "curves.csv"}, {"auc", "auc.json"},
      {"loso", "loso.json"}};
  if (output.empty()) {
    auto d = kDefaultOutput.find(command);
    if (d != kDefaultOutput.end()) output = d->second;
  }

  Context ctx;
  ctx.seed = seed;
  ctx.seed_given = seed_opt->count() > 0;
  ctx.out_dir = out_dir;
  ctx.out = &out;
  set_default_workers(workers);

  try {
    const std::string& name = command;
    if (name == "validate") return cmd_validate(ctx, bundle);
    if (name == "synth") return cmd_synth(ctx, synth_spec, output);
    if (name == "metrics") return cmd_metrics(ctx, bundle, synth_spec, mo, output);
    if (name == "pid") return cmd_pid(ctx, bundle, synth_spec, mo, po, output);
    if (name == "hulls") return cmd_hulls(ctx, bundle, synth_spec, mo, ho, output);
    if (name == "lesion") return cmd_lesion(ctx, synth_spec, lo, output);
    if (name == "graphs") return cmd_graphs(ctx, bundle, synth_spec, mo, top_frac, output);
    if (name == "traj") return cmd_traj(ctx, config_path, output);
    if (name == "crosslayer") return cmd_crosslayer(ctx, bundle, synth_spec, mo, output);
    if (name == "prune") return cmd_prune(ctx, bundle, synth_spec, mo, ho, pr, output);
    if (name == "auc") return cmd_auc(ctx, bundle, families, n_boot, output);
    if (name == "loso") return cmd_loso(ctx, bundle, family, families, comparators, output);
    if (name == "plot") return cmd_plot(ctx, bundle, kind, output);
  } catch (const DegenerateDataError& e) {
    err << "degenerate data: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  usage();
  return kExitUsage;
}

}  // namespace channel_axes::cli
