#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "channel_axes_cli/cli.hpp"
#include "channel_axes_cli/plot.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using channel_axes::cli::run;
using Json = nlohmann::ordered_json;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

constexpr const char* kSpec =
    R"({"channels":[12,10,8],"input_dim":8,"batch":400,"patches":400,"seed":3,)"
    R"("duplication_plan":[{"layer":0,"target":1,"sources":[0],"coeffs":[]}]})";
constexpr const char* kTraj =
    R"({"input_dim":8,"channels":10,"steps":20,"record_every":10,"samples":300,"seed":1})";
constexpr const char* kFamilies = R"({"local":["i_x"],"target":["i_ty"],"baseline":["magnitude"]})";

void write_inputs(const fs::path& dir) {
  spit(dir / "spec.json", kSpec);
  spit(dir / "traj.json", kTraj);
  spit(dir / "families.json", kFamilies);
}

// Every report the pipeline produces, keyed by file name.
std::vector<std::string> run_pipeline(const fs::path& dir, const std::string& workers = "1") {
  write_inputs(dir);
  const std::string d = dir.string();
  const std::vector<std::vector<std::string>> steps{
      {"synth", "--spec", d + "/spec.json", "--out", "bundle"},
      {"metrics", d + "/bundle", "--out", "metrics.json"},
      {"pid", d + "/bundle", "--triplets", "--out", "pid.json"},
      {"hulls", d + "/bundle", "--out", "hulls.json"},
      {"graphs", d + "/bundle", "--out", "graphs.csv"},
      {"crosslayer", d + "/bundle", "--out", "crosslayer.csv"},
      {"lesion", "--synth-spec", d + "/spec.json", "--samples", "2000", "--out", "lesions.csv"},
      {"traj", "--config", d + "/traj.json", "--out", "trace.csv"},
      {"prune", "--synth-spec", d + "/spec.json", "--methods", "i_x,i_ty,magnitude,local_compact", "--levels", "4",
       "--seeds", "1,2", "--out", "curves.csv"},
      {"prune", d + "/bundle", "--methods", "magnitude", "--levels", "3", "--out", "masks.csv"},
      {"auc", d + "/curves.csv", "--families", d + "/families.json", "--n-boot", "200", "--out", "auc.json"},
      {"loso", d + "/curves.csv", "--family", "i_x,magnitude", "--comparators", "i_ty", "--out", "loso.json"},
      {"plot", d + "/curves.csv", "--kind", "prune_curves", "--out", "curves.svg"},
      {"plot", d + "/metrics.json", "--kind", "scatter_axes", "--out", "scatter.svg"},
      {"plot", d + "/trace.csv", "--kind", "trajectory", "--out", "trace.svg"},
  };
  for (auto args : steps) {
    args.insert(args.begin(), {"--out-dir", d, "--workers", workers});
    const auto r = cli(args);
    EXPECT_EQ(r.code, 0) << args[4] << ": " << r.err;
  }
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Structure of a JSON report: one line per key path with the leaf kind.
void skeleton(const Json& j, const std::string& path, std::set<std::string>& out) {
  if (j.is_object()) {
    out.insert(path + " object");
    for (const auto& [k, v] : j.items()) skeleton(v, path + "." + k, out);
  } else if (j.is_array()) {
    out.insert(path + " array");
    for (const auto& v : j) skeleton(v, path + "[]", out);
  } else if (j.is_string()) {
    out.insert(path + " string");
  } else if (j.is_boolean()) {
    out.insert(path + " bool");
  } else {
    out.insert(path + " number");
  }
}

std::string schema_of(const std::string& text) {
  if (!text.empty() && text.front() == '#') {
    std::istringstream in(text);
    std::string line;
    std::string out;
    while (std::getline(in, line) && line.rfind("# ", 0) == 0) {
      if (line.rfind("# schema ", 0) == 0) out += line + "\n";
    }
    out += line + "\n";  // header row
    return out;
  }
  const Json j = Json::parse(text);
  std::set<std::string> lines;
  skeleton(j, "$", lines);
  std::string out = "schema " + j.at("schema").get<std::string>() + "\n";
  for (const auto& l : lines) {
    if (l.rfind("$.manifest.", 0) == 0 || l.rfind("$.schema ", 0) == 0) continue;
    out += l + "\n";
  }
  return out;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).code, 1);
  const auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
  EXPECT_EQ(cli({"metrics", "--no-such-flag"}).code, 1);
  EXPECT_EQ(cli({"synth"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, ValidateGoodAndBrokenBundles) {
  test_util::TempDir dir;
  write_inputs(dir.path());
  ASSERT_EQ(cli({"--out-dir", dir.path().string(), "synth", "--spec", (dir / "spec.json").string(), "--out", "b"}).code, 0);
  const auto ok = cli({"validate", (dir / "b").string()});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(cli({"validate", (dir / "missing").string()}).code, 2);

  Json m = Json::parse(slurp(dir / "b" / "manifest.json"));
  m.erase("targets");
  spit(dir / "b" / "manifest.json", m.dump());
  const auto r = cli({"--out-dir", dir.path().string(), "metrics", (dir / "b").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("targets"), std::string::npos) << r.err;
}

TEST(Cli, MalformedInputsExitTwo) {
  test_util::TempDir dir;
  spit(dir / "bad.json", "{not json");
  EXPECT_EQ(cli({"synth", "--spec", (dir / "bad.json").string(), "--out", (dir / "x").string()}).code, 2);
  spit(dir / "unknown.json", R"({"channels":[4],"wat":1})");
  EXPECT_EQ(cli({"synth", "--spec", (dir / "unknown.json").string(), "--out", (dir / "x").string()}).code, 2);
  spit(dir / "curves.csv", "method,seed\n");
  EXPECT_EQ(cli({"--out-dir", dir.path().string(), "auc", (dir / "curves.csv").string()}).code, 2);
  EXPECT_EQ(cli({"--out-dir", dir.path().string(), "prune", "--synth-spec", (dir / "unknown.json").string(),
                 "--methods", "nope"})
                .code,
            2);
}

TEST(Cli, DegenerateDataExitsThree) {
  test_util::TempDir dir;
  spit(dir / "traj.json", R"({"input_dim":8,"channels":10,"steps":20,"samples":300,"lr":50})");
  const auto r = cli({"--out-dir", dir.path().string(), "traj", "--config", (dir / "traj.json").string()});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, PipelineIsByteIdenticalAcrossRunsAndWorkers) {
  test_util::TempDir a, b, c;
  const auto fa = run_pipeline(a.path());
  const auto fb = run_pipeline(b.path());
  const auto fc = run_pipeline(c.path(), "3");
  ASSERT_EQ(fa, fb);
  ASSERT_EQ(fa, fc);
  for (const auto& f : fa) {
    if (f == "spec.json" || f == "traj.json" || f == "families.json") continue;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(c / f)) << f;
  }
  for (const auto& f : fs::directory_iterator(a / "bundle")) {
    EXPECT_EQ(slurp(f.path()), slurp(b / "bundle" / f.path().filename().string())) << f.path();
  }
}

TEST(Cli, ReportSchemasMatchGoldenFiles) {
  test_util::TempDir dir;
  const auto files = run_pipeline(dir.path());
  const fs::path golden = CHANNEL_AXES_GOLDEN_DIR;
  const bool update = std::getenv("CHANNEL_AXES_UPDATE_GOLDEN") != nullptr;
  int checked = 0;
  for (const auto& f : files) {
    const auto ext = fs::path(f).extension();
    if (ext != ".json" && ext != ".csv") continue;
    if (f == "spec.json" || f == "traj.json" || f == "families.json") continue;
    const std::string got = schema_of(slurp(dir / f));
    const fs::path g = golden / (f + ".schema");
    if (update) {
      fs::create_directories(golden);
      spit(g, got);
    }
    ASSERT_TRUE(fs::exists(g)) << g;
    EXPECT_EQ(got, slurp(g)) << f;
    ++checked;
  }
  EXPECT_GE(checked, 12);
}

TEST(Cli, ReportsEmbedManifest) {
  test_util::TempDir dir;
  run_pipeline(dir.path());
  const Json m = Json::parse(slurp(dir / "metrics.json"));
  auto it = m.begin();
  EXPECT_EQ(it.key(), "schema");
  EXPECT_EQ((++it).key(), "manifest");
  for (const char* k : {"command", "config_hash", "bundle_hash", "engine_version", "seeds", "timestamp"}) {
    EXPECT_TRUE(m["manifest"].contains(k)) << k;
  }
  const std::string csv = slurp(dir / "curves.csv");
  EXPECT_EQ(csv.rfind("# manifest {", 0), 0u);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
}

namespace {

std::vector<std::pair<double, double>> polyline_vertices(const std::string& svg) {
  const std::regex re(R"re(<polyline points="([^"]*)")re");
  std::smatch m;
  if (!std::regex_search(svg, m, re)) return {};
  std::vector<std::pair<double, double>> out;
  std::istringstream in(m[1].str());
  std::string pair;
  while (in >> pair) {
    const auto comma = pair.find(',');
    out.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
  }
  return out;
}

}  // namespace

TEST(Plot, ThreePointPruneCurveVertices) {
  test_util::TempDir dir;
  spit(dir / "c.csv",
       "# schema channel-axes/prune_curves/1\n"
       "method,seed,sparsity_nominal,sparsity_achieved,flops_fraction,retention\n"
       "i_x,0,0,0,0,1\n"
       "i_x,0,0.5,0.5,0.4,0.75\n"
       "i_x,0,0.9,0.9,0.85,0.2\n");
  const auto r = cli({"--out-dir", dir.path().string(), "plot", (dir / "c.csv").string(), "--kind", "prune_curves",
                      "--out", "c.svg"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto v = polyline_vertices(slurp(dir / "c.svg"));
  ASSERT_EQ(v.size(), 3u);
  // Frame x in [0, 1], y in [0, 1]; plot area 420 x 340 at (70, 30).
  const double xs[] = {0, 0.4, 0.85}, ys[] = {1, 0.75, 0.2};
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(v[k].first, 70 + xs[k] * 420, 0.005);
    EXPECT_NEAR(v[k].second, 30 + (1 - ys[k]) * 340, 0.005);
  }
}

TEST(Plot, EmptyReportSaysNoData) {
  test_util::TempDir dir;
  spit(dir / "c.csv",
       "# schema channel-axes/prune_curves/1\n"
       "method,seed,sparsity_nominal,sparsity_achieved,flops_fraction,retention\n");
  ASSERT_EQ(cli({"--out-dir", dir.path().string(), "plot", (dir / "c.csv").string(), "--kind", "prune_curves",
                 "--out", "c.svg"})
                .code,
            0);
  const std::string svg = slurp(dir / "c.svg");
  EXPECT_NE(svg.find(">no data</text>"), std::string::npos);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Plot, SchemaMismatchIsRejected) {
  test_util::TempDir dir;
  spit(dir / "t.csv", "# schema channel-axes/trajectory/1\nstep,coupling\n");
  const auto r = cli({"--out-dir", dir.path().string(), "plot", (dir / "t.csv").string(), "--kind", "prune_curves"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("schema mismatch"), std::string::npos);
  EXPECT_EQ(cli({"plot", (dir / "t.csv").string(), "--kind", "pie"}).code, 2);
}

TEST(Plot, DeterministicBytes) {
  channel_axes::cli::Figure f;
  f.title = "t <&>";
  f.series.push_back({"a", {{0.1, 0.2}, {0.3, 0.9}}, true});
  f.series.push_back({"b", {{0.5, 0.5}}, false});
  EXPECT_EQ(render_svg(f), render_svg(f));
  EXPECT_NE(render_svg(f).find("t &lt;&amp;&gt;"), std::string::npos);
}
