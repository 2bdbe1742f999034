#include "channel_axes_cli/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <system_error>

#include <openssl/evp.h>
#include <unistd.h>

#include "channel_axes/error.hpp"

namespace channel_axes::cli {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string hash_directory(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name == "manifest.json" || entry.path().extension() == ".f32") names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  std::string combined;
  for (const auto& name : names) {
    combined += name;
    combined.push_back('\0');
    combined += sha256_hex(read_text_file(dir / name));
    combined.push_back('\n');
  }
  return sha256_hex(combined);
}

std::string report_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    long long v = 0;
    const auto* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec == std::errc() && ptr == end) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json RunManifest::to_json() const {
  Json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["bundle_hash"] = bundle_hash;
  j["engine_version"] = engine_version;
  j["seeds"] = seeds;
  j["timestamp"] = timestamp;
  return j;
}

RunManifest make_manifest(const std::string& command, const Json& config, const std::string& input_hash,
                          std::vector<std::uint64_t> seeds) {
  RunManifest m;
  m.command = command;
  m.config_hash = sha256_hex(config.dump());
  m.bundle_hash = input_hash;
  m.seeds = std::move(seeds);
  m.timestamp = report_timestamp();
  return m;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(const RunManifest& manifest, std::string schema, std::vector<std::string> header)
    : columns_(header.size()) {
  text_ += "# manifest " + manifest.to_json().dump() + "\n";
  text_ += "# schema " + schema + "\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) text_.push_back(',');
    text_ += header[i];
  }
  text_.push_back('\n');
}

void CsvWriter::separator() {
  if (current_ > 0) text_.push_back(',');
  ++current_;
}

CsvWriter& CsvWriter::cell(double value) {
  separator();
  text_ += format_number(value);
  return *this;
}

CsvWriter& CsvWriter::cell(std::int64_t value) {
  separator();
  text_ += std::to_string(value);
  return *this;
}

CsvWriter& CsvWriter::cell(std::uint64_t value) {
  separator();
  text_ += std::to_string(value);
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& value) {
  separator();
  if (value.find_first_of(",\"\n") == std::string::npos) {
    text_ += value;
  } else {
    text_.push_back('"');
    for (char c : value) {
      if (c == '"') text_.push_back('"');
      text_.push_back(c);
    }
    text_.push_back('"');
  }
  return *this;
}

CsvWriter& CsvWriter::cell(bool value) {
  separator();
  text_ += value ? "1" : "0";
  return *this;
}

void CsvWriter::end_row() {
  if (current_ != columns_) {
    throw std::logic_error("csv row has " + std::to_string(current_) + " cells, header has " +
                           std::to_string(columns_));
  }
  text_.push_back('\n');
  current_ = 0;
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back().push_back(c);
    }
  }
  return cells;
}

}  // namespace

CsvTable parse_csv(std::string_view text, const std::string& context) {
  CsvTable table;
  std::size_t pos = 0;
  bool have_header = false;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.rfind("# manifest ", 0) == 0) {
        table.manifest = Json::parse(line.substr(11), nullptr, false);
      } else if (line.rfind("# schema ", 0) == 0) {
        table.schema = std::string(line.substr(9));
      }
      continue;
    }
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ValidationError(context + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError(context + ": missing header row");
  return table;
}

Json json_report(const RunManifest& manifest, const std::string& schema) {
  Json j;
  j["schema"] = schema;
  j["manifest"] = manifest.to_json();
  return j;
}

std::string dump_json(const Json& value) { return value.dump(2) + "\n"; }

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

}  // namespace channel_axes::cli
