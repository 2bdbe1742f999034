#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace channel_axes::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kEngineVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);

// Hash over manifest.json and every tensor file of a bundle directory, in
// sorted file-name order.
std::string hash_directory(const std::filesystem::path& dir);

// SOURCE_DATE_EPOCH when set, otherwise the Unix epoch.
std::string report_timestamp();

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string bundle_hash;
  std::string engine_version = kEngineVersion;
  std::vector<std::uint64_t> seeds;
  std::string timestamp;

  Json to_json() const;
};

RunManifest make_manifest(const std::string& command, const Json& config, const std::string& input_hash,
                          std::vector<std::uint64_t> seeds);

// Shortest round-trip decimal; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double value);

class CsvWriter {
 public:
  CsvWriter(const RunManifest& manifest, std::string schema, std::vector<std::string> header);

  CsvWriter& cell(double value);
  CsvWriter& cell(std::int64_t value);
  CsvWriter& cell(int value) { return cell(static_cast<std::int64_t>(value)); }
  CsvWriter& cell(std::uint64_t value);
  CsvWriter& cell(const std::string& value);
  CsvWriter& cell(const char* value) { return cell(std::string(value)); }
  CsvWriter& cell(bool value);
  void end_row();

  const std::string& text() const { return text_; }

 private:
  void separator();

  std::string text_;
  std::size_t columns_ = 0;
  std::size_t current_ = 0;
};

struct CsvTable {
  Json manifest;  // null when absent
  std::string schema;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws ValidationError
};

CsvTable parse_csv(std::string_view text, const std::string& context);

// JSON report with "schema" and "manifest" leading the payload.
Json json_report(const RunManifest& manifest, const std::string& schema);
std::string dump_json(const Json& value);

std::string read_text_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace channel_axes::cli
