#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "taanp/common.hpp"

namespace taanp {

// nlohmann::json keeps object keys sorted, so serialized records are
// deterministic for a given value set.
using Json = nlohmann::json;

constexpr int kReportFormatVersion = 1;

// Line-delimited records with a versioned header line. Buffered and written
// atomically so partial reports never appear on disk.
class ReportWriter {
 public:
  ReportWriter(std::string path, std::string kind)
      : path_(std::move(path)) {
    Json header;
    header["record"] = "header";
    header["format"] = "taanp.report";
    header["version"] = kReportFormatVersion;
    header["kind"] = kind;
    lines_.push_back(header.dump());
  }

  void add(const Json& rec) { lines_.push_back(rec.dump()); }

  const std::string& path() const { return path_; }
  std::size_t size() const { return lines_.size() - 1; }

  void close() {
    std::string body;
    for (const auto& l : lines_) {
      body += l;
      body += "\n";
    }
    write_text_file(path_, body);
  }

 private:
  std::string path_;
  std::vector<std::string> lines_;
};

inline std::vector<Json> read_report(const std::string& path) {
  std::string body = read_text_file(path);
  std::vector<Json> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t nl = body.find('\n', pos);
    if (nl == std::string::npos) nl = body.size();
    std::string line = body.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    out.push_back(Json::parse(line));
  }
  if (out.empty() || out.front().value("record", "") != "header")
    throw IoError("not a report file: " + path);
  return out;
}

// Reproducibility manifest: enough to re-run the command and regenerate
// every report byte-identically. Written on success and on handled failure.
struct RunManifest {
  std::string command;
  std::string version = version_string();
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string config_path;  // resolved-config snapshot
  std::string status = "ok";
  double wall_ms = 0.0;  // informational; excluded from reproduction compare
  std::vector<std::string> files;

  Json to_json() const {
    Json j;
    j["command"] = command;
    j["version"] = version;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["config_path"] = config_path;
    j["status"] = status;
    j["wall_ms"] = wall_ms;
    j["files"] = files;
    return j;
  }

  static RunManifest from_json(const Json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_path = j.at("config_path").get<std::string>();
    m.status = j.at("status").get<std::string>();
    m.wall_ms = j.at("wall_ms").get<double>();
    m.files = j.at("files").get<std::vector<std::string>>();
    return m;
  }
};

inline void write_manifest(const std::string& dir, const RunManifest& m) {
  write_text_file((std::filesystem::path(dir) / "manifest.json").string(),
                  m.to_json().dump(2) + "\n");
}

inline RunManifest read_manifest(const std::string& path) {
  return RunManifest::from_json(Json::parse(read_text_file(path)));
}

}  // namespace taanp
