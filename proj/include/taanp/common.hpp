#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace taanp {

// Error taxonomy. The CLI maps these onto distinct exit codes.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& m) : std::logic_error(m) {}
};
struct DimensionError : ContractError {
  explicit DimensionError(const std::string& m) : ContractError(m) {}
};
// Raised by metric computations that have no defined value on the input
// (e.g. zero valid entries, zero variance for R2).
struct UndefinedMetric : std::runtime_error {
  explicit UndefinedMetric(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : IoError {
  ParseError(const std::string& m, std::size_t line, std::size_t column)
      : IoError(m + " (line " + std::to_string(line) + ", column " +
                std::to_string(column) + ")"),
        line(line),
        column(column) {}
  std::size_t line;
  std::size_t column;
};
struct IntegrityError : IoError {
  explicit IntegrityError(const std::string& m) : IoError(m) {}
};

inline void check(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

// FNV-1a, used for parameter checksums and config hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

// Shortest round-trip decimal form of a double; keeps emitted files
// deterministic and value-exact on reload.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, bool& ok) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  ok = (res.ec == std::errc{} && res.ptr == s.data() + s.size());
  return v;
}

inline long long parse_int(std::string_view s, bool& ok) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  ok = (res.ec == std::errc{} && res.ptr == s.data() + s.size());
  return v;
}

inline std::string version_string() { return "0.1.0"; }

// Atomic file write: temp then rename.
inline void write_text_file(const std::string& path, const std::string& body) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open file for writing: " + tmp);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw IoError("failed writing: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path);
  std::string body((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return body;
}

}  // namespace taanp
