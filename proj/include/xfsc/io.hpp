#pragma once

// File formats.
//
// Binary matrix (all little-endian):
//   bytes 0..3   magic "XFSC"
//   u32          version (1)
//   u64          rows
//   u64          cols
//   f64[rows*cols] row-major IEEE-754 binary64
//
// CSV matrix: one row per line, comma-separated decimal floats, '#' comment
// lines and blank lines ignored, no header. Parsing is locale-independent.
//
// Labels: one base-10 integer per line, '#' comments and blank lines ignored.
//
// Manifest: JSON {"version": "1", "entries": [...], "label_names": {...}};
// relative paths resolve against the manifest's directory.

#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "xfsc/analysis.hpp"
#include "xfsc/error.hpp"
#include "xfsc/types.hpp"

namespace xfsc::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr std::array<char, 4> kMagic{'X', 'F', 'S', 'C'};
inline constexpr std::uint32_t kBinaryVersion = 1;
inline constexpr std::size_t kBinaryHeaderSize = 4 + 4 + 8 + 8;

enum class MatrixFormat { csv, bin };

namespace detail {

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, "read failed: " + path.string());
  return std::move(buf).str();
}

inline void write_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Calls fn(line_number, content) for each non-blank, non-comment line.
template <typename Fn>
void for_each_data_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    fn(line_no, line);
  }
}

inline double parse_double(std::string_view token, std::size_t line_no) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
    throw Error(ErrorKind::Malformed, fmt::format("line {}: '{}' is not a number", line_no, token), line_no);
  }
  return value;
}

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(const std::string& data, std::size_t offset) {
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    value |= static_cast<T>(static_cast<unsigned char>(data[offset + b])) << (8 * b);
  }
  return value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

inline Matrix parse_matrix_csv(std::string_view text) {
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  detail::for_each_data_line(text, [&](std::size_t line_no, std::string_view line) {
    std::size_t arity = 0;
    while (true) {
      const auto comma = line.find(',');
      data.push_back(detail::parse_double(line.substr(0, comma), line_no));
      ++arity;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = arity;
    } else if (arity != cols) {
      throw Error(ErrorKind::Malformed, fmt::format("line {}: expected {} values, found {}", line_no, cols, arity),
                  line_no);
    }
    ++rows;
  });
  if (rows == 0) throw Error(ErrorKind::Malformed, "no data rows", std::size_t{0});
  return Matrix(rows, cols, std::move(data));
}

inline Matrix read_matrix_csv(const fs::path& path) {
  try {
    return parse_matrix_csv(detail::read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Malformed) throw;
    throw Error(e.kind(), path.string() + ": " + e.what(), e.location());
  }
}

inline std::string format_matrix_csv(const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out.push_back(',');
      out += fmt::format("{:.17g}", row[j]);
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_matrix_csv(const Matrix& m, const fs::path& path) { detail::write_file(path, format_matrix_csv(m)); }

inline std::string encode_matrix_bin(const Matrix& m) {
  std::string out;
  out.reserve(kBinaryHeaderSize + 8 * m.values().size());
  out.append(kMagic.data(), kMagic.size());
  detail::put_le<std::uint32_t>(out, kBinaryVersion);
  detail::put_le<std::uint64_t>(out, m.rows());
  detail::put_le<std::uint64_t>(out, m.cols());
  for (double v : m.values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Matrix decode_matrix_bin(const std::string& data) {
  if (data.size() < kMagic.size()) throw Error(ErrorKind::Malformed, "truncated header", data.size());
  if (std::memcmp(data.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorKind::UnsupportedVersion, "bad magic bytes", std::size_t{0});
  }
  if (data.size() < kBinaryHeaderSize) throw Error(ErrorKind::Malformed, "truncated header", data.size());
  const auto version = detail::get_le<std::uint32_t>(data, 4);
  if (version != kBinaryVersion) {
    throw Error(ErrorKind::UnsupportedVersion, fmt::format("format version {}", version), std::size_t{4});
  }
  const auto rows = detail::get_le<std::uint64_t>(data, 8);
  const auto cols = detail::get_le<std::uint64_t>(data, 16);
  const std::size_t payload = data.size() - kBinaryHeaderSize;
  if (cols != 0 && rows > payload / 8 / cols) {
    throw Error(ErrorKind::DimensionHeaderMismatch,
                fmt::format("header declares {}x{} but payload holds {} bytes", rows, cols, payload), kBinaryHeaderSize);
  }
  if (rows * cols * 8 != payload) {
    throw Error(ErrorKind::DimensionHeaderMismatch,
                fmt::format("header declares {}x{} but payload holds {} bytes", rows, cols, payload), kBinaryHeaderSize);
  }
  std::vector<double> values(rows * cols);
  for (std::size_t k = 0; k < values.size(); ++k) {
    values[k] = std::bit_cast<double>(detail::get_le<std::uint64_t>(data, kBinaryHeaderSize + 8 * k));
  }
  return Matrix(rows, cols, std::move(values));
}

inline Matrix read_matrix_bin(const fs::path& path) {
  try {
    return decode_matrix_bin(detail::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what(), e.location());
  }
}

inline void write_matrix_bin(const Matrix& m, const fs::path& path) { detail::write_file(path, encode_matrix_bin(m)); }

/// `.bin` selects the binary format, anything else CSV.
inline MatrixFormat infer_format(const fs::path& path) {
  return path.extension() == ".bin" ? MatrixFormat::bin : MatrixFormat::csv;
}

inline Matrix read_matrix(const fs::path& path, std::optional<MatrixFormat> format = std::nullopt) {
  return format.value_or(infer_format(path)) == MatrixFormat::bin ? read_matrix_bin(path) : read_matrix_csv(path);
}

inline void write_matrix(const Matrix& m, const fs::path& path, std::optional<MatrixFormat> format = std::nullopt) {
  if (format.value_or(infer_format(path)) == MatrixFormat::bin) {
    write_matrix_bin(m, path);
  } else {
    write_matrix_csv(m, path);
  }
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

inline std::vector<std::int64_t> parse_labels(std::string_view text) {
  std::vector<std::int64_t> out;
  detail::for_each_data_line(text, [&](std::size_t line_no, std::string_view line) {
    std::string_view token = line;
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
      throw Error(ErrorKind::Malformed, fmt::format("line {}: '{}' is not an integer label", line_no, line), line_no);
    }
    out.push_back(value);
  });
  return out;
}

inline std::vector<std::int64_t> read_labels(const fs::path& path) {
  try {
    return parse_labels(detail::read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Malformed) throw;
    throw Error(e.kind(), path.string() + ": " + e.what(), e.location());
  }
}

inline void write_labels(std::span<const int> labels, const fs::path& path) {
  std::string out;
  for (int y : labels) out += fmt::format("{}\n", y);
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string model_id;
  fs::path predictions_path;
  fs::path labels_path;
  std::optional<fs::path> features_path;
  std::optional<double> transfer_metric;
  std::optional<MetricKind> metric_kind;
};

struct Manifest {
  std::string version = "1";
  std::vector<ManifestEntry> entries;
  std::map<int, std::string> label_names;
};

namespace detail {

inline std::string required_string(const json& obj, const char* key, std::size_t entry) {
  if (!obj.contains(key) || !obj[key].is_string() || obj[key].get<std::string>().empty()) {
    throw Error(ErrorKind::Malformed, fmt::format("entry {}: '{}' must be a nonempty string", entry, key), entry);
  }
  return obj[key].get<std::string>();
}

}  // namespace detail

/// Parses manifest JSON; relative paths are resolved against `base_dir`.
inline Manifest parse_manifest(std::string_view text, const fs::path& base_dir = {}) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Malformed, std::string("invalid JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw Error(ErrorKind::Malformed, "manifest must be a JSON object");
  if (!doc.contains("version") || !doc["version"].is_string()) {
    throw Error(ErrorKind::Malformed, "manifest needs a string 'version'");
  }
  Manifest manifest;
  manifest.version = doc["version"].get<std::string>();
  if (manifest.version != "1") throw Error(ErrorKind::UnsupportedVersion, "manifest version " + manifest.version);
  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    throw Error(ErrorKind::Malformed, "manifest needs an 'entries' array");
  }

  const auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  std::set<std::pair<std::string, std::string>> ids;  // (labels path, model id)
  std::size_t idx = 0;
  for (const auto& item : doc["entries"]) {
    if (!item.is_object()) throw Error(ErrorKind::Malformed, fmt::format("entry {} is not an object", idx), idx);
    ManifestEntry entry;
    entry.model_id = detail::required_string(item, "model_id", idx);
    entry.predictions_path = resolve(detail::required_string(item, "predictions_path", idx));
    entry.labels_path = resolve(detail::required_string(item, "labels_path", idx));
    if (item.contains("features_path") && !item["features_path"].is_null()) {
      entry.features_path = resolve(detail::required_string(item, "features_path", idx));
    }
    if (item.contains("transfer_metric") && !item["transfer_metric"].is_null()) {
      if (!item["transfer_metric"].is_number()) {
        throw Error(ErrorKind::Malformed, fmt::format("entry {}: transfer_metric must be a number", idx), idx);
      }
      const double metric = item["transfer_metric"].get<double>();
      if (!(metric >= 0.0 && metric <= 1.0)) {
        throw Error(ErrorKind::Malformed, fmt::format("entry {}: transfer_metric {} outside [0, 1]", idx, metric), idx);
      }
      entry.transfer_metric = metric;
    }
    if (item.contains("metric_kind") && !item["metric_kind"].is_null()) {
      const auto kind = item["metric_kind"].is_string() ? parse_metric_kind(item["metric_kind"].get<std::string>())
                                                        : std::nullopt;
      if (!kind) throw Error(ErrorKind::Malformed, fmt::format("entry {}: unknown metric_kind", idx), idx);
      entry.metric_kind = kind;
    }
    if (!ids.emplace(entry.labels_path.lexically_normal().string(), entry.model_id).second) {
      throw Error(ErrorKind::Malformed,
                  fmt::format("entry {}: duplicate model_id '{}' for the same target", idx, entry.model_id), idx);
    }
    manifest.entries.push_back(std::move(entry));
    ++idx;
  }

  if (doc.contains("label_names") && !doc["label_names"].is_null()) {
    if (!doc["label_names"].is_object()) throw Error(ErrorKind::Malformed, "label_names must be an object");
    for (const auto& [key, value] : doc["label_names"].items()) {
      int index = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), index);
      if (ec != std::errc{} || ptr != key.data() + key.size() || index < 0 || !value.is_string()) {
        throw Error(ErrorKind::Malformed, "label_names maps nonnegative integer keys to strings");
      }
      manifest.label_names[index] = value.get<std::string>();
    }
  }
  return manifest;
}

inline Manifest read_manifest(const fs::path& path) {
  try {
    return parse_manifest(detail::read_file(path), path.parent_path());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what(), e.location());
  }
}

/// Paths are written as given (callers pass them relative to the manifest).
inline json manifest_to_json(const Manifest& manifest) {
  json doc;
  doc["version"] = manifest.version;
  doc["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    json item;
    item["model_id"] = e.model_id;
    item["predictions_path"] = e.predictions_path.generic_string();
    item["labels_path"] = e.labels_path.generic_string();
    if (e.features_path) item["features_path"] = e.features_path->generic_string();
    if (e.transfer_metric) item["transfer_metric"] = *e.transfer_metric;
    if (e.metric_kind) item["metric_kind"] = std::string(to_string(*e.metric_kind));
    doc["entries"].push_back(std::move(item));
  }
  if (!manifest.label_names.empty()) {
    json names = json::object();
    for (const auto& [index, name] : manifest.label_names) names[std::to_string(index)] = name;
    doc["label_names"] = std::move(names);
  }
  return doc;
}

inline void write_manifest(const Manifest& manifest, const fs::path& path) {
  detail::write_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json to_json(const Score& s) {
  return {{"measure", std::string(to_string(s.measure))}, {"value", s.value}, {"n", s.n}, {"m", s.m}, {"c", s.c}};
}

inline json to_json(const CorrelationReport& r) {
  return {{"measure", std::string(to_string(r.measure))},
          {"metric", std::string(to_string(r.metric_kind))},
          {"n", r.n},
          {"r", r.r},
          {"p_value", r.p_value},
          {"fit_slope", r.fit_slope},
          {"fit_intercept", r.fit_intercept}};
}

inline json to_json(const RankingReport& r) {
  json ranking = json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    ranking.push_back({{"rank", i + 1}, {"model_id", e.model_id}, {"score", e.score}, {"tied", e.tied}});
  }
  return {{"measure", std::string(to_string(r.measure))}, {"ranking", std::move(ranking)}};
}

inline json to_json(const LevelReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    json item{{"id", e.id}, {"score", e.score}, {"level", e.level}};
    item["metric"] = e.metric ? json(*e.metric) : json(nullptr);
    entries.push_back(std::move(item));
  }
  json levels = json::array();
  for (std::size_t j = 0; j < r.k; ++j) {
    json item{{"level", j}, {"count", r.level_counts[j]}};
    item["mean_metric"] = r.level_means[j] ? json(*r.level_means[j]) : json(nullptr);
    levels.push_back(std::move(item));
  }
  return {{"measure", std::string(to_string(r.measure))}, {"k", r.k}, {"levels", std::move(levels)},
          {"entries", std::move(entries)}};
}

namespace detail {

inline std::string csv_number(double v) { return fmt::format("{:.17g}", v); }

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline std::string to_csv(const Score& s) {
  return fmt::format("measure,value,n,m,c\n{},{},{},{},{}\n", to_string(s.measure), detail::csv_number(s.value), s.n,
                     s.m, s.c);
}

inline std::string to_csv(const CorrelationReport& r) {
  return fmt::format("measure,metric,n,r,p_value,fit_slope,fit_intercept\n{},{},{},{},{},{},{}\n",
                     to_string(r.measure), to_string(r.metric_kind), r.n, detail::csv_number(r.r),
                     detail::csv_number(r.p_value), detail::csv_number(r.fit_slope),
                     detail::csv_number(r.fit_intercept));
}

inline std::string to_csv(const RankingReport& r) {
  std::string out = "rank,model_id,measure,score,tied\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    out += fmt::format("{},{},{},{},{}\n", i + 1, detail::csv_field(e.model_id), to_string(r.measure),
                       detail::csv_number(e.score), e.tied ? 1 : 0);
  }
  return out;
}

/// Plot-ready: one line per entry with its level and the level's mean metric.
inline std::string to_csv(const LevelReport& r) {
  std::string out = "id,measure,score,level,metric,level_mean_metric\n";
  for (const auto& e : r.entries) {
    const auto& mean = r.level_means[e.level];
    out += fmt::format("{},{},{},{},{},{}\n", detail::csv_field(e.id), to_string(r.measure),
                       detail::csv_number(e.score), e.level, e.metric ? detail::csv_number(*e.metric) : "",
                       mean ? detail::csv_number(*mean) : "");
  }
  return out;
}

template <typename Report>
void write_report_json(const Report& report, const fs::path& path) {
  detail::write_file(path, to_json(report).dump(2) + "\n");
}

template <typename Report>
void write_report_csv(const Report& report, const fs::path& path) {
  detail::write_file(path, to_csv(report));
}

}  // namespace xfsc::io
