#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "naturalmos/audio.hpp"
#include "naturalmos/errors.hpp"

namespace naturalmos {

enum class LabelLevel { per_stimulus, per_system };
enum class Split { train, validation, test };

inline const char* to_string(LabelLevel l) {
  return l == LabelLevel::per_stimulus ? "per_stimulus" : "per_system";
}
inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    default: return "test";
  }
}

struct ManifestEntry {
  std::string path;
  std::string dataset_id;
  std::string system_id;
  double mos = 0.0;  // in [1, 5]
  std::uint32_t num_votes = 0;
  LabelLevel label_level = LabelLevel::per_stimulus;
  Split split = Split::train;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string source_path;

  /// Entry paths resolve relative to the manifest's parent directory.
  std::string resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.path);
    if (p.is_absolute() || source_path.empty()) return e.path;
    return (std::filesystem::path(source_path).parent_path() / p).string();
  }
};

/// Linear map from a raw rating scale [lo, hi] onto MOS [1, 5].
struct RescaleMap {
  double lo = 1.0;
  double hi = 5.0;

  double apply(double x) const { return 1.0 + 4.0 * (x - lo) / (hi - lo); }
};

inline constexpr const char* kManifestHeader =
    "path,dataset_id,system_id,mos,num_votes,label_level,split";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, std::size_t row, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError("manifest row " + std::to_string(row) + ": bad " + what + " value '" + s + "'");
  return v;
}

/// Shortest decimal form that parses back to the same double, padded to at
/// least four decimal digits.
inline std::string format_mos(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    s += ".0000";
  } else {
    std::size_t decimals = s.size() - dot - 1;
    for (; decimals < 4; ++decimals) s.push_back('0');
  }
  return s;
}

}  // namespace detail

/// Parse a manifest CSV. When `rescale` is given, raw ratings on [lo, hi] are
/// mapped onto [1, 5] first. Any resulting MOS outside [1, 5] is an error.
inline DatasetManifest load_manifest(const std::string& path,
                                     std::optional<RescaleMap> rescale = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("load_manifest: cannot open " + path);

  DatasetManifest manifest;
  manifest.source_path = path;

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_manifest: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw DataError("load_manifest: bad header in " + path + " (expected '" +
                    std::string(kManifestHeader) + "')");

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 7)
      throw DataError("manifest row " + std::to_string(row) + ": expected 7 fields, got " +
                      std::to_string(fields.size()));

    ManifestEntry e;
    e.path = fields[0];
    e.dataset_id = fields[1];
    e.system_id = fields[2];
    if (e.path.empty())
      throw DataError("manifest row " + std::to_string(row) + ": empty path");

    double raw = detail::parse_double_field(fields[3], row, "mos");
    e.mos = rescale ? rescale->apply(raw) : raw;
    // Guard against float dust at the endpoints of the affine map.
    if (e.mos > 5.0 && e.mos < 5.0 + 1e-9) e.mos = 5.0;
    if (e.mos < 1.0 && e.mos > 1.0 - 1e-9) e.mos = 1.0;
    if (e.mos < 1.0 || e.mos > 5.0)
      throw DataError("manifest row " + std::to_string(row) + ": mos " +
                      std::to_string(e.mos) + " outside [1, 5]" +
                      (rescale ? " after rescaling" : ""));

    double votes = detail::parse_double_field(fields[4], row, "num_votes");
    if (votes < 0 || votes != std::floor(votes))
      throw DataError("manifest row " + std::to_string(row) + ": bad num_votes '" + fields[4] + "'");
    e.num_votes = static_cast<std::uint32_t>(votes);

    if (fields[5] == "per_stimulus") e.label_level = LabelLevel::per_stimulus;
    else if (fields[5] == "per_system") e.label_level = LabelLevel::per_system;
    else throw DataError("manifest row " + std::to_string(row) + ": unknown label_level '" + fields[5] + "'");

    if (fields[6] == "train") e.split = Split::train;
    else if (fields[6] == "validation") e.split = Split::validation;
    else if (fields[6] == "test") e.split = Split::test;
    else throw DataError("manifest row " + std::to_string(row) + ": unknown split '" + fields[6] + "'");

    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

/// Emit a manifest CSV that load_manifest round-trips.
inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("write_manifest: cannot open for writing: " + path);
  out << kManifestHeader << '\n';
  for (const auto& e : entries) {
    out << e.path << ',' << e.dataset_id << ',' << e.system_id << ','
        << detail::format_mos(e.mos) << ',' << e.num_votes << ','
        << to_string(e.label_level) << ',' << to_string(e.split) << '\n';
  }
  if (!out) throw DataError("write_manifest: write failed: " + path);
}

/// Check manifest invariants and that every referenced file decodes.
/// Violations are returned, not thrown; an empty list means the manifest is
/// sound.
inline std::vector<std::string> validate_manifest(const DatasetManifest& manifest) {
  std::vector<std::string> violations;
  std::set<std::string> seen;
  std::map<std::pair<std::string, std::string>, double> system_mos;

  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.path).second)
      violations.push_back("duplicate path: " + e.path);
    if (e.mos < 1.0 || e.mos > 5.0)
      violations.push_back("mos outside [1, 5] for " + e.path);
    if (e.label_level == LabelLevel::per_system) {
      auto key = std::make_pair(e.dataset_id, e.system_id);
      auto [it, inserted] = system_mos.emplace(key, e.mos);
      if (!inserted && it->second != e.mos)
        violations.push_back("inconsistent per_system mos for (" + e.dataset_id + ", " +
                             e.system_id + "): " + detail::format_mos(it->second) + " vs " +
                             detail::format_mos(e.mos));
    }
    try {
      read_wav(manifest.resolve(e));
    } catch (const DataError& err) {
      violations.push_back(std::string("undecodable file: ") + e.path + " (" + err.what() + ")");
    }
  }
  return violations;
}

}  // namespace naturalmos
