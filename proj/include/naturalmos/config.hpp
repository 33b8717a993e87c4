#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "naturalmos/errors.hpp"
#include "naturalmos/features.hpp"
#include "naturalmos/training.hpp"

namespace naturalmos {

inline constexpr std::uint64_t kDefaultSeed = 1234;

/// Effective run configuration: training hyperparameters plus feature
/// front-end geometry. Populated by layering, in increasing precedence:
/// defaults, the NATURALMOS_SEED environment variable (seed only), a flat
/// `key = value` config file, command-line flags.
struct CliConfig {
  TrainConfig train;
  FeatureConfig features;

  /// Canonical echo of every effective key, in fixed order. Embedded in
  /// checkpoint headers and report footers.
  std::string echo() const {
    auto num = [](double v) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%g", v);
      return std::string(buf);
    };
    return "lr=" + num(train.lr) + " pretrain_epochs=" + std::to_string(train.pretrain_epochs) +
           " finetune_max_epochs=" + std::to_string(train.finetune_max_epochs) +
           " early_stop_patience=" + std::to_string(train.early_stop_patience) +
           " batch_size=" + std::to_string(train.batch_size) +
           " runs=" + std::to_string(train.runs) + " seed=" + std::to_string(train.seed) +
           " fft_size=" + std::to_string(features.fft_size) +
           " n_mels=" + std::to_string(features.n_mels) + " fmax_hz=" + num(features.fmax_hz) +
           " window_ms=" + num(features.window_ms) + " hop_ms=" + num(features.hop_ms) +
           " segment_frames=" + std::to_string(features.segment_frames);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw std::invalid_argument("config: key '" + key + "' needs an integer, got '" + value +
                                "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' needs a number, got '" + value +
                                "'");
  }
}

}  // namespace detail

/// Applies one key=value override. Unknown keys are rejected.
inline void apply_config_value(CliConfig& cfg, const std::string& key,
                               const std::string& value) {
  if (key == "lr") cfg.train.lr = detail::parse_real(key, value);
  else if (key == "pretrain_epochs")
    cfg.train.pretrain_epochs = static_cast<int>(detail::parse_int(key, value));
  else if (key == "finetune_max_epochs")
    cfg.train.finetune_max_epochs = static_cast<int>(detail::parse_int(key, value));
  else if (key == "early_stop_patience")
    cfg.train.early_stop_patience = static_cast<int>(detail::parse_int(key, value));
  else if (key == "batch_size")
    cfg.train.batch_size = static_cast<int>(detail::parse_int(key, value));
  else if (key == "runs")
    cfg.train.runs = static_cast<int>(detail::parse_int(key, value));
  else if (key == "seed")
    cfg.train.seed = static_cast<std::uint64_t>(detail::parse_int(key, value));
  else if (key == "fft_size")
    cfg.features.fft_size = static_cast<int>(detail::parse_int(key, value));
  else if (key == "n_mels")
    cfg.features.n_mels = static_cast<int>(detail::parse_int(key, value));
  else if (key == "fmax_hz")
    cfg.features.fmax_hz = detail::parse_real(key, value);
  else if (key == "window_ms")
    cfg.features.window_ms = detail::parse_real(key, value);
  else if (key == "hop_ms")
    cfg.features.hop_ms = detail::parse_real(key, value);
  else if (key == "segment_frames")
    cfg.features.segment_frames = static_cast<int>(detail::parse_int(key, value));
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Parses a flat `key = value` config file. Blank lines and lines starting
/// with '#' are ignored.
inline std::vector<std::pair<std::string, std::string>> load_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config file '" + path + "': cannot open");
  std::vector<std::pair<std::string, std::string>> kvs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError("config file '" + path + "' line " + std::to_string(line_no) +
                      ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty())
      throw DataError("config file '" + path + "' line " + std::to_string(line_no) +
                      ": empty key");
    kvs.emplace_back(key, value);
  }
  return kvs;
}

}  // namespace naturalmos
