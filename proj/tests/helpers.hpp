// Shared test fixtures and independent oracles. Everything here is
// deliberately implemented from first principles (no calls into the code
// paths under test) so the tests cross-check rather than echo the library.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "naturalmos/audio.hpp"
#include "naturalmos/manifest.hpp"

namespace testhelpers {

/// Self-deleting temporary directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / ("nmos_" + tag + "_" + std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: cannot create a unique directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_file_bytes: cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_file_bytes: write failed: " + path);
}

// --------------------------------------------------------------------------
// Raw WAV construction (independent of the library's writer)
// --------------------------------------------------------------------------

inline void push_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void push_u16(std::string& s, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

/// Builds a complete RIFF/WAVE blob from interleaved 16-bit samples.
inline std::string wav_bytes(const std::vector<std::int16_t>& samples, int sample_rate,
                             int channels, int bits = 16, int format_tag = 1) {
  std::string data;
  for (std::int16_t s : samples) push_u16(data, static_cast<std::uint16_t>(s));
  std::string out;
  out += "RIFF";
  push_u32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVEfmt ";
  push_u32(out, 16);
  push_u16(out, static_cast<std::uint16_t>(format_tag));
  push_u16(out, static_cast<std::uint16_t>(channels));
  push_u32(out, static_cast<std::uint32_t>(sample_rate));
  const int bytes_per_frame = channels * bits / 8;
  push_u32(out, static_cast<std::uint32_t>(sample_rate * bytes_per_frame));
  push_u16(out, static_cast<std::uint16_t>(bytes_per_frame));
  push_u16(out, static_cast<std::uint16_t>(bits));
  out += "data";
  push_u32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  return out;
}

// --------------------------------------------------------------------------
// Deterministic audio fixtures
// --------------------------------------------------------------------------

inline naturalmos::AudioSignal tone(double freq_hz, double seconds, int sample_rate,
                                    double amplitude = 0.5) {
  naturalmos::AudioSignal sig;
  sig.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  sig.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    sig.samples[i] = static_cast<float>(
        amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) /
                             sample_rate));
  return sig;
}

/// Two tones plus low-level deterministic noise; distinct per index so a set
/// of fixture files is mutually distinguishable.
inline naturalmos::AudioSignal voiced_fixture(int index, double seconds, int sample_rate,
                                              double amplitude = 0.35) {
  naturalmos::AudioSignal sig;
  sig.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  sig.samples.resize(n);
  const double f1 = 180.0 + 37.0 * index;
  const double f2 = 900.0 + 211.0 * index;
  std::mt19937_64 gen(0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> noise(-0.02, 0.02);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double v = amplitude * (0.6 * std::sin(2.0 * std::numbers::pi * f1 * t) +
                                  0.4 * std::sin(2.0 * std::numbers::pi * f2 * t)) +
                     noise(gen);
    sig.samples[i] = static_cast<float>(v);
  }
  return sig;
}

// --------------------------------------------------------------------------
// Independent numeric oracles
// --------------------------------------------------------------------------

/// O(frame * bins) direct DFT of a real frame: the brute-force oracle for
/// the FFT-based spectrogram path.
inline std::vector<double> brute_dft_power(const std::vector<double>& frame,
                                           std::size_t nfft, std::size_t bins) {
  std::vector<double> power(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < frame.size(); ++n) {
      const double ang =
          -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(n) /
          static_cast<double>(nfft);
      re += frame[n] * std::cos(ang);
      im += frame[n] * std::sin(ang);
    }
    power[k] = re * re + im * im;
  }
  return power;
}

/// Textbook two-pass Pearson correlation.
inline double pearson_direct(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double rmse_direct(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double rms(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc / std::max<std::size_t>(v.size(), 1));
}

// --------------------------------------------------------------------------
// Toy labeled corpus
// --------------------------------------------------------------------------

struct ToyCorpus {
  std::vector<naturalmos::ManifestEntry> entries;
  std::string manifest_path;
};

/// Writes `n` distinguishable WAVs with MOS labels spread over [1, 5] and a
/// manifest placing the first `n_val` files in the validation split.
inline ToyCorpus make_toy_corpus(const TempDir& dir, int n, int n_val, double seconds = 0.25,
                                 int sample_rate = 16000,
                                 const std::string& dataset_id = "toy") {
  ToyCorpus corpus;
  for (int i = 0; i < n; ++i) {
    const std::string name = "toy_" + std::to_string(i) + ".wav";
    naturalmos::write_wav(dir.file(name), voiced_fixture(i, seconds, sample_rate));
    naturalmos::ManifestEntry e;
    e.path = name;
    e.dataset_id = dataset_id;
    e.system_id = "sys" + std::to_string(i % 5);
    e.mos = 1.0 + 4.0 * static_cast<double>(i) / std::max(1, n - 1);
    e.num_votes = 8;
    e.label_level = naturalmos::LabelLevel::per_stimulus;
    e.split = i < n_val ? naturalmos::Split::validation : naturalmos::Split::train;
    corpus.entries.push_back(std::move(e));
  }
  corpus.manifest_path = dir.file(dataset_id + ".csv");
  naturalmos::write_manifest(corpus.entries, corpus.manifest_path);
  return corpus;
}

}  // namespace testhelpers
