#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "naturalmos/audio.hpp"
#include "naturalmos/errors.hpp"
#include "naturalmos/manifest.hpp"
#include "naturalmos/rng.hpp"

namespace naturalmos {

enum class DegradationKind {
  white_noise,
  amplitude_clip,
  time_clip,
  packet_loss,
  band_filter,
  chain,
};

inline std::string kind_name(DegradationKind k) {
  switch (k) {
    case DegradationKind::white_noise: return "white_noise";
    case DegradationKind::amplitude_clip: return "amplitude_clip";
    case DegradationKind::time_clip: return "time_clip";
    case DegradationKind::packet_loss: return "packet_loss";
    case DegradationKind::band_filter: return "band_filter";
    case DegradationKind::chain: return "chain";
  }
  return "unknown";
}

/// One degradation to apply. `params` is kind-specific:
///   white_noise    {snr_db}
///   amplitude_clip {threshold}
///   time_clip      {fraction}
///   packet_loss    {loss_rate}
///   band_filter    {low_hz, high_hz}
///   chain          (no params; see `elements`)
/// Severity lies in [0, 1] and increases with distortion strength; a chain's
/// severity is 1 - prod(1 - severity_i).
struct DegradationSpec {
  DegradationKind kind = DegradationKind::white_noise;
  std::vector<double> params;
  double severity = 0.0;
  std::vector<DegradationSpec> elements;  // chain members
};

/// Severity maps, one per kind. Each is monotone in its distortion parameter.
inline double white_noise_severity(double snr_db) {
  return std::clamp((40.0 - snr_db) / 40.0, 0.0, 1.0);
}
inline double amplitude_clip_severity(double threshold) { return 1.0 - threshold; }
inline double time_clip_severity(double fraction) { return fraction; }
inline double packet_loss_severity(double loss_rate) { return loss_rate; }
inline double band_filter_severity(double low_hz, double high_hz, double sample_rate) {
  return 1.0 - (high_hz - low_hz) / (sample_rate / 2.0);
}
inline double chain_severity(const std::vector<double>& severities) {
  double keep = 1.0;
  for (double s : severities) keep *= 1.0 - s;
  return std::clamp(1.0 - keep, 0.0, 1.0);
}

/// Proxy quality label standing in for an instrumental score: an affine,
/// strictly decreasing map from severity onto [1.0, 4.8].
inline double severity_to_proxy_mos(double severity) {
  if (severity < 0.0 || severity > 1.0)
    throw std::invalid_argument("severity_to_proxy_mos: severity " + std::to_string(severity) +
                                " outside [0, 1]");
  return 4.8 - 3.8 * severity;
}

/// Additive Gaussian noise at the given SNR; output clamped to [-1, 1].
inline AudioSignal add_white_noise(const AudioSignal& sig, double snr_db,
                                   const RngStream& rng) {
  double power = 0.0;
  for (float s : sig.samples) power += static_cast<double>(s) * s;
  power /= std::max<std::size_t>(sig.samples.size(), 1);
  if (power <= 0.0) throw DataError("add_white_noise: silent input has no defined SNR");

  const double sigma = std::sqrt(power * std::pow(10.0, -snr_db / 10.0));
  AudioSignal out = sig;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double v = static_cast<double>(out.samples[i]) + sigma * rng.normal(i);
    out.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

/// Hard limiting to [-threshold, threshold].
inline AudioSignal amplitude_clip(const AudioSignal& sig, double threshold) {
  if (threshold <= 0.0)
    throw std::invalid_argument("amplitude_clip: threshold must be positive");
  AudioSignal out = sig;
  const float t = static_cast<float>(threshold);
  for (auto& s : out.samples) s = std::clamp(s, -t, t);
  return out;
}

/// Zeroes randomly chosen 20 ms windows totaling `fraction` of the duration.
inline AudioSignal time_clip(const AudioSignal& sig, double fraction, const RngStream& rng) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("time_clip: fraction must lie in [0, 1)");
  AudioSignal out = sig;
  if (fraction == 0.0 || sig.samples.empty()) return out;

  const std::size_t win = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.020 * sig.sample_rate)));
  const std::size_t n_windows = (sig.samples.size() + win - 1) / win;
  const std::size_t k =
      static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n_windows)));

  std::vector<std::size_t> order(n_windows);
  for (std::size_t i = 0; i < n_windows; ++i) order[i] = i;
  // Seeded Fisher-Yates; the first k entries are the zeroed windows.
  for (std::size_t i = n_windows; i-- > 1;) {
    const std::size_t j = rng.below(i, i + 1);
    std::swap(order[i], order[j]);
  }
  for (std::size_t i = 0; i < std::min(k, n_windows); ++i) {
    const std::size_t start = order[i] * win;
    const std::size_t end = std::min(start + win, out.samples.size());
    std::fill(out.samples.begin() + static_cast<std::ptrdiff_t>(start),
              out.samples.begin() + static_cast<std::ptrdiff_t>(end), 0.0f);
  }
  return out;
}

/// Drops each 20 ms frame independently with probability loss_rate and
/// zero-fills it (zero-insertion concealment surrogate).
inline AudioSignal packet_loss_zero_fill(const AudioSignal& sig, double loss_rate,
                                         const RngStream& rng, double frame_ms = 20.0) {
  if (loss_rate < 0.0 || loss_rate > 1.0)
    throw std::invalid_argument("packet_loss_zero_fill: loss_rate must lie in [0, 1]");
  AudioSignal out = sig;
  if (loss_rate == 0.0 || sig.samples.empty()) return out;

  const std::size_t frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(frame_ms / 1000.0 * sig.sample_rate)));
  const std::size_t n_frames = (sig.samples.size() + frame - 1) / frame;
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (rng.uniform(f) < loss_rate) {
      const std::size_t start = f * frame;
      const std::size_t end = std::min(start + frame, out.samples.size());
      std::fill(out.samples.begin() + static_cast<std::ptrdiff_t>(start),
                out.samples.begin() + static_cast<std::ptrdiff_t>(end), 0.0f);
    }
  }
  return out;
}

/// Linear-phase FIR band-pass: 801-tap windowed sinc (Hann), applied with
/// group-delay compensation so the output stays aligned with the input.
inline AudioSignal band_filter(const AudioSignal& sig, double low_hz, double high_hz) {
  const double nyquist = sig.sample_rate / 2.0;
  if (low_hz < 0.0 || low_hz >= high_hz || high_hz > nyquist)
    throw std::invalid_argument("band_filter: invalid band edges " + std::to_string(low_hz) +
                                " .. " + std::to_string(high_hz) + " Hz at sample rate " +
                                std::to_string(sig.sample_rate));

  constexpr int kTaps = 801;
  constexpr int kHalf = kTaps / 2;  // group delay
  const double fl = low_hz / sig.sample_rate;
  const double fh = high_hz / sig.sample_rate;
  auto sinc = [](double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
  };
  std::vector<double> h(kTaps);
  for (int n = 0; n < kTaps; ++n) {
    const double m = n - kHalf;
    const double hann =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / (kTaps - 1)));
    h[n] = (2.0 * fh * sinc(2.0 * fh * m) - 2.0 * fl * sinc(2.0 * fl * m)) * hann;
  }

  AudioSignal out = sig;
  const std::size_t len = sig.samples.size();
  for (std::size_t i = 0; i < len; ++i) {
    double acc = 0.0;
    // y[i] = sum_n h[n] * x[i + kHalf - n], indices outside the signal are 0.
    const long center = static_cast<long>(i) + kHalf;
    const int n0 = static_cast<int>(std::max<long>(0, center - (static_cast<long>(len) - 1)));
    const int n1 = static_cast<int>(std::min<long>(kTaps - 1, center));
    for (int n = n0; n <= n1; ++n)
      acc += h[n] * static_cast<double>(sig.samples[center - n]);
    out.samples[i] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }
  return out;
}

/// Applies one spec (or a chain) deterministically. Stochastic kinds derive
/// their random stream from (seed, scope); chain elements extend the scope
/// with their position so no two draws collide.
inline AudioSignal apply_degradation(const AudioSignal& sig, const DegradationSpec& spec,
                                     std::uint64_t seed, const std::string& scope) {
  switch (spec.kind) {
    case DegradationKind::white_noise:
      return add_white_noise(sig, spec.params.at(0), RngStream(seed, scope + "/white_noise"));
    case DegradationKind::amplitude_clip:
      return amplitude_clip(sig, spec.params.at(0));
    case DegradationKind::time_clip:
      return time_clip(sig, spec.params.at(0), RngStream(seed, scope + "/time_clip"));
    case DegradationKind::packet_loss:
      return packet_loss_zero_fill(sig, spec.params.at(0),
                                   RngStream(seed, scope + "/packet_loss"));
    case DegradationKind::band_filter:
      return band_filter(sig, spec.params.at(0), spec.params.at(1));
    case DegradationKind::chain: {
      AudioSignal cur = sig;
      for (std::size_t i = 0; i < spec.elements.size(); ++i)
        cur = apply_degradation(cur, spec.elements[i], seed,
                                scope + "/" + std::to_string(i));
      return cur;
    }
  }
  throw std::invalid_argument("apply_degradation: unknown kind");
}

/// Builds a unit (non-chain) spec of the given kind at the given severity.
/// Parameters are the inverse of the severity maps, clamped to their valid
/// domains; the stored severity is recomputed from the actual parameters.
inline DegradationSpec make_unit_spec(DegradationKind kind, double severity,
                                      double sample_rate, double band_low_frac) {
  DegradationSpec spec;
  spec.kind = kind;
  switch (kind) {
    case DegradationKind::white_noise: {
      const double snr = 40.0 * (1.0 - severity);
      spec.params = {snr};
      spec.severity = white_noise_severity(snr);
      break;
    }
    case DegradationKind::amplitude_clip: {
      const double threshold = std::max(1.0 - severity, 0.01);
      spec.params = {threshold};
      spec.severity = amplitude_clip_severity(threshold);
      break;
    }
    case DegradationKind::time_clip: {
      const double fraction = std::min(severity, 0.99);
      spec.params = {fraction};
      spec.severity = time_clip_severity(fraction);
      break;
    }
    case DegradationKind::packet_loss: {
      spec.params = {severity};
      spec.severity = packet_loss_severity(severity);
      break;
    }
    case DegradationKind::band_filter: {
      const double nyquist = sample_rate / 2.0;
      const double width = std::max((1.0 - severity) * nyquist, 200.0);
      const double low = band_low_frac * (nyquist - width);
      spec.params = {low, low + width};
      spec.severity = band_filter_severity(low, low + width, sample_rate);
      break;
    }
    case DegradationKind::chain:
      throw std::invalid_argument("make_unit_spec: chain is not a unit kind");
  }
  return spec;
}

/// Samples one degradation spec: kind uniform over the five unit kinds,
/// severity uniform in [0, 1], and with probability chain_prob a chain of two
/// distinct unit kinds instead. A sampled chain always lists white noise
/// before the other stage: additive noise at an SNR needs a non-silent
/// input, and a stage such as packet loss at high severity can zero the
/// signal entirely.
inline DegradationSpec sample_degradation_spec(const RngStream& rng, double sample_rate,
                                               double chain_prob = 0.25) {
  const bool chained = rng.uniform(0) < chain_prob;
  if (!chained) {
    const auto kind = static_cast<DegradationKind>(rng.below(1, 5));
    return make_unit_spec(kind, rng.uniform(2), sample_rate, rng.uniform(3));
  }
  const std::uint64_t first = rng.below(10, 5);
  std::uint64_t second = rng.below(11, 4);
  if (second >= first) ++second;  // distinct kinds
  DegradationSpec spec;
  spec.kind = DegradationKind::chain;
  spec.elements.push_back(make_unit_spec(static_cast<DegradationKind>(first), rng.uniform(12),
                                         sample_rate, rng.uniform(13)));
  spec.elements.push_back(make_unit_spec(static_cast<DegradationKind>(second), rng.uniform(14),
                                         sample_rate, rng.uniform(15)));
  if (spec.elements[1].kind == DegradationKind::white_noise)
    std::swap(spec.elements[0], spec.elements[1]);
  spec.severity = chain_severity({spec.elements[0].severity, spec.elements[1].severity});
  return spec;
}

/// Synthesizes the pretraining corpus: every clean reference WAV in
/// reference_dir gets `conditions_per_file` sampled degradations. Degraded
/// files and a manifest (proxy MOS labels, system_id = degradation kind,
/// 90/10 train/validation split by name hash) are written to output_dir; the
/// manifest is also returned.
inline DatasetManifest generate_pretrain_corpus(const std::string& reference_dir,
                                                const std::string& output_dir,
                                                int conditions_per_file, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (conditions_per_file <= 0)
    throw std::invalid_argument("generate_pretrain_corpus: conditions_per_file must be positive");

  std::vector<fs::path> refs;
  if (!fs::is_directory(reference_dir))
    throw DataError("generate_pretrain_corpus: '" + reference_dir + "' is not a directory");
  for (const auto& e : fs::directory_iterator(reference_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") refs.push_back(e.path());
  std::sort(refs.begin(), refs.end());
  if (refs.empty())
    throw DataError("generate_pretrain_corpus: no .wav references in '" + reference_dir + "'");

  fs::create_directories(output_dir);
  DatasetManifest manifest;
  manifest.source_path = (fs::path(output_dir) / "pretrain.csv").string();

  for (std::size_t i = 0; i < refs.size(); ++i) {
    const AudioSignal ref = read_wav(refs[i].string());
    for (int k = 0; k < conditions_per_file; ++k) {
      const std::string scope =
          "corpus/" + refs[i].stem().string() + "/" + std::to_string(k);
      RngStream rng(seed, scope);
      const DegradationSpec spec =
          sample_degradation_spec(rng, static_cast<double>(ref.sample_rate));
      const AudioSignal degraded = apply_degradation(ref, spec, seed, scope);

      const std::string name = refs[i].stem().string() + "_c" + std::to_string(k) + ".wav";
      write_wav((fs::path(output_dir) / name).string(), degraded);

      ManifestEntry entry;
      entry.path = name;
      entry.dataset_id = "pretrain";
      entry.system_id = kind_name(spec.kind);
      entry.mos = severity_to_proxy_mos(spec.severity);
      entry.num_votes = 1;
      entry.label_level = LabelLevel::per_stimulus;
      entry.split = detail::splitmix64(detail::fnv1a64(name) ^ seed) % 10 == 0
                        ? Split::validation
                        : Split::train;
      manifest.entries.push_back(std::move(entry));
    }
  }

  write_manifest(manifest.entries, manifest.source_path);
  return manifest;
}

}  // namespace naturalmos
