#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "naturalmos/audio.hpp"
#include "naturalmos/errors.hpp"
#include "naturalmos/fft.hpp"

namespace naturalmos {

/// Front-end parameters. Defaults give the 48x15 segment geometry the network
/// expects; every knob is exposed as a config key.
struct FeatureConfig {
  int fft_size = 4048;
  int n_mels = 48;
  double fmax_hz = 8000.0;
  double window_ms = 20.0;
  double hop_ms = 10.0;
  int segment_frames = 15;

  bool operator==(const FeatureConfig&) const = default;
};

/// Log-power mel frames, T rows by n_mels columns, laid out row-major.
struct MelSpectrogram {
  std::vector<double> frames;
  std::size_t num_frames = 0;
  int n_mels = 0;
  double frame_hop_s = 0.010;
  int source_sample_rate = 0;

  double at(std::size_t t, int band) const { return frames[t * n_mels + band]; }
};

/// CNN input sequence: N segments of shape 1 x n_mels x segment_frames,
/// stored as one contiguous float block.
struct SegmentSequence {
  std::vector<float> data;
  std::size_t count = 0;
  int n_mels = 0;
  int segment_frames = 0;
};

/// Floor applied before log compression: 10*log10(1e-12).
inline double mel_floor_db() {
  static const double floor_db = 10.0 * std::log10(1e-12);
  return floor_db;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Hann-windowed power spectrogram. Window length is round(window_ms * sr),
/// hop round(hop_ms * sr); frames lie fully inside the signal (no centering)
/// and are zero-padded to fft_size, giving fft_size/2 + 1 one-sided |X|^2
/// bins per frame. Output is row-major T x bins.
inline std::vector<double> stft_power(const AudioSignal& signal, std::size_t& num_frames,
                                      const FeatureConfig& cfg = {}) {
  const int sr = signal.sample_rate;
  if (sr <= 0) throw DataError("stft_power: nonpositive sample rate");
  const auto win = static_cast<std::size_t>(std::lround(cfg.window_ms * 1e-3 * sr));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_ms * 1e-3 * sr));
  const auto nfft = static_cast<std::size_t>(cfg.fft_size);
  if (win == 0 || hop == 0) throw DataError("stft_power: window or hop rounds to zero");
  if (win > nfft)
    throw DataError("stft_power: sample rate " + std::to_string(sr) +
                    " needs a window longer than the FFT size " + std::to_string(cfg.fft_size));
  if (signal.samples.size() < win)
    throw DataError("stft_power: signal shorter than one analysis window");

  const std::size_t bins = nfft / 2 + 1;
  num_frames = (signal.samples.size() - win) / hop + 1;

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(win));

  FftPlan plan(nfft);
  std::vector<double> power(num_frames * bins);
  std::vector<std::complex<double>> buf(nfft), spec;
  for (std::size_t t = 0; t < num_frames; ++t) {
    const float* src = signal.samples.data() + t * hop;
    for (std::size_t i = 0; i < win; ++i)
      buf[i] = std::complex<double>(static_cast<double>(src[i]) * window[i], 0.0);
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(win), buf.end(),
              std::complex<double>(0.0, 0.0));
    plan.forward(buf, spec);
    double* dst = power.data() + t * bins;
    for (std::size_t k = 0; k < bins; ++k) dst[k] = std::norm(spec[k]);
  }
  return power;
}

/// Triangular mel filterbank, n_mels rows by (fft_size/2 + 1) columns.
/// Centers sit equally spaced on the mel scale between 0 Hz and fmax_hz;
/// each filter is normalized to unit peak.
inline std::vector<double> build_mel_filterbank(int sample_rate, const FeatureConfig& cfg = {}) {
  if (sample_rate < 2.0 * cfg.fmax_hz)
    throw DataError("build_mel_filterbank: sample rate " + std::to_string(sample_rate) +
                    " cannot represent fmax " + std::to_string(cfg.fmax_hz) + " Hz");
  const std::size_t bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
  const int nm = cfg.n_mels;

  std::vector<double> edges_hz(static_cast<std::size_t>(nm) + 2);
  const double mel_max = hz_to_mel(cfg.fmax_hz);
  for (int j = 0; j < nm + 2; ++j)
    edges_hz[j] = mel_to_hz(mel_max * static_cast<double>(j) / static_cast<double>(nm + 1));

  std::vector<double> fb(static_cast<std::size_t>(nm) * bins, 0.0);
  for (int m = 0; m < nm; ++m) {
    const double lo = edges_hz[m], center = edges_hz[m + 1], hi = edges_hz[m + 2];
    double* row = fb.data() + static_cast<std::size_t>(m) * bins;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > lo && f < center) w = (f - lo) / (center - lo);
      else if (f == center) w = 1.0;
      else if (f > center && f < hi) w = (hi - f) / (hi - center);
      row[k] = w;
    }
  }
  return fb;
}

/// Center frequencies (Hz) of the filterbank rows.
inline std::vector<double> mel_filter_centers_hz(const FeatureConfig& cfg = {}) {
  std::vector<double> centers(cfg.n_mels);
  const double mel_max = hz_to_mel(cfg.fmax_hz);
  for (int m = 0; m < cfg.n_mels; ++m)
    centers[m] = mel_to_hz(mel_max * static_cast<double>(m + 1) / static_cast<double>(cfg.n_mels + 1));
  return centers;
}

/// Mel spectrogram in absolute dB: 10*log10(max(fb * power, 1e-12)).
/// No per-file normalization, so level information survives.
inline MelSpectrogram compute_mel_spectrogram(const AudioSignal& signal,
                                              const FeatureConfig& cfg = {}) {
  std::size_t num_frames = 0;
  std::vector<double> power = stft_power(signal, num_frames, cfg);
  std::vector<double> fb = build_mel_filterbank(signal.sample_rate, cfg);
  const std::size_t bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
  const int nm = cfg.n_mels;

  MelSpectrogram mel;
  mel.num_frames = num_frames;
  mel.n_mels = nm;
  mel.frame_hop_s = cfg.hop_ms * 1e-3;
  mel.source_sample_rate = signal.sample_rate;
  mel.frames.resize(num_frames * static_cast<std::size_t>(nm));

  for (std::size_t t = 0; t < num_frames; ++t) {
    const double* p = power.data() + t * bins;
    double* out = mel.frames.data() + t * static_cast<std::size_t>(nm);
    for (int m = 0; m < nm; ++m) {
      const double* row = fb.data() + static_cast<std::size_t>(m) * bins;
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) acc += row[k] * p[k];
      out[m] = 10.0 * std::log10(std::max(acc, 1e-12));
    }
  }
  return mel;
}

/// Slice a mel spectrogram into overlapping segments: segment i covers frames
/// [i, i + segment_frames). N = T - segment_frames + 1; spectrograms shorter
/// than one segment are padded on the right at the floor value and yield
/// a single segment.
inline SegmentSequence segment_spectrogram(const MelSpectrogram& mel,
                                           const FeatureConfig& cfg = {}) {
  const int sf = cfg.segment_frames;
  const int nm = mel.n_mels;
  const std::size_t total = mel.num_frames;

  SegmentSequence seq;
  seq.n_mels = nm;
  seq.segment_frames = sf;
  seq.count = total >= static_cast<std::size_t>(sf) ? total - sf + 1 : 1;
  seq.data.resize(seq.count * static_cast<std::size_t>(nm) * sf);

  const auto floor_val = static_cast<float>(mel_floor_db());
  for (std::size_t i = 0; i < seq.count; ++i) {
    float* seg = seq.data.data() + i * static_cast<std::size_t>(nm) * sf;
    for (int b = 0; b < nm; ++b) {
      for (int c = 0; c < sf; ++c) {
        const std::size_t t = i + static_cast<std::size_t>(c);
        seg[b * sf + c] = t < total ? static_cast<float>(mel.at(t, b)) : floor_val;
      }
    }
  }
  return seq;
}

/// Debug dump: one CSV row per frame, n_mels dB values each.
inline void dump_mel_csv(const MelSpectrogram& mel, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("dump_mel_csv: cannot open " + path);
  out.precision(10);
  for (std::size_t t = 0; t < mel.num_frames; ++t) {
    for (int b = 0; b < mel.n_mels; ++b) {
      if (b) out << ',';
      out << mel.at(t, b);
    }
    out << '\n';
  }
}

}  // namespace naturalmos
