#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "naturalmos/errors.hpp"
#include "naturalmos/features.hpp"

using naturalmos::AudioSignal;
using naturalmos::FeatureConfig;
using naturalmos::MelSpectrogram;
using naturalmos::SegmentSequence;

TEST_CASE("framing arithmetic: 1 s at 16 kHz gives 99 frames of 2025 bins", "[features]") {
  const auto sig = testhelpers::tone(440.0, 1.0, 16000);
  std::size_t num_frames = 0;
  const auto power = naturalmos::stft_power(sig, num_frames);
  REQUIRE(num_frames == 99);
  REQUIRE(power.size() == 99 * 2025);
}

TEST_CASE("stft preconditions", "[features]") {
  SECTION("signal shorter than one window") {
    auto sig = testhelpers::tone(440.0, 0.01, 16000);  // 160 samples < win 320
    std::size_t n = 0;
    REQUIRE_THROWS_AS(naturalmos::stft_power(sig, n), naturalmos::DataError);
  }
  SECTION("sample rate pushing the window past the FFT size") {
    AudioSignal sig;
    sig.sample_rate = 250000;  // win 5000 > 4048
    sig.samples.assign(250000, 0.1f);
    std::size_t n = 0;
    REQUIRE_THROWS_AS(naturalmos::stft_power(sig, n), naturalmos::DataError);
  }
}

TEST_CASE("tone energy concentrates at the tone frequency (DFT oracle)", "[features]") {
  const int sr = 16000;
  const std::size_t win = 320, nfft = 4048, bins = 2025;
  const auto sig = testhelpers::tone(1000.0, 1.0, sr, 0.8);

  std::size_t num_frames = 0;
  const auto power = naturalmos::stft_power(sig, num_frames);

  // Brute-force oracle on frame 0: window the same samples by hand.
  std::vector<double> frame(win);
  for (std::size_t i = 0; i < win; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(win));
    frame[i] = static_cast<double>(sig.samples[i]) * w;
  }
  const auto oracle = testhelpers::brute_dft_power(frame, nfft, bins);

  double max_abs = 0.0, peak = 0.0;
  std::size_t peak_bin = 0;
  for (std::size_t k = 0; k < bins; ++k) {
    max_abs = std::max(max_abs, std::abs(power[k] - oracle[k]));
    if (power[k] > peak) {
      peak = power[k];
      peak_bin = k;
    }
  }
  REQUIRE(max_abs / peak < 1e-9);  // FFT path == direct DFT up to rounding

  const std::size_t k0 = 253;  // round(1000 * 4048 / 16000)
  REQUIRE(peak_bin == k0);

  // Concentration. At the window's native resolution (sr / win = 50 Hz per
  // bin) three bins correspond to 3 * nfft / win ~ 38 zero-padded bins; the
  // literal +/-3 zero-padded bins hold only ~36% of the energy because the
  // Hann main lobe itself is ~25 padded bins wide.
  double total = 0.0, near = 0.0, tight = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    total += power[k];
    if (k + 38 >= k0 && k <= k0 + 38) near += power[k];
    if (k + 13 >= k0 && k <= k0 + 13) tight += power[k];
  }
  REQUIRE(near / total >= 0.90);
  REQUIRE(near / total >= 0.999);  // actually ~99.99% at +/-38 bins
  REQUIRE(tight / total >= 0.90);  // +/-13 padded bins already pass 90%
}

TEST_CASE("mel filterbank structure", "[features]") {
  const auto fb = naturalmos::build_mel_filterbank(16000);
  const std::size_t bins = 2025;
  REQUIRE(fb.size() == 48 * bins);

  SECTION("centers strictly increasing, 48 of them") {
    const auto centers = naturalmos::mel_filter_centers_hz();
    REQUIRE(centers.size() == 48);
    for (std::size_t i = 1; i < centers.size(); ++i) REQUIRE(centers[i] > centers[i - 1]);
    REQUIRE(centers.back() < 8000.0);
  }

  SECTION("rows are non-negative with positive sums") {
    for (int m = 0; m < 48; ++m) {
      double sum = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = fb[static_cast<std::size_t>(m) * bins + k];
        REQUIRE(w >= 0.0);
        sum += w;
      }
      REQUIRE(sum > 0.0);
    }
  }

  SECTION("bins above fmax have zero weight everywhere") {
    // At 16 kHz fmax equals Nyquist, so probe a 48 kHz bank where bins
    // beyond 8 kHz exist. k = 759 lands at exactly 9000 Hz.
    const auto fb48 = naturalmos::build_mel_filterbank(48000);
    for (std::size_t k = 759; k < bins; k += 97)
      for (int m = 0; m < 48; ++m) REQUIRE(fb48[static_cast<std::size_t>(m) * bins + k] == 0.0);
  }

  SECTION("bins inside (0, fmax) are covered by at least one filter") {
    const std::size_t k_max = static_cast<std::size_t>(8000.0 * 4048 / 16000);  // 2024
    for (std::size_t k = 1; k < k_max; k += 13) {
      double cover = 0.0;
      for (int m = 0; m < 48; ++m) cover += fb[static_cast<std::size_t>(m) * bins + k];
      INFO("bin " << k << " (" << k * 16000.0 / 4048 << " Hz)");
      REQUIRE(cover > 0.0);
    }
  }

  SECTION("sample rates below 16 kHz are rejected") {
    REQUIRE_THROWS_AS(naturalmos::build_mel_filterbank(8000), naturalmos::DataError);
  }
}

TEST_CASE("mel spectrogram values", "[features]") {
  SECTION("digital silence sits at the floor") {
    AudioSignal sig;
    sig.sample_rate = 16000;
    sig.samples.assign(16000, 0.0f);
    const auto mel = naturalmos::compute_mel_spectrogram(sig);
    REQUIRE(mel.num_frames == 99);
    REQUIRE(mel.n_mels == 48);
    for (std::size_t t = 0; t < mel.num_frames; t += 9)
      for (int b = 0; b < 48; ++b)
        REQUIRE(mel.at(t, b) == Catch::Approx(naturalmos::mel_floor_db()));
  }

  SECTION("halving the waveform shifts every value by -6.02 dB") {
    auto sig = testhelpers::voiced_fixture(0, 0.5, 16000, 0.5);
    auto half = sig;
    for (auto& s : half.samples) s *= 0.5f;
    const auto mel_a = naturalmos::compute_mel_spectrogram(sig);
    const auto mel_b = naturalmos::compute_mel_spectrogram(half);
    const double shift = 10.0 * std::log10(0.25);
    for (std::size_t t = 0; t < mel_a.num_frames; t += 5)
      for (int b = 0; b < 48; b += 5) {
        if (mel_a.at(t, b) <= naturalmos::mel_floor_db() + 10.0) continue;  // near floor
        REQUIRE(mel_b.at(t, b) - mel_a.at(t, b) == Catch::Approx(shift).margin(1e-6));
      }
  }

  SECTION("deterministic on identical input") {
    const auto sig = testhelpers::voiced_fixture(1, 0.3, 16000);
    const auto a = naturalmos::compute_mel_spectrogram(sig);
    const auto b = naturalmos::compute_mel_spectrogram(sig);
    REQUIRE(a.frames == b.frames);
  }

  SECTION("white noise never lowers mean mel log-power") {
    const auto clean = testhelpers::voiced_fixture(2, 0.3, 16000, 0.3);
    auto noisy = clean;
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> d(-0.05, 0.05);
    for (auto& s : noisy.samples) s = static_cast<float>(std::clamp(s + d(gen), -1.0, 1.0));
    const auto mel_c = naturalmos::compute_mel_spectrogram(clean);
    const auto mel_n = naturalmos::compute_mel_spectrogram(noisy);
    double mean_c = 0.0, mean_n = 0.0;
    for (std::size_t i = 0; i < mel_c.frames.size(); ++i) {
      mean_c += mel_c.frames[i];
      mean_n += mel_n.frames[i];
    }
    REQUIRE(mean_n >= mean_c);
  }
}

TEST_CASE("sample-rate adaptivity: peak band agrees at 16 and 48 kHz", "[features]") {
  const auto sig16 = testhelpers::tone(1000.0, 0.5, 16000, 0.7);
  const auto sig48 = testhelpers::tone(1000.0, 0.5, 48000, 0.7);
  const auto mel16 = naturalmos::compute_mel_spectrogram(sig16);
  const auto mel48 = naturalmos::compute_mel_spectrogram(sig48);

  auto peak_band = [](const MelSpectrogram& mel, std::size_t t) {
    int best = 0;
    for (int b = 1; b < mel.n_mels; ++b)
      if (mel.at(t, b) > mel.at(t, best)) best = b;
    return best;
  };
  REQUIRE(peak_band(mel16, 10) == peak_band(mel48, 10));
}

TEST_CASE("segmentation shapes and padding", "[features]") {
  auto make_mel = [](std::size_t t_frames) {
    MelSpectrogram mel;
    mel.n_mels = 48;
    mel.num_frames = t_frames;
    mel.frame_hop_s = 0.010;
    mel.source_sample_rate = 16000;
    mel.frames.resize(t_frames * 48);
    for (std::size_t i = 0; i < mel.frames.size(); ++i)
      mel.frames[i] = -40.0 + static_cast<double>(i % 83);
    return mel;
  };

  SECTION("99 frames give 85 segments") {
    const auto segs = naturalmos::segment_spectrogram(make_mel(99));
    REQUIRE(segs.count == 85);
    REQUIRE(segs.n_mels == 48);
    REQUIRE(segs.segment_frames == 15);
  }

  SECTION("exactly 15 frames give one segment") {
    REQUIRE(naturalmos::segment_spectrogram(make_mel(15)).count == 1);
  }

  SECTION("short input pads the tail columns at the floor") {
    const auto mel = make_mel(10);
    const auto segs = naturalmos::segment_spectrogram(mel);
    REQUIRE(segs.count == 1);
    // columns 10..14 at floor, columns 0..9 from the data
    for (int b = 0; b < 48; b += 11)
      for (int c = 0; c < 15; ++c) {
        const float got = segs.data[static_cast<std::size_t>(b) * 15 + static_cast<std::size_t>(c)];
        if (c < 10)
          REQUIRE(got == Catch::Approx(mel.at(static_cast<std::size_t>(c), b)));
        else
          REQUIRE(got == Catch::Approx(naturalmos::mel_floor_db()));
      }
  }

  SECTION("consecutive segments overlap by 14 columns") {
    const auto segs = naturalmos::segment_spectrogram(make_mel(40));
    REQUIRE(segs.count == 26);
    const std::size_t seg_elems = 48 * 15;
    for (std::size_t i = 0; i + 1 < segs.count; i += 7)
      for (int b = 0; b < 48; b += 7)
        for (int c = 0; c < 14; ++c) {
          const float lhs =
              segs.data[i * seg_elems + static_cast<std::size_t>(b) * 15 +
                        static_cast<std::size_t>(c) + 1];
          const float rhs = segs.data[(i + 1) * seg_elems +
                                      static_cast<std::size_t>(b) * 15 +
                                      static_cast<std::size_t>(c)];
          REQUIRE(lhs == rhs);
        }
  }
}
