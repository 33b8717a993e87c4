#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "naturalmos/audio.hpp"
#include "naturalmos/features.hpp"
#include "naturalmos/lstm.hpp"
#include "naturalmos/ops.hpp"
#include "naturalmos/rng.hpp"
#include "naturalmos/tensor.hpp"

namespace naturalmos {

/// Deterministic addressing for dropout masks: the same (seed, salt) pair
/// always reproduces the same masks, independent of call order.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t salt = 0;
};

/// The CNN-BiLSTM naturalness predictor.
///
/// Layer chain (each conv is 3x3 followed by batch norm and ReLU):
///   input [N,1,48,15]
///   conv1(16)  -> pool                  -> [N,16,24,8]
///   conv2(32)  -> pool -> dropout(20%)  -> [N,32,12,4]
///   conv3(64)                            -> [N,64,12,4]
///   conv4(64)  -> pool -> dropout(20%)  -> [N,64,6,2]
///   conv5(64)  -> dropout(20%)          -> [N,64,6,2]
///   conv6(64)                            -> [N,64,6,2]
///   flatten(768) -> fc                   -> [N,20]
/// then a single bidirectional LSTM layer (128 hidden units per direction)
/// over the segment sequence, many-to-one readout (concat of the last
/// forward state and the step-0 backward state, 256 values), and a linear
/// head to one scalar.
class NisqaTtsModel {
 public:
  static constexpr double kDropoutP = 0.2;
  static constexpr std::size_t kCnnFeatureDim = 20;
  static constexpr std::size_t kLstmHidden = 128;

  explicit NisqaTtsModel(FeatureConfig cfg = {}) : cfg_(cfg) {
    const std::size_t channels[6] = {16, 32, 64, 64, 64, 64};
    std::size_t cin = 1;
    for (int i = 0; i < 6; ++i) {
      const std::string c = "cnn.conv" + std::to_string(i + 1);
      const std::string b = "cnn.bn" + std::to_string(i + 1);
      params_.add(c + ".weight",
                  Tensor<float>({channels[i], cin, 3, 3}, 0.0f, true));
      params_.add(c + ".bias", Tensor<float>({channels[i]}, 0.0f, true));
      params_.add(b + ".gamma", Tensor<float>({channels[i]}, 1.0f, true));
      params_.add(b + ".beta", Tensor<float>({channels[i]}, 0.0f, true));
      params_.add(b + ".running_mean", Tensor<float>({channels[i]}, 0.0f, false));
      params_.add(b + ".running_var", Tensor<float>({channels[i]}, 1.0f, false));
      cin = channels[i];
    }
    params_.add("cnn.fc.weight",
                Tensor<float>({kCnnFeatureDim, flattened_dim()}, 0.0f, true));
    params_.add("cnn.fc.bias", Tensor<float>({kCnnFeatureDim}, 0.0f, true));
    const std::size_t g4 = 4 * kLstmHidden;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string p = std::string("blstm.") + dir;
      params_.add(p + ".w_ih", Tensor<float>({g4, kCnnFeatureDim}, 0.0f, true));
      params_.add(p + ".w_hh", Tensor<float>({g4, kLstmHidden}, 0.0f, true));
      params_.add(p + ".bias", Tensor<float>({g4}, 0.0f, true));
    }
    params_.add("head.weight", Tensor<float>({1, 2 * kLstmHidden}, 0.0f, true));
    params_.add("head.bias", Tensor<float>({1}, 0.0f, true));
  }

  /// Freshly initialized model: Kaiming-uniform fan-in for conv and linear
  /// weights, zero biases, uniform +-1/sqrt(H) for LSTM matrices, and a
  /// forget-gate bias of +1.
  static NisqaTtsModel initialized(std::uint64_t seed, FeatureConfig cfg = {}) {
    NisqaTtsModel m(cfg);
    for (auto& [name, t] : m.params_) {
      const bool is_weight = name.ends_with(".weight");
      const bool is_lstm = name.starts_with("blstm.");
      if (is_lstm) {
        RngStream s(seed, "init/" + name);
        const double bound = 1.0 / std::sqrt(static_cast<double>(kLstmHidden));
        if (name.ends_with(".bias")) {
          for (std::size_t j = kLstmHidden; j < 2 * kLstmHidden; ++j) t.data()[j] = 1.0f;
        } else {
          for (std::size_t j = 0; j < t.numel(); ++j)
            t.data()[j] = static_cast<float>(s.uniform(j, -bound, bound));
        }
      } else if (is_weight) {
        RngStream s(seed, "init/" + name);
        const auto& sh = t.shape();
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < sh.size(); ++d) fan_in *= sh[d];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t j = 0; j < t.numel(); ++j)
          t.data()[j] = static_cast<float>(s.uniform(j, -bound, bound));
      }
      // Biases stay zero; batch-norm gamma/beta and running stats keep their
      // constructor values (1, 0, 0, 1).
    }
    return m;
  }

  const FeatureConfig& feature_config() const { return cfg_; }
  ParameterSet<float>& params() { return params_; }
  const ParameterSet<float>& params() const { return params_; }

  std::size_t flattened_dim() const {
    return 64 * pooled3(cfg_.n_mels) * pooled3(cfg_.segment_frames);
  }

  /// Per-segment CNN features for one file: [N, 20].
  Tensor<float> cnn_forward(const SegmentSequence& segs, bool train, DropoutKey key) {
    check_segments(segs);
    Tensor<float> x = Tensor<float>::from_values({segs.count, 1, mel_h(), seg_w()},
                                                 std::vector<float>(segs.data));
    return cnn_chain(x, train, key);
  }

  /// Many-to-one readout over per-segment features: scalar tensor.
  Tensor<float> sequence_head_forward(const Tensor<float>& features, std::size_t length) {
    auto out = bilstm(features, params_.get("blstm.fwd.w_ih"), params_.get("blstm.fwd.w_hh"),
                      params_.get("blstm.fwd.bias"), params_.get("blstm.bwd.w_ih"),
                      params_.get("blstm.bwd.w_hh"), params_.get("blstm.bwd.bias"), length);
    auto final_state = bilstm_final(out, length);
    return linear(final_state, params_.get("head.weight"), params_.get("head.bias"));
  }

  /// Stacked forward over a batch of files. Sequences are right-padded with
  /// floor-value segments to the longest file; the batch norm layers see the
  /// padded rows, the bilstm sees only each file's true length. Returns the
  /// predictions as a [B] tensor.
  Tensor<float> forward_batch(const std::vector<const SegmentSequence*>& batch, bool train,
                              DropoutKey key) {
    if (batch.empty()) throw std::invalid_argument("forward_batch: empty batch");
    std::size_t max_n = 0;
    for (const auto* s : batch) {
      check_segments(*s);
      max_n = std::max(max_n, s->count);
    }
    const std::size_t seg_numel = mel_h() * seg_w();
    std::vector<float> stacked(batch.size() * max_n * seg_numel, mel_floor_value());
    for (std::size_t i = 0; i < batch.size(); ++i)
      std::copy(batch[i]->data.begin(), batch[i]->data.end(),
                stacked.data() + i * max_n * seg_numel);

    Tensor<float> x = Tensor<float>::from_values(
        {batch.size() * max_n, 1, mel_h(), seg_w()}, std::move(stacked));
    auto features = cnn_chain(x, train, key);  // [B*maxN, 20]

    std::vector<Tensor<float>> preds;
    preds.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto rows = narrow_rows(features, i * max_n, max_n);
      preds.push_back(sequence_head_forward(rows, batch[i]->count));
    }
    return stack_scalars(preds);
  }

  /// Deterministic eval-mode prediction for one segmented file.
  double predict_segments(const SegmentSequence& segs) {
    std::vector<const SegmentSequence*> batch{&segs};
    auto pred = forward_batch(batch, false, DropoutKey{});
    return static_cast<double>(pred.data()[0]);
  }

  /// End-to-end prediction: decode, mel spectrogram, segmentation, forward.
  double predict_file(const std::string& wav_path) {
    AudioSignal sig = read_wav(wav_path);
    MelSpectrogram mel = compute_mel_spectrogram(sig, cfg_);
    SegmentSequence segs = segment_spectrogram(mel, cfg_);
    return predict_segments(segs);
  }

  /// The Table 1 shape chain for a sequence of N segments, exposed for the
  /// shape audit. Labels mirror the table rows.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> shape_chain(
      std::size_t n) const {
    const std::size_t h0 = mel_h(), w0 = seg_w();
    const std::size_t h1 = ceil_half(h0), w1 = ceil_half(w0);
    const std::size_t h2 = ceil_half(h1), w2 = ceil_half(w1);
    const std::size_t h3 = ceil_half(h2), w3 = ceil_half(w2);
    return {
        {"Input", {n, 1, h0, w0}},
        {"Conv 1", {n, 16, h0, w0}},
        {"Pool", {n, 16, h1, w1}},
        {"Conv 2", {n, 32, h1, w1}},
        {"Pool / Dropout", {n, 32, h2, w2}},
        {"Conv 3", {n, 64, h2, w2}},
        {"Conv 4", {n, 64, h2, w2}},
        {"Pool / Dropout", {n, 64, h3, w3}},
        {"Conv 5 / Dropout", {n, 64, h3, w3}},
        {"Conv 6", {n, 64, h3, w3}},
        {"FC", {n, kCnnFeatureDim}},
    };
  }

 private:
  static std::size_t ceil_half(std::size_t v) { return (v + 1) / 2; }
  static std::size_t pooled3(std::size_t v) { return ceil_half(ceil_half(ceil_half(v))); }

  std::size_t mel_h() const { return static_cast<std::size_t>(cfg_.n_mels); }
  std::size_t seg_w() const { return static_cast<std::size_t>(cfg_.segment_frames); }
  float mel_floor_value() const { return static_cast<float>(mel_floor_db()); }

  void check_segments(const SegmentSequence& segs) const {
    if (segs.n_mels != cfg_.n_mels || segs.segment_frames != cfg_.segment_frames)
      throw std::invalid_argument(
          "model: segment geometry mismatch, expected " + std::to_string(cfg_.n_mels) + "x" +
          std::to_string(cfg_.segment_frames) + ", got " + std::to_string(segs.n_mels) + "x" +
          std::to_string(segs.segment_frames));
    if (segs.count == 0) throw std::invalid_argument("model: empty segment sequence");
  }

  Tensor<float> conv_block(const Tensor<float>& x, int idx, bool train) {
    const std::string c = "cnn.conv" + std::to_string(idx);
    const std::string b = "cnn.bn" + std::to_string(idx);
    auto y = conv2d(x, params_.get(c + ".weight"), params_.get(c + ".bias"));
    y = batchnorm2d(y, params_.get(b + ".gamma"), params_.get(b + ".beta"),
                    params_.get(b + ".running_mean"), params_.get(b + ".running_var"), train);
    return relu(y);
  }

  Tensor<float> drop(const Tensor<float>& x, const char* layer, bool train, DropoutKey key) {
    RngStream s(key.seed, std::string("dropout/") + layer + "/" + std::to_string(key.salt));
    return dropout(x, kDropoutP, train, s);
  }

  Tensor<float> cnn_chain(const Tensor<float>& input, bool train, DropoutKey key) {
    auto x = conv_block(input, 1, train);
    x = maxpool2d_ceil(x);
    x = conv_block(x, 2, train);
    x = maxpool2d_ceil(x);
    x = drop(x, "cnn.drop2", train, key);
    x = conv_block(x, 3, train);
    x = conv_block(x, 4, train);
    x = maxpool2d_ceil(x);
    x = drop(x, "cnn.drop4", train, key);
    x = conv_block(x, 5, train);
    x = drop(x, "cnn.drop5", train, key);
    x = conv_block(x, 6, train);
    x = reshape(x, {input.dim(0), flattened_dim()});
    return linear(x, params_.get("cnn.fc.weight"), params_.get("cnn.fc.bias"));
  }

  FeatureConfig cfg_;
  ParameterSet<float> params_;
};

}  // namespace naturalmos
