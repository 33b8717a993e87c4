#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "naturalmos/model.hpp"

using naturalmos::DropoutKey;
using naturalmos::NisqaTtsModel;
using naturalmos::SegmentSequence;

namespace {

SegmentSequence synthetic_segments(std::size_t count, std::uint64_t seed) {
  SegmentSequence s;
  s.count = count;
  s.n_mels = 48;
  s.segment_frames = 15;
  s.data.resize(count * 48 * 15);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> d(-60.0f, 0.0f);
  for (auto& v : s.data) v = d(gen);
  return s;
}

}  // namespace

TEST_CASE("shape chain matches the layer table", "[model]") {
  NisqaTtsModel model;
  using Row = std::pair<std::string, std::vector<std::size_t>>;

  for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{85}}) {
    const std::vector<Row> expect = {
        {"Input", {n, 1, 48, 15}},
        {"Conv 1", {n, 16, 48, 15}},
        {"Pool", {n, 16, 24, 8}},
        {"Conv 2", {n, 32, 24, 8}},
        {"Pool / Dropout", {n, 32, 12, 4}},
        {"Conv 3", {n, 64, 12, 4}},
        {"Conv 4", {n, 64, 12, 4}},
        {"Pool / Dropout", {n, 64, 6, 2}},
        {"Conv 5 / Dropout", {n, 64, 6, 2}},
        {"Conv 6", {n, 64, 6, 2}},
        {"FC", {n, 20}},
    };
    const auto got = model.shape_chain(n);
    REQUIRE(got == expect);
  }
}

TEST_CASE("parameter inventory", "[model]") {
  NisqaTtsModel model;
  auto& p = model.params();

  REQUIRE(model.flattened_dim() == 64 * 6 * 2);

  const std::size_t channels[6] = {16, 32, 64, 64, 64, 64};
  std::size_t cin = 1;
  for (int i = 0; i < 6; ++i) {
    const std::string c = "cnn.conv" + std::to_string(i + 1);
    const std::string b = "cnn.bn" + std::to_string(i + 1);
    REQUIRE(p.get(c + ".weight").shape() ==
            std::vector<std::size_t>{channels[i], cin, 3, 3});
    REQUIRE(p.get(c + ".bias").numel() == channels[i]);
    REQUIRE(p.get(b + ".gamma").numel() == channels[i]);
    REQUIRE(p.get(b + ".running_var").numel() == channels[i]);
    REQUIRE_FALSE(p.get(b + ".running_mean").requires_grad());
    cin = channels[i];
  }
  REQUIRE(p.get("cnn.fc.weight").shape() == std::vector<std::size_t>{20, 768});
  REQUIRE(p.get("blstm.fwd.w_ih").shape() == std::vector<std::size_t>{512, 20});
  REQUIRE(p.get("blstm.fwd.w_hh").shape() == std::vector<std::size_t>{512, 128});
  REQUIRE(p.get("blstm.bwd.bias").numel() == 512);
  REQUIRE(p.get("head.weight").shape() == std::vector<std::size_t>{1, 256});
  REQUIRE(p.get("head.bias").numel() == 1);

  REQUIRE(p.total_parameters() == 303509);
}

TEST_CASE("initialization is seeded and structured", "[model]") {
  auto a = NisqaTtsModel::initialized(5);
  auto b = NisqaTtsModel::initialized(5);
  auto c = NisqaTtsModel::initialized(6);

  SECTION("same seed reproduces every tensor, different seed does not") {
    bool any_diff = false;
    for (auto& [name, t] : a.params()) {
      REQUIRE(t.values() == b.params().get(name).values());
      if (t.values() != c.params().get(name).values()) any_diff = true;
    }
    REQUIRE(any_diff);
  }

  SECTION("forget gate bias is one, other gates zero") {
    const auto& bias = a.params().get("blstm.fwd.bias");
    const std::size_t h = NisqaTtsModel::kLstmHidden;
    for (std::size_t j = 0; j < 4 * h; ++j)
      REQUIRE(bias.data()[j] == (j >= h && j < 2 * h ? 1.0f : 0.0f));
  }

  SECTION("conv biases zero, batch norm at identity") {
    for (int i = 1; i <= 6; ++i) {
      const auto& cb = a.params().get("cnn.conv" + std::to_string(i) + ".bias");
      for (std::size_t j = 0; j < cb.numel(); ++j) REQUIRE(cb.data()[j] == 0.0f);
      const auto& g = a.params().get("cnn.bn" + std::to_string(i) + ".gamma");
      for (std::size_t j = 0; j < g.numel(); ++j) REQUIRE(g.data()[j] == 1.0f);
    }
  }

  SECTION("weights respect the fan-in bound") {
    const auto& w = a.params().get("cnn.conv2.weight");
    const double bound = std::sqrt(6.0 / (16.0 * 9.0));
    for (std::size_t j = 0; j < w.numel(); ++j) {
      REQUIRE(w.data()[j] < bound);
      REQUIRE(w.data()[j] >= -bound);
    }
  }
}

TEST_CASE("batched eval equals per-file eval", "[model]") {
  auto model = NisqaTtsModel::initialized(11);
  const auto s1 = synthetic_segments(2, 1);
  const auto s2 = synthetic_segments(5, 2);
  const auto s3 = synthetic_segments(3, 3);

  std::vector<const SegmentSequence*> batch{&s1, &s2, &s3};
  auto preds = model.forward_batch(batch, /*train=*/false, DropoutKey{});
  REQUIRE(preds.shape() == std::vector<std::size_t>{3});

  REQUIRE(static_cast<double>(preds.data()[0]) == model.predict_segments(s1));
  REQUIRE(static_cast<double>(preds.data()[1]) == model.predict_segments(s2));
  REQUIRE(static_cast<double>(preds.data()[2]) == model.predict_segments(s3));
}

TEST_CASE("eval predictions are deterministic, train mode is keyed", "[model]") {
  auto model = NisqaTtsModel::initialized(21);
  const auto segs = synthetic_segments(4, 9);
  std::vector<const SegmentSequence*> batch{&segs};

  SECTION("eval twice is identical") {
    REQUIRE(model.predict_segments(segs) == model.predict_segments(segs));
  }

  SECTION("train forward is reproducible under the same dropout key") {
    auto a = model.forward_batch(batch, true, DropoutKey{3, 17});
    auto b = model.forward_batch(batch, true, DropoutKey{3, 17});
    REQUIRE(a.values() == b.values());
  }

  SECTION("different dropout salt gives a different forward") {
    auto a = model.forward_batch(batch, true, DropoutKey{3, 17});
    auto b = model.forward_batch(batch, true, DropoutKey{3, 18});
    REQUIRE(a.values() != b.values());
  }
}

TEST_CASE("segment geometry is validated", "[model]") {
  auto model = NisqaTtsModel::initialized(31);

  SegmentSequence wrong;
  wrong.count = 1;
  wrong.n_mels = 40;
  wrong.segment_frames = 15;
  wrong.data.resize(40 * 15, 0.0f);
  REQUIRE_THROWS_AS(model.predict_segments(wrong), std::invalid_argument);

  SegmentSequence empty;
  empty.n_mels = 48;
  empty.segment_frames = 15;
  REQUIRE_THROWS_AS(model.predict_segments(empty), std::invalid_argument);

  std::vector<const SegmentSequence*> none;
  REQUIRE_THROWS_AS(model.forward_batch(none, false, DropoutKey{}), std::invalid_argument);
}

TEST_CASE("predict_file runs the whole front end", "[model]") {
  testhelpers::TempDir dir("model_e2e");
  const auto sig = testhelpers::voiced_fixture(3, 0.25, 16000);
  const auto path = dir.file("probe.wav");
  naturalmos::write_wav(path, sig);

  auto model = NisqaTtsModel::initialized(41);
  const double direct = model.predict_file(path);
  REQUIRE(std::isfinite(direct));

  auto sig_back = naturalmos::read_wav(path);
  auto mel = naturalmos::compute_mel_spectrogram(sig_back);
  auto segs = naturalmos::segment_spectrogram(mel);
  REQUIRE(segs.count == 10);
  REQUIRE(direct == model.predict_segments(segs));
}
