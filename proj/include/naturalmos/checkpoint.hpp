#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "naturalmos/errors.hpp"
#include "naturalmos/model.hpp"
#include "naturalmos/rng.hpp"

namespace naturalmos {

/// Checkpoint layout, all integers little-endian:
///   magic "NMOS" | u32 format version | u32 header length | UTF-8 JSON header
///   | per-tensor records | u64 FNV-1a digest of the records.
/// Each record is: u32 name length, name, u32 rank, u64 dims, f32 values.
/// The header carries hyperparameters, seed, and stage metadata; it is
/// readable without touching the payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'N', 'M', 'O', 'S'};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string stage;  // "pretrain", "finetune", or empty
  std::map<std::string, std::string> extra;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw DataError("checkpoint '" + path_ + "': truncated payload");
  }

 private:
  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline nlohmann::json checkpoint_header_json(const NisqaTtsModel& model,
                                             const CheckpointMeta& meta) {
  const auto& cfg = model.feature_config();
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["architecture"] = {
      {"fft_size", cfg.fft_size},       {"n_mels", cfg.n_mels},
      {"fmax_hz", cfg.fmax_hz},         {"window_ms", cfg.window_ms},
      {"hop_ms", cfg.hop_ms},           {"segment_frames", cfg.segment_frames},
      {"cnn_feature_dim", NisqaTtsModel::kCnnFeatureDim},
      {"lstm_hidden", NisqaTtsModel::kLstmHidden},
      {"dropout", NisqaTtsModel::kDropoutP},
  };
  j["seed"] = meta.seed;
  j["stage"] = meta.stage;
  j["metadata"] = meta.extra;
  j["tensor_count"] = model.params().size();
  return j;
}

inline void save_checkpoint(const NisqaTtsModel& model, const CheckpointMeta& meta,
                            const std::string& path) {
  std::string payload;
  for (const auto& [name, t] : model.params()) {
    detail::put_u32(payload, static_cast<std::uint32_t>(name.size()));
    payload.append(name);
    detail::put_u32(payload, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) detail::put_u64(payload, d);
    for (std::size_t i = 0; i < t.numel(); ++i) detail::put_f32(payload, t.data()[i]);
  }
  const std::uint64_t digest = detail::fnv1a64(payload);

  const std::string header = checkpoint_header_json(model, meta).dump();
  std::string blob;
  blob.append(kCheckpointMagic, 4);
  detail::put_u32(blob, kCheckpointVersion);
  detail::put_u32(blob, static_cast<std::uint32_t>(header.size()));
  blob.append(header);
  blob.append(payload);
  detail::put_u64(blob, digest);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint '" + path + "': cannot open for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("checkpoint '" + path + "': write failed");
}

/// Header-only inspection: magic, version, and parsed JSON header. The tensor
/// payload is not decoded.
inline nlohmann::json inspect_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint '" + path + "': cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4))
    throw DataError("checkpoint '" + path + "': bad magic, not a checkpoint file");
  char word[4];
  in.read(word, 4);
  if (!in) throw DataError("checkpoint '" + path + "': truncated header");
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i)
    version |= static_cast<std::uint32_t>(static_cast<unsigned char>(word[i])) << (8 * i);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint '" + path + "': format version " + std::to_string(version) +
                    " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  in.read(word, 4);
  if (!in) throw DataError("checkpoint '" + path + "': truncated header");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= static_cast<std::uint32_t>(static_cast<unsigned char>(word[i])) << (8 * i);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("checkpoint '" + path + "': truncated header");
  nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
  if (j.is_discarded()) throw DataError("checkpoint '" + path + "': header is not valid JSON");
  return j;
}

struct LoadedCheckpoint {
  NisqaTtsModel model;
  CheckpointMeta meta;
  nlohmann::json header;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint '" + path + "': cannot open");
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  detail::ByteReader r(blob, path);
  if (r.bytes(4) != std::string_view(kCheckpointMagic, 4))
    throw DataError("checkpoint '" + path + "': bad magic, not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint '" + path + "': format version " + std::to_string(version) +
                    " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t hlen = r.u32();
  nlohmann::json header = nlohmann::json::parse(r.bytes(hlen), nullptr, false);
  if (header.is_discarded())
    throw DataError("checkpoint '" + path + "': header is not valid JSON");

  if (blob.size() < r.pos() + 8)
    throw DataError("checkpoint '" + path + "': truncated payload");
  const std::size_t payload_end = blob.size() - 8;
  const std::uint64_t stored_digest =
      [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
          v |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[payload_end + i]))
               << (8 * i);
        return v;
      }();
  const std::uint64_t digest =
      detail::fnv1a64(std::string_view(blob).substr(r.pos(), payload_end - r.pos()));
  if (digest != stored_digest)
    throw DataError("checkpoint '" + path + "': payload digest mismatch, file is corrupted");

  FeatureConfig cfg;
  if (header.contains("architecture")) {
    const auto& a = header["architecture"];
    cfg.fft_size = a.value("fft_size", cfg.fft_size);
    cfg.n_mels = a.value("n_mels", cfg.n_mels);
    cfg.fmax_hz = a.value("fmax_hz", cfg.fmax_hz);
    cfg.window_ms = a.value("window_ms", cfg.window_ms);
    cfg.hop_ms = a.value("hop_ms", cfg.hop_ms);
    cfg.segment_frames = a.value("segment_frames", cfg.segment_frames);
  }

  LoadedCheckpoint result{NisqaTtsModel(cfg), CheckpointMeta{}, header};
  result.meta.seed = header.value("seed", std::uint64_t{0});
  result.meta.stage = header.value("stage", std::string{});
  if (header.contains("metadata"))
    result.meta.extra = header["metadata"].get<std::map<std::string, std::string>>();

  std::size_t loaded = 0;
  while (r.pos() < payload_end) {
    const std::uint32_t nlen = r.u32();
    const std::string name = r.bytes(nlen);
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    if (!result.model.params().contains(name))
      throw DataError("checkpoint '" + path + "': unknown tensor '" + name + "'");
    auto& t = result.model.params().get(name);
    if (t.shape() != shape)
      throw DataError("checkpoint '" + path + "': tensor '" + name + "' shape mismatch");
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = r.f32();
    ++loaded;
  }
  if (loaded != result.model.params().size())
    throw DataError("checkpoint '" + path + "': expected " +
                    std::to_string(result.model.params().size()) + " tensors, found " +
                    std::to_string(loaded));
  return result;
}

}  // namespace naturalmos
