#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "naturalmos/errors.hpp"

namespace naturalmos {

/// Decoded mono waveform. Samples are amplitudes in [-1, 1].
struct AudioSignal {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Decode a RIFF/WAVE file holding 16-bit signed PCM, 1 or 2 channels.
/// Samples are scaled by 1/32768; stereo is downmixed by per-sample channel
/// average.
inline AudioSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_wav: cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DataError("read_wav: not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* hdr = p + pos;
    std::uint32_t chunk_size = detail::read_u32le(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (pos + 8 + chunk_size > n || chunk_size < 16)
        throw DataError("read_wav: truncated fmt chunk: " + path);
      format_tag = detail::read_u16le(body);
      channels = detail::read_u16le(body + 2);
      sample_rate = detail::read_u32le(body + 4);
      bits = detail::read_u16le(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (pos + 8 + chunk_size > n)
        throw DataError("read_wav: truncated data chunk: " + path);
      data = body;
      data_size = chunk_size;
      break;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw DataError("read_wav: missing fmt chunk: " + path);
  if (data == nullptr) throw DataError("read_wav: missing data chunk: " + path);
  if (format_tag != 1 || bits != 16)
    throw DataError("read_wav: unsupported format (need 16-bit PCM): " + path);
  if (channels != 1 && channels != 2)
    throw DataError("read_wav: unsupported channel count " + std::to_string(channels) + ": " + path);
  if (sample_rate == 0) throw DataError("read_wav: zero sample rate: " + path);

  const std::size_t bytes_per_frame = 2u * channels;
  if (data_size % bytes_per_frame != 0)
    throw DataError("read_wav: truncated data chunk: " + path);
  const std::size_t frames = data_size / bytes_per_frame;

  AudioSignal sig;
  sig.sample_rate = static_cast<int>(sample_rate);
  sig.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* f = data + i * bytes_per_frame;
    auto s0 = static_cast<std::int16_t>(detail::read_u16le(f));
    if (channels == 1) {
      sig.samples[i] = static_cast<float>(s0) / 32768.0f;
    } else {
      auto s1 = static_cast<std::int16_t>(detail::read_u16le(f + 2));
      sig.samples[i] = (static_cast<float>(s0) / 32768.0f + static_cast<float>(s1) / 32768.0f) * 0.5f;
    }
  }
  return sig;
}

/// Quantize an amplitude to a 16-bit sample word (round-to-nearest, clamped).
inline std::int16_t quantize16(float x) {
  float v = x * 32768.0f;
  long r = std::lround(v);
  if (r < -32768) r = -32768;
  if (r > 32767) r = 32767;
  return static_cast<std::int16_t>(r);
}

/// Write a mono 16-bit PCM WAV file.
inline void write_wav(const std::string& path, const AudioSignal& sig) {
  const std::uint32_t data_size = static_cast<std::uint32_t>(sig.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  detail::put_u32le(out, 36 + data_size);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);                                       // PCM
  detail::put_u16le(out, 1);                                       // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(sig.sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(sig.sample_rate) * 2);  // byte rate
  detail::put_u16le(out, 2);                                       // block align
  detail::put_u16le(out, 16);                                      // bits
  out += "data";
  detail::put_u32le(out, data_size);
  for (float s : sig.samples)
    detail::put_u16le(out, static_cast<std::uint16_t>(quantize16(s)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("write_wav: cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write_wav: write failed: " + path);
}

}  // namespace naturalmos
