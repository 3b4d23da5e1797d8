#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "locrel/errors.hpp"

namespace locrel {

struct WavData {
  double sample_rate = 0.0;
  size_t channels = 0;
  std::vector<double> samples;  // mono after downmix, in [-1, 1]
};

namespace wav_detail {

inline uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 | static_cast<uint32_t>(p[2]) << 16 |
         static_cast<uint32_t>(p[3]) << 24;
}
inline uint16_t rd_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | p[1] << 8); }

inline void wr_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
inline void wr_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v));
  b.push_back(static_cast<uint8_t>(v >> 8));
}

}  // namespace wav_detail

/// RIFF/WAVE reader for PCM 16/24/32 and IEEE float32, downmixing to mono.
inline WavData read_wav(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("wav: cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  const long fsz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(fsz));
  const size_t got = std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (got != buf.size() || buf.size() < 44) throw DataError("wav: short or unreadable file " + path);
  if (std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw DataError("wav: not a RIFF/WAVE file: " + path);

  using namespace wav_detail;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const uint32_t chunk_len = rd_u32(&buf[pos + 4]);
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0 && pos + 8 + 16 <= buf.size()) {
      format = rd_u16(&buf[pos + 8]);
      channels = rd_u16(&buf[pos + 10]);
      rate = rd_u32(&buf[pos + 12]);
      bits = rd_u16(&buf[pos + 22]);
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(chunk_len, buf.size() - data_off);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (!channels || !rate || !data_off) throw DataError("wav: missing fmt/data chunks in " + path);
  const bool is_float = format == 3;
  if (format != 1 && !is_float) throw DataError("wav: unsupported format tag in " + path);
  if (is_float && bits != 32) throw DataError("wav: only 32-bit float supported in " + path);
  if (!is_float && bits != 16 && bits != 24 && bits != 32)
    throw DataError("wav: unsupported bit depth in " + path);

  const size_t bytes_per = bits / 8;
  const size_t frames = data_len / (bytes_per * channels);
  WavData out;
  out.sample_rate = rate;
  out.channels = channels;
  out.samples.resize(frames);
  const uint8_t* d = &buf[data_off];
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const uint8_t* s = d + (i * channels + c) * bytes_per;
      double v;
      if (is_float) {
        float fv;
        std::memcpy(&fv, s, 4);
        v = fv;
      } else if (bits == 16) {
        v = static_cast<int16_t>(s[0] | s[1] << 8) / 32768.0;
      } else if (bits == 24) {
        int32_t iv = s[0] | s[1] << 8 | s[2] << 16;
        if (iv & 0x800000) iv |= ~0xffffff;
        v = iv / 8388608.0;
      } else {
        int32_t iv;
        std::memcpy(&iv, s, 4);
        v = iv / 2147483648.0;
      }
      acc += v;
    }
    out.samples[i] = acc / channels;
  }
  return out;
}

inline void write_wav_pcm16(const std::string& path, const std::vector<double>& x, double fs) {
  using namespace wav_detail;
  std::vector<uint8_t> b;
  b.reserve(44 + x.size() * 2);
  const uint32_t data_len = static_cast<uint32_t>(x.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wr_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(b, 16);
  wr_u16(b, 1);  // PCM
  wr_u16(b, 1);  // mono
  wr_u32(b, static_cast<uint32_t>(fs));
  wr_u32(b, static_cast<uint32_t>(fs) * 2);
  wr_u16(b, 2);
  wr_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wr_u32(b, data_len);
  for (double v : x) {
    const double c = std::min(1.0, std::max(-1.0, v));
    wr_u16(b, static_cast<uint16_t>(static_cast<int16_t>(std::lround(c * 32767.0))));
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("wav: cannot open " + path + " for writing");
  const size_t w = std::fwrite(b.data(), 1, b.size(), f);
  std::fclose(f);
  if (w != b.size()) throw DataError("wav: short write to " + path);
}

/// Windowed-sinc resampler. Identity (bit-exact) when the rates match.
inline std::vector<double> resample(const std::vector<double>& x, double fs_in, double fs_out) {
  if (fs_in <= 0 || fs_out <= 0) throw ConfigError("resample: bad rates");
  if (fs_in == fs_out) return x;
  const double ratio = fs_in / fs_out;
  const double fc = std::min(1.0, fs_out / fs_in);  // cutoff relative to input Nyquist
  const long half = static_cast<long>(std::ceil(10.0 / fc));
  const size_t out_len = static_cast<size_t>(std::floor(static_cast<double>(x.size()) / ratio));
  std::vector<double> y(out_len, 0.0);
  for (size_t m = 0; m < out_len; ++m) {
    const double center = static_cast<double>(m) * ratio;
    const long j0 = std::max<long>(0, static_cast<long>(std::ceil(center)) - half);
    const long j1 = std::min<long>(static_cast<long>(x.size()) - 1, static_cast<long>(std::floor(center)) + half);
    double acc = 0.0;
    for (long j = j0; j <= j1; ++j) {
      const double u = (static_cast<double>(j) - center) * fc;
      const double sinc = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      const double wu = (static_cast<double>(j) - center) / static_cast<double>(half);
      const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * wu));
      acc += x[static_cast<size_t>(j)] * sinc * w * fc;
    }
    y[m] = acc;
  }
  return y;
}

}  // namespace locrel
