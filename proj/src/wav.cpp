#include "spax/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "spax/error.hpp"

namespace spax {

namespace {

constexpr std::size_t kMaxChannels = 4;
constexpr std::size_t kMinRate = 8000;
constexpr std::size_t kMaxRate = 48000;

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}

void wr_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void wr_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

float bits_to_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

std::uint32_t float_to_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

}  // namespace

FoaWaveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path);

  std::uint16_t audio_format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + off);
    const std::uint32_t sz = rd_u32(raw.data() + off + 4);
    const std::size_t body = off + 8;
    if (body + sz > raw.size())
      throw FormatError("truncated wav chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw FormatError("bad fmt chunk in " + path);
      audio_format = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      rate = rd_u32(raw.data() + body + 4);
      bits = rd_u16(raw.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = raw.data() + body;
      data_len = sz;
    }
    off = body + sz + (sz & 1);
  }
  if (!data || channels == 0) throw FormatError("wav missing data/fmt: " + path);
  if (channels > kMaxChannels)
    throw FormatError("unsupported channel count " + std::to_string(channels) +
                      " in " + path);
  if (rate < kMinRate || rate > kMaxRate)
    throw FormatError("unsupported sample rate " + std::to_string(rate) +
                      " in " + path);

  const bool is_pcm16 = audio_format == 1 && bits == 16;
  const bool is_f32 = audio_format == 3 && bits == 32;
  if (!is_pcm16 && !is_f32)
    throw FormatError("unsupported wav encoding (want pcm16 or float32): " +
                      path);

  const std::size_t bytes_per = is_pcm16 ? 2 : 4;
  const std::size_t n_samples = data_len / (bytes_per * channels);
  if (n_samples == 0) throw FormatError("wav has no samples: " + path);

  FoaWaveform wave(channels, n_samples, rate);
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * bytes_per;
      double x;
      if (is_pcm16) {
        const std::int16_t s = static_cast<std::int16_t>(rd_u16(p));
        x = static_cast<double>(s) / 32768.0;
      } else {
        x = static_cast<double>(bits_to_float(rd_u32(p)));
      }
      wave.channel(c)[i] = x;
    }
  }
  return wave;
}

void write_wav(const std::string& path, const FoaWaveform& wave,
               WavFormat format) {
  if (wave.channels == 0 || wave.channels > kMaxChannels)
    throw std::invalid_argument("write_wav: channel count must be 1..4");
  if (wave.sample_rate < kMinRate || wave.sample_rate > kMaxRate)
    throw std::invalid_argument("write_wav: sample rate out of range");
  const std::size_t len = wave.length();
  const bool f32 = format == WavFormat::float32;
  const std::size_t bytes_per = f32 ? 4 : 2;
  const std::size_t block = bytes_per * wave.channels;
  const std::size_t data_len = len * block;

  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr_u32(out, static_cast<std::uint32_t>(36 + data_len));
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  wr_u32(out, 16);
  wr_u16(out, f32 ? 3 : 1);
  wr_u16(out, static_cast<std::uint16_t>(wave.channels));
  wr_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  wr_u32(out, static_cast<std::uint32_t>(wave.sample_rate * block));
  wr_u16(out, static_cast<std::uint16_t>(block));
  wr_u16(out, static_cast<std::uint16_t>(bytes_per * 8));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr_u32(out, static_cast<std::uint32_t>(data_len));

  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t c = 0; c < wave.channels; ++c) {
      const double x = wave.channel(c)[i];
      if (f32) {
        wr_u32(out, float_to_bits(static_cast<float>(x)));
      } else {
        const double clamped = std::clamp(x, -1.0, 1.0);
        const long q = std::lrint(clamped * 32767.0);
        wr_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write wav file: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to wav file: " + path);
}

}  // namespace spax
