#include "spax/png.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "spax/error.hpp"

namespace spax {

namespace {

void wr_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& body) {
  wr_u32_be(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc =
      crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + body.size()));
  wr_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_gray(const std::string& path,
                    const std::vector<std::uint8_t>& pixels, std::size_t width,
                    std::size_t height) {
  if (width == 0 || height == 0 || pixels.size() != width * height)
    throw std::invalid_argument("write_png_gray: bad image dimensions");

  // filter byte 0 in front of every scanline
  std::vector<std::uint8_t> raw((width + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    raw[y * (width + 1)] = 0;
    std::memcpy(raw.data() + y * (width + 1) + 1, pixels.data() + y * width,
                width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("png deflate failed for " + path);
  compressed.resize(bound);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  wr_u32_be(ihdr, static_cast<std::uint32_t>(width));
  wr_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // filter set 0
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write png: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to png: " + path);
}

void write_spectrogram_png(const std::string& path,
                           const ComplexSpectrogram& spec,
                           std::size_t channel) {
  if (channel >= spec.channels)
    throw std::invalid_argument("spectrogram channel out of range");
  const std::size_t width = spec.frames;
  const std::size_t height = spec.bins;
  std::vector<double> db(width * height);
  double peak = -1e300;
  for (std::size_t t = 0; t < width; ++t)
    for (std::size_t f = 0; f < height; ++f) {
      const double mag = std::abs(spec.at(channel, t, f));
      const double v = 20.0 * std::log10(mag + 1e-12);
      db[t * height + f] = v;
      if (v > peak) peak = v;
    }
  constexpr double kRange = 80.0;
  std::vector<std::uint8_t> pixels(width * height);
  for (std::size_t t = 0; t < width; ++t)
    for (std::size_t f = 0; f < height; ++f) {
      const double v = db[t * height + f];
      const double unit = std::min(1.0, std::max(0.0, (v - (peak - kRange)) / kRange));
      // low frequencies at the bottom of the image
      const std::size_t y = height - 1 - f;
      pixels[y * width + t] = static_cast<std::uint8_t>(unit * 255.0 + 0.5);
    }
  write_png_gray(path, pixels, width, height);
}

}  // namespace spax
