#include "sivo/image.h"

#include <cctype>
#include <cmath>
#include <fstream>

#include "sivo/io_util.h"

namespace sivo {
namespace {

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
};

int ReadHeaderInt(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError(path, "malformed PGM header");
  long long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > (1 << 30)) throw IoError(path, "PGM header value too large");
    c = in.get();
  }
  // Exactly one whitespace byte separates the header from pixel data.
  if (c == EOF || !std::isspace(c)) throw IoError(path, "malformed PGM header");
  return static_cast<int>(value);
}

PgmHeader ReadHeader(std::istream& in, const std::string& path) {
  char magic[2];
  if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') {
    throw IoError(path, "not a binary PGM (P5) file");
  }
  PgmHeader header;
  header.width = ReadHeaderInt(in, path);
  header.height = ReadHeaderInt(in, path);
  header.maxval = ReadHeaderInt(in, path);
  if (header.width <= 0 || header.height <= 0 || header.maxval <= 0 ||
      header.maxval > 65535) {
    throw IoError(path, "invalid PGM dimensions or maxval");
  }
  return header;
}

std::vector<uint16_t> ReadSamples(std::istream& in, const PgmHeader& header,
                                  const std::string& path) {
  const size_t count = size_t(header.width) * header.height;
  const size_t bytes_per_sample = header.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(count * bytes_per_sample);
  if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size())) {
    throw IoError(path, "truncated PGM pixel data");
  }
  std::vector<uint16_t> samples(count);
  for (size_t i = 0; i < count; ++i) {
    samples[i] = bytes_per_sample == 2
                     ? static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1])
                     : raw[i];
  }
  return samples;
}

}  // namespace

GrayImage ReadPgm(const std::string& path) {
  std::ifstream in = OpenForRead(path, std::ios::in | std::ios::binary);
  const PgmHeader header = ReadHeader(in, path);
  if (header.maxval > 255) throw IoError(path, "expected an 8-bit PGM");
  const std::vector<uint16_t> samples = ReadSamples(in, header, path);
  GrayImage image(header.width, header.height);
  for (size_t i = 0; i < samples.size(); ++i) {
    image.data[i] = static_cast<uint8_t>(samples[i]);
  }
  return image;
}

DepthImage ReadPgm16(const std::string& path) {
  std::ifstream in = OpenForRead(path, std::ios::in | std::ios::binary);
  const PgmHeader header = ReadHeader(in, path);
  DepthImage image(header.width, header.height);
  image.data = ReadSamples(in, header, path);
  return image;
}

void WritePgm(const std::string& path, const GrayImage& image) {
  std::ofstream out = OpenForWrite(path, std::ios::out | std::ios::binary);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            image.data.size());
  if (!out) throw IoError(path, "write failed");
}

void WritePgm16(const std::string& path, const DepthImage& image) {
  std::ofstream out = OpenForWrite(path, std::ios::out | std::ios::binary);
  out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
  std::vector<unsigned char> raw(image.data.size() * 2);
  for (size_t i = 0; i < image.data.size(); ++i) {
    raw[2 * i] = static_cast<unsigned char>(image.data[i] >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(image.data[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!out) throw IoError(path, "write failed");
}

std::optional<double> LookupDepth(const DepthImage& depth,
                                  const Eigen::Vector2d& pixel,
                                  double depth_scale) {
  if (!pixel.allFinite()) return std::nullopt;
  const int x = static_cast<int>(std::lround(pixel.x()));
  const int y = static_cast<int>(std::lround(pixel.y()));
  if (!depth.InBounds(x, y)) return std::nullopt;
  const uint16_t raw = depth.at(x, y);
  if (raw == 0) return std::nullopt;
  return raw / depth_scale;
}

}  // namespace sivo
