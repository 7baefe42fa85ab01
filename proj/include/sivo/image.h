#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sivo {

// Row-major raster. Pixel (x, y) is at data[y * width + x].
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), data(size_t(w) * h, fill) {}

  bool empty() const { return data.empty(); }
  T& at(int x, int y) { return data[size_t(y) * width + x]; }
  const T& at(int x, int y) const { return data[size_t(y) * width + x]; }
  bool InBounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
};

using GrayImage = Raster<uint8_t>;
// Depth in sensor units (e.g. millimeters); 0 means no measurement.
using DepthImage = Raster<uint16_t>;

// Binary PGM (P5). ReadPgm requires maxval <= 255, ReadPgm16 accepts either
// depth and widens 8-bit data.
GrayImage ReadPgm(const std::string& path);
DepthImage ReadPgm16(const std::string& path);
void WritePgm(const std::string& path, const GrayImage& image);
void WritePgm16(const std::string& path, const DepthImage& image);

// Nearest-pixel depth lookup in scene units. Returns nullopt outside the image
// or where the stored value is zero.
std::optional<double> LookupDepth(const DepthImage& depth,
                                  const Eigen::Vector2d& pixel,
                                  double depth_scale);

}  // namespace sivo
