#include "sivo/frontend.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sivo/io_util.h"

namespace sivo {

void FrameFeatures::Validate(int width, int height) const {
  const size_t n = keypoints.size();
  if (scores.size() != n || static_cast<size_t>(descriptors.cols()) != n) {
    throw std::invalid_argument("features: keypoint/descriptor/score lengths differ");
  }
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& kp = keypoints[i];
    if (!(kp.x() >= 0.0 && kp.y() >= 0.0 && kp.x() < width && kp.y() < height)) {
      throw std::invalid_argument("features: keypoint outside the image");
    }
    if (std::abs(descriptors.col(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("features: descriptor is not unit norm");
    }
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw std::invalid_argument("features: score outside [0, 1]");
    }
  }
}

namespace {

struct Candidate {
  int x;
  int y;
  double response;
};

}  // namespace

FrameFeatures DetectAndDescribe(const GrayImage& image,
                                const DetectorOptions& options,
                                int frame_index) {
  FrameFeatures features;
  features.frame_index = frame_index;
  const int w = image.width;
  const int h = image.height;
  const int br = options.block_radius;
  const int pr = options.patch_radius;
  const int patch_side = 2 * pr + 1;
  features.descriptors.resize(patch_side * patch_side, 0);
  // Sobel needs one pixel, the window another block_radius.
  const int margin = 1 + br;
  if (image.empty() || options.max_points <= 0 || w <= 2 * margin ||
      h <= 2 * margin) {
    return features;
  }

  auto intensity = [&](int x, int y) { return image.at(x, y) / 255.0; };
  Raster<double> gxx(w, h), gxy(w, h), gyy(w, h);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double gx = (intensity(x + 1, y - 1) + 2.0 * intensity(x + 1, y) +
                         intensity(x + 1, y + 1)) -
                        (intensity(x - 1, y - 1) + 2.0 * intensity(x - 1, y) +
                         intensity(x - 1, y + 1));
      const double gy = (intensity(x - 1, y + 1) + 2.0 * intensity(x, y + 1) +
                         intensity(x + 1, y + 1)) -
                        (intensity(x - 1, y - 1) + 2.0 * intensity(x, y - 1) +
                         intensity(x + 1, y - 1));
      gxx.at(x, y) = gx * gx;
      gxy.at(x, y) = gx * gy;
      gyy.at(x, y) = gy * gy;
    }
  }

  Raster<double> response(w, h, 0.0);
  double max_response = 0.0;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      double a = 0.0, b = 0.0, c = 0.0;
      for (int dy = -br; dy <= br; ++dy) {
        for (int dx = -br; dx <= br; ++dx) {
          a += gxx.at(x + dx, y + dy);
          b += gxy.at(x + dx, y + dy);
          c += gyy.at(x + dx, y + dy);
        }
      }
      const double half_trace = 0.5 * (a + c);
      const double half_diff = 0.5 * (a - c);
      const double min_eigen =
          half_trace - std::sqrt(half_diff * half_diff + b * b);
      response.at(x, y) = min_eigen;
      max_response = std::max(max_response, min_eigen);
    }
  }
  if (!(max_response > 1e-12)) return features;

  const double threshold = options.quality_level * max_response;
  std::vector<Candidate> candidates;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double r = response.at(x, y);
      if (!(r > threshold)) continue;
      // Plateaus keep only their first pixel in scan order.
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const double other = response.at(x + dx, y + dy);
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (other > r || (earlier && other == r)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({x, y, r});
    }
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& l, const Candidate& r) {
              if (l.response != r.response) return l.response > r.response;
              if (l.y != r.y) return l.y < r.y;
              return l.x < r.x;
            });

  std::vector<Eigen::VectorXd> descriptors;
  Eigen::VectorXd patch(patch_side * patch_side);
  for (const Candidate& candidate : candidates) {
    if (static_cast<int>(descriptors.size()) >= options.max_points) break;
    int k = 0;
    for (int dy = -pr; dy <= pr; ++dy) {
      for (int dx = -pr; dx <= pr; ++dx) {
        const int px = candidate.x + dx;
        const int py = candidate.y + dy;
        patch[k++] = image.InBounds(px, py) ? intensity(px, py) : 0.0;
      }
    }
    patch.array() -= patch.mean();
    const double norm = patch.norm();
    if (!(norm > 1e-12)) continue;
    descriptors.push_back(patch / norm);
    features.keypoints.emplace_back(candidate.x, candidate.y);
    features.scores.push_back(candidate.response / max_response);
  }
  features.descriptors.resize(patch_side * patch_side,
                              static_cast<Eigen::Index>(descriptors.size()));
  for (size_t i = 0; i < descriptors.size(); ++i) {
    features.descriptors.col(i) = descriptors[i];
  }
  return features;
}

FeatureFileError::FeatureFileError(Kind kind, int line, const std::string& path,
                                   const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
      kind_(kind),
      line_(line) {}

void WriteFeatureFile(const std::string& path, const FrameFeatures& features) {
  std::ofstream out = OpenForWrite(path);
  out << "VOF1 " << features.size() << ' ' << features.dim() << '\n';
  for (int i = 0; i < features.size(); ++i) {
    out << FormatDouble(features.keypoints[i].x()) << ' '
        << FormatDouble(features.keypoints[i].y()) << ' '
        << FormatDouble(features.scores[i]);
    for (int d = 0; d < features.dim(); ++d) {
      out << ' ' << FormatDouble(features.descriptors(d, i));
    }
    out << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

FrameFeatures ReadFeatureFile(const std::string& path, int frame_index) {
  using Kind = FeatureFileError::Kind;
  std::ifstream in = OpenForRead(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw FeatureFileError(Kind::kMalformedHeader, 1, path, "missing header");
  }
  const auto header = SplitWhitespace(line);
  long long count = 0;
  long long dim = 0;
  if (header.size() != 3 || header[0] != "VOF1" ||
      !ParseInt(header[1], &count) || !ParseInt(header[2], &dim) ||
      count < 0 || dim < 0) {
    throw FeatureFileError(Kind::kMalformedHeader, 1, path,
                           "expected `VOF1 <count> <dim>`");
  }

  FrameFeatures features;
  features.frame_index = frame_index;
  features.keypoints.reserve(count);
  features.scores.reserve(count);
  features.descriptors.resize(dim, count);
  const size_t columns = 3 + static_cast<size_t>(dim);
  for (long long row = 1; row <= count; ++row) {
    const int line_number = static_cast<int>(row + 1);
    if (!std::getline(in, line)) {
      throw FeatureFileError(Kind::kLengthMismatch, line_number, path,
                             "header declares " + std::to_string(count) +
                                 " points but row " + std::to_string(row) +
                                 " is missing");
    }
    const auto tokens = SplitWhitespace(line);
    if (tokens.size() != columns) {
      throw FeatureFileError(Kind::kLengthMismatch, line_number, path,
                             "row " + std::to_string(row) + " has " +
                                 std::to_string(tokens.size()) +
                                 " columns, expected " +
                                 std::to_string(columns));
    }
    std::vector<double> values(columns);
    for (size_t c = 0; c < columns; ++c) {
      if (!ParseDouble(tokens[c], &values[c])) {
        throw FeatureFileError(Kind::kMalformedValue, line_number, path,
                               "bad number '" + std::string(tokens[c]) + "'");
      }
      if (!std::isfinite(values[c])) {
        throw FeatureFileError(Kind::kNonFinite, line_number, path,
                               "non-finite value in row " + std::to_string(row));
      }
    }
    features.keypoints.emplace_back(values[0], values[1]);
    features.scores.push_back(values[2]);
    for (long long d = 0; d < dim; ++d) {
      features.descriptors(d, row - 1) = values[3 + d];
    }
  }
  while (std::getline(in, line)) {
    if (!SplitWhitespace(line).empty()) {
      throw FeatureFileError(Kind::kLengthMismatch,
                             static_cast<int>(count + 2), path,
                             "more rows than the header declares");
    }
  }
  return features;
}

}  // namespace sivo
