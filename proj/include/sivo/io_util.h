#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sivo {

// A file could not be opened, read or written. what() names the path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Shortest decimal text that parses back to exactly `value`.
std::string FormatDouble(double value);

// Strict numeric parsing of a whole token; returns false on trailing garbage.
bool ParseDouble(std::string_view token, double* value);
bool ParseInt(std::string_view token, long long* value);

std::vector<std::string_view> SplitWhitespace(std::string_view line);

std::ifstream OpenForRead(const std::string& path,
                          std::ios::openmode mode = std::ios::in);
std::ofstream OpenForWrite(const std::string& path,
                           std::ios::openmode mode = std::ios::out);

// printf-style expansion of a single integer conversion, e.g.
// "frame_%06d.features" with 12 -> "frame_000012.features".
std::string FormatFramePattern(const std::string& pattern, int index);

}  // namespace sivo
