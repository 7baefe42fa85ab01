#include "sivo/io_util.h"

#include <charconv>
#include <cmath>
#include <cctype>

namespace sivo {

std::string FormatDouble(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

bool ParseDouble(std::string_view token, double* value) {
  if (token.empty()) return false;
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (*begin == '+') ++begin;
  const auto result = std::from_chars(begin, end, *value);
  return result.ec == std::errc() && result.ptr == end;
}

bool ParseInt(std::string_view token, long long* value) {
  if (token.empty()) return false;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto result = std::from_chars(begin, end, *value);
  return result.ec == std::errc() && result.ptr == end;
}

std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> tokens;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    const size_t start = i;
    while (i < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

std::ifstream OpenForRead(const std::string& path, std::ios::openmode mode) {
  std::ifstream stream(path, mode);
  if (!stream) throw IoError(path, "cannot open for reading");
  return stream;
}

std::ofstream OpenForWrite(const std::string& path, std::ios::openmode mode) {
  std::ofstream stream(path, mode);
  if (!stream) throw IoError(path, "cannot open for writing");
  return stream;
}

std::string FormatFramePattern(const std::string& pattern, int index) {
  // Accepts exactly one conversion of the form %d, %Nd or %0Nd.
  const size_t percent = pattern.find('%');
  if (percent == std::string::npos ||
      pattern.find('%', percent + 1) != std::string::npos) {
    throw std::invalid_argument("bad frame pattern: " + pattern);
  }
  size_t i = percent + 1;
  bool zero_pad = false;
  if (i < pattern.size() && pattern[i] == '0') {
    zero_pad = true;
    ++i;
  }
  int width = 0;
  while (i < pattern.size() && std::isdigit(static_cast<unsigned char>(pattern[i]))) {
    width = width * 10 + (pattern[i] - '0');
    ++i;
  }
  if (i >= pattern.size() || pattern[i] != 'd' || width > 32) {
    throw std::invalid_argument("bad frame pattern: " + pattern);
  }
  std::string digits = std::to_string(index < 0 ? -static_cast<long long>(index)
                                                : static_cast<long long>(index));
  const size_t sign = index < 0 ? 1 : 0;
  std::string number;
  if (digits.size() + sign < static_cast<size_t>(width)) {
    const size_t pad = width - digits.size() - sign;
    if (zero_pad) {
      number = (sign ? "-" : "") + std::string(pad, '0') + digits;
    } else {
      number = std::string(pad, ' ') + (sign ? "-" : "") + digits;
    }
  } else {
    number = (sign ? "-" : "") + digits;
  }
  return pattern.substr(0, percent) + number + pattern.substr(i + 1);
}

}  // namespace sivo
