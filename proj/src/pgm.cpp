#include "fsg/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fsg/errors.hpp"

namespace fsg {

namespace {

constexpr long kMaxPixels = 1L << 28;

class HeaderParser {
 public:
  HeaderParser(const std::string& bytes, const std::string& what) : b_(bytes), what_(what) {}

  // Skips whitespace and '#' comments, then reads a decimal field.
  long number(const char* field) {
    skip_space();
    long v = 0;
    int digits = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > kMaxPixels) throw DataError(what_ + ": " + field + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw DataError(what_ + ": malformed header, expected " + field);
    return v;
  }

  void expect_magic() {
    if (b_.size() < 2 || b_[0] != 'P' || b_[1] != '5') {
      throw DataError(what_ + ": not a binary PGM (missing P5 magic)");
    }
    pos_ = 2;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw DataError(what_ + ": malformed header, no separator before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      const char c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  const std::string& what_;
  std::size_t pos_ = 0;
};

unsigned char to_byte(float v) {
  const double x = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::clamp(x, 0.0, 255.0));
}

}  // namespace

Tensor<float> decode_pgm(const std::string& bytes, const std::string& what) {
  HeaderParser p(bytes, what);
  p.expect_magic();
  const long w = p.number("width");
  const long h = p.number("height");
  const long maxval = p.number("maxval");
  if (w <= 0 || h <= 0) throw DataError(what + ": zero image dimension");
  if (w * h > kMaxPixels) throw DataError(what + ": image dimensions overflow");
  if (maxval != 255) {
    throw DataError(what + ": maxval " + std::to_string(maxval) + " unsupported, need 255");
  }
  const std::size_t start = p.payload_start();
  const std::size_t need = static_cast<std::size_t>(w * h);
  const std::size_t have = bytes.size() - std::min(start, bytes.size());
  if (have < need) {
    throw DataError(what + ": truncated raster, " + std::to_string(need - have) +
                    " bytes short (have " + std::to_string(have) + " of " +
                    std::to_string(need) + ")");
  }
  Tensor<float> t(Shape{1, 1, static_cast<int>(h), static_cast<int>(w)});
  auto d = t.data();
  for (std::size_t i = 0; i < need; ++i) {
    d[i] = static_cast<float>(static_cast<unsigned char>(bytes[start + i])) / 255.0f;
  }
  return t;
}

Tensor<float> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str(), path);
}

std::string encode_pgm(const Tensor<float>& t) {
  const Shape s = t.shape();
  if (s.n * s.c != 1) throw ShapeError("write_pgm: expected one plane, got " + s.str());
  std::string out = "P5\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  for (float v : t.data()) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

void write_pgm(const Tensor<float>& t, const std::string& path) {
  const std::string bytes = encode_pgm(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(path + ": cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError(path + ": write failed");
}

Tensor<float> quantize8(const Tensor<float>& t) {
  Tensor<float> out(t.shape());
  auto d = out.data();
  const auto s = t.data();
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = static_cast<float>(to_byte(s[i])) / 255.0f;
  return out;
}

}  // namespace fsg
