#pragma once

// Binary PGM (P5) with 8-bit samples. Pixels load as [H,W] tensors scaled to
// [0,1]; saving clamps to [0,1] and rounds half up to 0..255.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "proxavg/tensor.hpp"

namespace proxavg {

namespace detail {

inline void skip_pnm_space(std::istream& is) {
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (c != EOF && std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}

inline unsigned read_pnm_uint(std::istream& is, const char* what) {
  skip_pnm_space(is);
  if (!std::isdigit(is.peek())) throw std::runtime_error(std::string("PGM: malformed ") + what);
  unsigned long v = 0;
  while (std::isdigit(is.peek())) {
    v = v * 10 + static_cast<unsigned long>(is.get() - '0');
    if (v > (1ul << 24)) throw std::runtime_error(std::string("PGM: ") + what + " too large");
  }
  return static_cast<unsigned>(v);
}

}  // namespace detail

inline Tensor read_pgm(std::istream& is) {
  char magic[2] = {0, 0};
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') {
    throw std::runtime_error("PGM: expected binary P5 header");
  }
  const unsigned width = detail::read_pnm_uint(is, "width");
  const unsigned height = detail::read_pnm_uint(is, "height");
  const unsigned maxval = detail::read_pnm_uint(is, "maxval");
  if (width == 0 || height == 0) throw std::runtime_error("PGM: zero dimension");
  if (maxval == 0 || maxval > 255) {
    throw std::runtime_error("PGM: only 8-bit samples are supported (maxval " +
                             std::to_string(maxval) + ")");
  }
  if (!std::isspace(is.get())) throw std::runtime_error("PGM: malformed header terminator");
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height);
  if (!is.read(reinterpret_cast<char*>(pixels.data()),
               static_cast<std::streamsize>(pixels.size()))) {
    throw std::runtime_error("PGM: truncated pixel data");
  }
  Tensor img({height, width});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    img[i] = static_cast<double>(pixels[i]) / static_cast<double>(maxval);
  }
  return img;
}

inline void write_pgm(std::ostream& os, const Tensor& img) {
  std::size_t h = 0;
  std::size_t w = 0;
  if (img.rank() == 2) {
    h = img.extent(0);
    w = img.extent(1);
  } else if (img.rank() == 3 && img.extent(0) == 1) {
    h = img.extent(1);
    w = img.extent(2);
  } else {
    throw std::invalid_argument("write_pgm: expected [H,W] or [1,H,W], got " +
                                shape_string(img.shape()));
  }
  os << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> pixels(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img[i], 0.0, 1.0);
    pixels[i] = static_cast<unsigned char>(std::min(255.0, std::floor(v * 255.0 + 0.5)));
  }
  os.write(reinterpret_cast<const char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
  if (!os) throw std::runtime_error("write_pgm: stream failure");
}

inline Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_pgm(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline void save_pgm(const std::filesystem::path& path, const Tensor& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pgm(os, img);
}

}  // namespace proxavg
