#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "proxavg/tensor.hpp"

namespace proxavg {

struct PatchSet {
  std::vector<Tensor> patches;      // each [1,size,size]
  std::vector<std::string> skipped;  // one warning per undersized image
};

/// Number of size x size windows at the given stride in an h x w image.
inline std::size_t patch_count(std::size_t h, std::size_t w, std::size_t size, std::size_t stride) {
  if (h < size || w < size) return 0;
  return ((h - size) / stride + 1) * ((w - size) / stride + 1);
}

/// All size x size windows of every [H,W] image at the given stride,
/// shuffled with a seeded generator. Values are clamped to [0,1].
inline PatchSet extract_patches(const std::vector<Tensor>& images, std::size_t size,
                                std::size_t stride, std::uint64_t seed) {
  if (size == 0 || stride == 0) throw std::invalid_argument("extract_patches: size and stride must be positive");
  PatchSet out;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Tensor& img = images[n];
    if (img.rank() != 2) throw std::invalid_argument("extract_patches: images must be [H,W]");
    const std::size_t h = img.extent(0);
    const std::size_t w = img.extent(1);
    if (h < size || w < size) {
      out.skipped.push_back("image " + std::to_string(n) + " (" + std::to_string(h) + "x" +
                            std::to_string(w) + ") is smaller than the " + std::to_string(size) +
                            "x" + std::to_string(size) + " patch; skipped");
      continue;
    }
    for (std::size_t i = 0; i + size <= h; i += stride) {
      for (std::size_t j = 0; j + size <= w; j += stride) {
        Tensor p({1, size, size});
        for (std::size_t a = 0; a < size; ++a) {
          for (std::size_t b = 0; b < size; ++b) {
            p(0, a, b) = std::clamp(img(i + a, j + b), 0.0, 1.0);
          }
        }
        out.patches.push_back(std::move(p));
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(out.patches.begin(), out.patches.end(), rng);
  return out;
}

/// Random piecewise-smooth patches in [0,1]: a smooth ramp background with
/// one to three regions (half-planes or discs) that carry their own offset
/// and gradient.
inline std::vector<Tensor> synthetic_piecewise_smooth(std::size_t count, std::size_t size,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> n_regions(1, 3);
  const double s = static_cast<double>(size);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Tensor p({1, size, size});
    const double base = 0.2 + 0.5 * unit(rng);
    const double gx = (unit(rng) - 0.5) * 0.6 / s;
    const double gy = (unit(rng) - 0.5) * 0.6 / s;
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) p(0, i, j) = base + gx * j + gy * i;
    }
    const int regions = n_regions(rng);
    for (int r = 0; r < regions; ++r) {
      const double offset = (unit(rng) - 0.5) * 0.8;
      const double rx = (unit(rng) - 0.5) * 0.4 / s;
      const double ry = (unit(rng) - 0.5) * 0.4 / s;
      const bool disc = unit(rng) < 0.4;
      const double cx = unit(rng) * s;
      const double cy = unit(rng) * s;
      const double theta = unit(rng) * 2.0 * 3.14159265358979323846;
      const double radius = (0.15 + 0.35 * unit(rng)) * s;
      for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
          const double dx = static_cast<double>(j) - cx;
          const double dy = static_cast<double>(i) - cy;
          const bool inside = disc ? dx * dx + dy * dy <= radius * radius
                                   : std::cos(theta) * dx + std::sin(theta) * dy >= 0.0;
          if (inside) p(0, i, j) += offset + rx * dx + ry * dy;
        }
      }
    }
    for (double& v : p.data()) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(p));
  }
  return out;
}

/// Splits an [H,W] image into non-overlapping [1,size,size] blocks in
/// row-major block order, replicating the last row/column to fill partial
/// blocks.
inline std::vector<Tensor> tile_image(const Tensor& img, std::size_t size) {
  if (img.rank() != 2) throw std::invalid_argument("tile_image: expected [H,W]");
  const std::size_t h = img.extent(0);
  const std::size_t w = img.extent(1);
  const std::size_t bh = (h + size - 1) / size;
  const std::size_t bw = (w + size - 1) / size;
  std::vector<Tensor> tiles;
  tiles.reserve(bh * bw);
  for (std::size_t bi = 0; bi < bh; ++bi) {
    for (std::size_t bj = 0; bj < bw; ++bj) {
      Tensor t({1, size, size});
      for (std::size_t a = 0; a < size; ++a) {
        const std::size_t i = std::min(bi * size + a, h - 1);
        for (std::size_t b = 0; b < size; ++b) {
          const std::size_t j = std::min(bj * size + b, w - 1);
          t(0, a, b) = img(i, j);
        }
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

/// Inverse of tile_image: reassembles blocks and crops to height x width.
inline Tensor untile_image(const std::vector<Tensor>& tiles, std::size_t height,
                           std::size_t width, std::size_t size) {
  const std::size_t bh = (height + size - 1) / size;
  const std::size_t bw = (width + size - 1) / size;
  if (tiles.size() != bh * bw) throw std::invalid_argument("untile_image: tile count mismatch");
  Tensor img({height, width});
  for (std::size_t bi = 0; bi < bh; ++bi) {
    for (std::size_t bj = 0; bj < bw; ++bj) {
      const Tensor& t = tiles[bi * bw + bj];
      for (std::size_t a = 0; a < size && bi * size + a < height; ++a) {
        for (std::size_t b = 0; b < size && bj * size + b < width; ++b) {
          img(bi * size + a, bj * size + b) = t(0, a, b);
        }
      }
    }
  }
  return img;
}

}  // namespace proxavg
