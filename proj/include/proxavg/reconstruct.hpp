#pragma once

// Whole-image reconstruction: the image is cut into patch-sized blocks
// (edge-replicated at the borders), each block is measured with the same
// operator and reconstructed independently, then the blocks are reassembled.

#include <vector>

#include "proxavg/network.hpp"
#include "proxavg/patches.hpp"
#include "proxavg/sensing.hpp"

namespace proxavg {

struct ImageReconstruction {
  Tensor image;     // [H,W]
  Tensor baseline;  // Phi^T y per block, [H,W]
};

inline ImageReconstruction reconstruct_image(const NetworkModel& model, const SensingOperator& op,
                                             const Tensor& image, std::size_t patch,
                                             unsigned workers = 1) {
  if (image.rank() != 2) throw std::invalid_argument("reconstruct_image: expected [H,W]");
  if (patch * patch != op.n()) {
    throw std::invalid_argument("reconstruct_image: patch size does not match the sensing operator");
  }
  const std::vector<Tensor> tiles = tile_image(image, patch);
  const Evaluation ev = evaluate(model, op, tiles, 0.0, false, workers);
  std::vector<Tensor> base;
  base.reserve(tiles.size());
  for (const Tensor& t : tiles) base.push_back(op.adjoint(op.measure(t)).reshaped(t.shape()));
  const std::size_t h = image.extent(0);
  const std::size_t w = image.extent(1);
  return {untile_image(ev.x_hat, h, w, patch), untile_image(base, h, w, patch)};
}

/// |a - b| elementwise.
inline Tensor abs_difference(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "abs_difference");
  Tensor d = a - b;
  for (double& v : d.data()) v = std::abs(v);
  return d;
}

}  // namespace proxavg
