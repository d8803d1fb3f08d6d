#pragma once

// Image augmentation on channel-major CxHxW float images.

#include <span>
#include <vector>

#include "sosr/regularizer.hpp"
#include "sosr/tensor.hpp"

namespace sosr {

struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  static ImageShape from(const Shape& chw);
  std::size_t size() const { return channels * height * width; }
};

/// Zero-pads by `pad`, takes the crop_size x crop_size window at
/// (offset_y, offset_x) of the padded image, optionally mirrors columns.
std::vector<float> crop_and_flip(std::span<const float> image, ImageShape shape, std::size_t pad,
                                 std::size_t crop_size, std::size_t offset_y, std::size_t offset_x,
                                 bool flip);

/// Random crop with offsets uniform in [0, H + 2 pad - crop_size], then a
/// horizontal flip with probability flip_prob. The RNG draws happen in a
/// fixed order (y offset, x offset, flip) so streams stay reproducible.
std::vector<float> augment_standard(std::span<const float> image, ImageShape shape,
                                    std::size_t pad, std::size_t crop_size, double flip_prob,
                                    Rng& rng);

/// Zeroes a size x size square centered uniformly over the image, clipped to
/// its bounds.
void cutout(std::span<float> image, ImageShape shape, std::size_t size, Rng& rng);

/// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct CutBox {
  std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

/// Box of side ratio sqrt(1 - lambda) centered at (center_y, center_x),
/// clipped to the image.
CutBox cutmix_box(std::size_t height, std::size_t width, double lambda, std::size_t center_y,
                  std::size_t center_x);

struct CutMixBatch {
  Tensor<float> mixed_inputs;
  std::vector<PairTarget> pairs;
};

/// Pastes `box` from image partner[i] into image i. Pair lambda is
/// 1 - box area / image area.
CutMixBatch cutmix_apply(const Tensor<float>& inputs, std::span<const int> labels,
                         std::span<const std::size_t> partner, const CutBox& box);

double sample_beta(double alpha, Rng& rng);

/// Partner by random permutation, lambda ~ Beta(alpha, alpha), uniform box
/// center, lambda recomputed from the clipped box.
CutMixBatch cutmix_mix(const Tensor<float>& inputs, std::span<const int> labels, double alpha,
                       Rng& rng);

}  // namespace sosr
