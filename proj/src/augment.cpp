#include "sosr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sosr {

ImageShape ImageShape::from(const Shape& chw) {
  if (chw.size() != 3) throw InvalidInput("image shape must be CxHxW, got " + shape_string(chw));
  return {chw[0], chw[1], chw[2]};
}

std::vector<float> crop_and_flip(std::span<const float> image, ImageShape shape, std::size_t pad,
                                 std::size_t crop_size, std::size_t offset_y, std::size_t offset_x,
                                 bool flip) {
  if (image.size() != shape.size()) throw InvalidInput("image buffer does not match its shape");
  const std::size_t ph = shape.height + 2 * pad;
  const std::size_t pw = shape.width + 2 * pad;
  if (crop_size > ph || crop_size > pw) {
    throw InvalidInput("crop size exceeds the padded image");
  }
  if (offset_y + crop_size > ph || offset_x + crop_size > pw) {
    throw InvalidInput("crop window leaves the padded image");
  }
  std::vector<float> out(shape.channels * crop_size * crop_size, 0.0f);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t r = 0; r < crop_size; ++r) {
      const long src_r = static_cast<long>(offset_y + r) - static_cast<long>(pad);
      if (src_r < 0 || src_r >= static_cast<long>(shape.height)) continue;
      for (std::size_t s = 0; s < crop_size; ++s) {
        const std::size_t col = flip ? crop_size - 1 - s : s;
        const long src_c = static_cast<long>(offset_x + col) - static_cast<long>(pad);
        if (src_c < 0 || src_c >= static_cast<long>(shape.width)) continue;
        out[(c * crop_size + r) * crop_size + s] =
            image[(c * shape.height + src_r) * shape.width + src_c];
      }
    }
  }
  return out;
}

std::vector<float> augment_standard(std::span<const float> image, ImageShape shape,
                                    std::size_t pad, std::size_t crop_size, double flip_prob,
                                    Rng& rng) {
  const std::size_t ph = shape.height + 2 * pad;
  const std::size_t pw = shape.width + 2 * pad;
  if (crop_size > ph || crop_size > pw) throw InvalidInput("crop size exceeds the padded image");
  std::uniform_int_distribution<std::size_t> oy(0, ph - crop_size);
  std::uniform_int_distribution<std::size_t> ox(0, pw - crop_size);
  const std::size_t offset_y = oy(rng);
  const std::size_t offset_x = ox(rng);
  const bool flip = std::bernoulli_distribution(std::clamp(flip_prob, 0.0, 1.0))(rng);
  return crop_and_flip(image, shape, pad, crop_size, offset_y, offset_x, flip);
}

void cutout(std::span<float> image, ImageShape shape, std::size_t size, Rng& rng) {
  if (image.size() != shape.size()) throw InvalidInput("image buffer does not match its shape");
  std::uniform_int_distribution<std::size_t> cy(0, shape.height - 1);
  std::uniform_int_distribution<std::size_t> cx(0, shape.width - 1);
  const long y = static_cast<long>(cy(rng));
  const long x = static_cast<long>(cx(rng));
  const long half = static_cast<long>(size / 2);
  const auto y0 = static_cast<std::size_t>(std::max(0L, y - half));
  const auto y1 = static_cast<std::size_t>(
      std::min(static_cast<long>(shape.height), y - half + static_cast<long>(size)));
  const auto x0 = static_cast<std::size_t>(std::max(0L, x - half));
  const auto x1 = static_cast<std::size_t>(
      std::min(static_cast<long>(shape.width), x - half + static_cast<long>(size)));
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t r = y0; r < y1; ++r) {
      for (std::size_t s = x0; s < x1; ++s) image[(c * shape.height + r) * shape.width + s] = 0.0f;
    }
  }
}

CutBox cutmix_box(std::size_t height, std::size_t width, double lambda, std::size_t center_y,
                  std::size_t center_x) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("cutmix lambda outside [0,1]");
  const double ratio = std::sqrt(1.0 - lambda);
  const auto cut_h = static_cast<long>(std::floor(static_cast<double>(height) * ratio));
  const auto cut_w = static_cast<long>(std::floor(static_cast<double>(width) * ratio));
  const auto cy = static_cast<long>(center_y);
  const auto cx = static_cast<long>(center_x);
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  CutBox box;
  box.y0 = static_cast<std::size_t>(std::clamp(cy - cut_h / 2, 0L, h));
  box.y1 = static_cast<std::size_t>(std::clamp(cy + cut_h / 2, 0L, h));
  box.x0 = static_cast<std::size_t>(std::clamp(cx - cut_w / 2, 0L, w));
  box.x1 = static_cast<std::size_t>(std::clamp(cx + cut_w / 2, 0L, w));
  return box;
}

CutMixBatch cutmix_apply(const Tensor<float>& inputs, std::span<const int> labels,
                         std::span<const std::size_t> partner, const CutBox& box) {
  if (inputs.rank() != 4) throw InvalidInput("cutmix expects an [M,C,H,W] batch");
  const std::size_t m = inputs.dim(0);
  const ImageShape shape{inputs.dim(1), inputs.dim(2), inputs.dim(3)};
  if (labels.size() != m || partner.size() != m) {
    throw InvalidInput("cutmix label/partner count does not match batch");
  }
  if (box.y1 > shape.height || box.x1 > shape.width || box.y0 > box.y1 || box.x0 > box.x1) {
    throw InvalidInput("cutmix box outside the image");
  }
  CutMixBatch out{inputs, {}};
  const double lambda =
      1.0 - static_cast<double>(box.area()) / static_cast<double>(shape.height * shape.width);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = partner[i];
    if (j >= m) throw InvalidInput("cutmix partner index out of range");
    for (std::size_t c = 0; c < shape.channels; ++c) {
      for (std::size_t r = box.y0; r < box.y1; ++r) {
        for (std::size_t s = box.x0; s < box.x1; ++s) {
          const std::size_t off = (c * shape.height + r) * shape.width + s;
          out.mixed_inputs[i * shape.size() + off] = inputs[j * shape.size() + off];
        }
      }
    }
    out.pairs.push_back({labels[i], labels[j], lambda});
  }
  return out;
}

double sample_beta(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw InvalidInput("beta distribution parameter must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  return a + b == 0.0 ? 0.5 : a / (a + b);
}

CutMixBatch cutmix_mix(const Tensor<float>& inputs, std::span<const int> labels, double alpha,
                       Rng& rng) {
  if (inputs.rank() != 4) throw InvalidInput("cutmix expects an [M,C,H,W] batch");
  if (inputs.dim(0) < 2) throw InvalidInput("cutmix needs a batch of at least two");
  std::vector<std::size_t> partner(inputs.dim(0));
  std::iota(partner.begin(), partner.end(), std::size_t{0});
  std::shuffle(partner.begin(), partner.end(), rng);
  const double lambda = sample_beta(alpha, rng);
  std::uniform_int_distribution<std::size_t> cy(0, inputs.dim(2) - 1);
  std::uniform_int_distribution<std::size_t> cx(0, inputs.dim(3) - 1);
  const std::size_t center_y = cy(rng);
  const std::size_t center_x = cx(rng);
  return cutmix_apply(inputs, labels, partner,
                      cutmix_box(inputs.dim(2), inputs.dim(3), lambda, center_y, center_x));
}

}  // namespace sosr
