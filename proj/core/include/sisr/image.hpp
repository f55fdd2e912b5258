#pragma once

#include <cstddef>
#include <vector>

#include "sisr/tensor.hpp"

namespace sisr {

// Row-major H x W x C image with pixel values in [0, 1].
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  ImageGrid() = default;
  ImageGrid(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  bool operator==(const ImageGrid&) const = default;
};

// Number of patches; throws ShapeError unless patch_size divides H and W.
std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch_size);

// Non-overlapping patches in row-major patch order, each flattened as
// (dy, dx, c). Shape [N_v, patch_size^2 * C].
ad::Tensor patchify(const ImageGrid& image, std::size_t patch_size);
ImageGrid unpatchify(const ad::Tensor& patches, std::size_t height, std::size_t width,
                     std::size_t channels, std::size_t patch_size);

// On-disk form: a tensor with dims [H, W, C].
ad::Tensor image_to_tensor(const ImageGrid& image);
ImageGrid image_from_tensor(const ad::Tensor& tensor);

}  // namespace sisr
