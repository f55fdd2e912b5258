#include "sisr/image.hpp"

#include <algorithm>
#include <string>

#include "sisr/error.hpp"

namespace sisr {

std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch_size) {
  if (patch_size == 0 || height == 0 || width == 0 || height % patch_size != 0 ||
      width % patch_size != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible into " + std::to_string(patch_size) + "-pixel patches");
  }
  return (height / patch_size) * (width / patch_size);
}

ad::Tensor patchify(const ImageGrid& image, std::size_t patch_size) {
  const std::size_t n = patch_count(image.height, image.width, patch_size);
  const std::size_t grid_w = image.width / patch_size;
  const std::size_t c = image.channels;
  const std::size_t p = patch_size * patch_size * c;
  std::vector<double> out(n * p);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t y0 = (k / grid_w) * patch_size;
    const std::size_t x0 = (k % grid_w) * patch_size;
    double* dst = out.data() + k * p;
    for (std::size_t dy = 0; dy < patch_size; ++dy)
      for (std::size_t dx = 0; dx < patch_size; ++dx)
        for (std::size_t ch = 0; ch < c; ++ch) *dst++ = image.at(y0 + dy, x0 + dx, ch);
  }
  return ad::Tensor({n, p}, std::move(out));
}

ImageGrid unpatchify(const ad::Tensor& patches, std::size_t height, std::size_t width,
                     std::size_t channels, std::size_t patch_size) {
  const std::size_t n = patch_count(height, width, patch_size);
  const std::size_t p = patch_size * patch_size * channels;
  if (patches.rank() != 2 || patches.dim(0) != n || patches.dim(1) != p) {
    throw ShapeError("unpatchify: patches " + shape_string(patches.shape()) +
                     " do not tile the requested geometry");
  }
  ImageGrid image(height, width, channels);
  const std::size_t grid_w = width / patch_size;
  const double* src = patches.data().data();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t y0 = (k / grid_w) * patch_size;
    const std::size_t x0 = (k % grid_w) * patch_size;
    for (std::size_t dy = 0; dy < patch_size; ++dy)
      for (std::size_t dx = 0; dx < patch_size; ++dx)
        for (std::size_t ch = 0; ch < channels; ++ch) image.at(y0 + dy, x0 + dx, ch) = *src++;
  }
  return image;
}

ad::Tensor image_to_tensor(const ImageGrid& image) {
  return ad::Tensor({image.height, image.width, image.channels}, image.pixels);
}

ImageGrid image_from_tensor(const ad::Tensor& tensor) {
  if (tensor.rank() != 3) {
    throw ShapeError("image tensor must have dims [H, W, C], got " + shape_string(tensor.shape()));
  }
  ImageGrid image(tensor.dim(0), tensor.dim(1), tensor.dim(2));
  std::copy(tensor.data().begin(), tensor.data().end(), image.pixels.begin());
  return image;
}

}  // namespace sisr
