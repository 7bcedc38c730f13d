#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "protoseg/tensor.hpp"

namespace protoseg {

// Dense pixel image, CHW layout, intensities in [0, 1].
struct Image {
  int channels = 0, height = 0, width = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int ch, int h, int w, double fill = 0.0)
      : channels(ch), height(h), width(w),
        pix(static_cast<std::size_t>(ch) * h * w, fill) {}

  double& at(int c, int y, int x) {
    return pix[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pix[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t size() const { return pix.size(); }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const Image& o) const {
    return same_shape(o) && pix == o.pix;
  }
};

// Binary segmentation mask over {0, 1}, row-major.
struct Mask {
  int height = 0, width = 0;
  std::vector<std::uint8_t> pix;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pix(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) {
    return pix[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return pix[static_cast<std::size_t>(y) * width + x];
  }

  long foreground() const {
    long s = 0;
    for (auto v : pix) s += v;
    return s;
  }

  bool same_shape(const Mask& o) const {
    return height == o.height && width == o.width;
  }

  bool operator==(const Mask& o) const { return same_shape(o) && pix == o.pix; }
};

// Stack images into a (n, c, h, w) batch tensor.
Tensor stack_images(const std::vector<Image>& images);
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, int batch_index = 0);
Tensor mask_to_tensor(const Mask& m);

// File IO (lossless PNG for writes; any raster format OpenCV decodes for
// reads). Images are normalized to [0,1] at load, masks thresholded at 0.5.
Image load_image(const std::filesystem::path& path, int channels = 3);
Mask load_mask(const std::filesystem::path& path);
void save_image_png(const Image& img, const std::filesystem::path& path);
void save_mask_png(const Mask& mask, const std::filesystem::path& path);

// Bilinear resize for images, nearest + re-binarize for masks.
Image resize_image(const Image& img, int h, int w);
Mask resize_mask(const Mask& mask, int h, int w);

// Side-by-side dump (query | ground truth | prediction) for eye-balling
// evaluation episodes.
void save_overlay_png(const Image& query, const Mask& truth, const Mask& pred,
                      const std::filesystem::path& path);

}  // namespace protoseg
