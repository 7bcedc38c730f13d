#include "protoseg/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

#include "protoseg/error.hpp"

namespace protoseg {

namespace {

cv::Mat image_to_cv8u(const Image& img) {
  // Planar RGB [0,1] -> interleaved BGR uint8.
  cv::Mat out(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        double v = std::clamp(img.at(0, y, x), 0.0, 1.0);
        out.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      } else {
        cv::Vec3b& px = out.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c) {
          double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
          // BGR on disk, RGB in memory
          px[2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor stack_images(const std::vector<Image>& images) {
  if (images.empty())
    throw Error(ErrorKind::ShapeMismatch, "cannot stack an empty image list");
  const Image& first = images.front();
  Tensor t(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(first))
      throw Error(ErrorKind::ShapeMismatch, "stacked images must share one shape");
    std::copy(images[i].pix.begin(), images[i].pix.end(),
              t.data() + i * first.size());
  }
  return t;
}

Tensor image_to_tensor(const Image& img) { return stack_images({img}); }

Image tensor_to_image(const Tensor& t, int batch_index) {
  Image img(t.c(), t.h(), t.w());
  const double* src = t.data() + static_cast<std::size_t>(batch_index) * t.c() * t.h() * t.w();
  std::copy(src, src + img.size(), img.pix.begin());
  return img;
}

Tensor mask_to_tensor(const Mask& m) {
  Tensor t(1, 1, m.height, m.width);
  for (std::size_t i = 0; i < m.pix.size(); ++i) t[i] = m.pix[i];
  return t;
}

Image load_image(const std::filesystem::path& path, int channels) {
  cv::Mat raw = cv::imread(path.string(),
                           channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (raw.empty())
    throw Error(ErrorKind::CorruptImage, "cannot decode image: " + path.string());
  Image img(channels, raw.rows, raw.cols);
  for (int y = 0; y < raw.rows; ++y) {
    for (int x = 0; x < raw.cols; ++x) {
      if (channels == 1) {
        img.at(0, y, x) = raw.at<std::uint8_t>(y, x) / 255.0;
      } else {
        const cv::Vec3b px = raw.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = px[2 - c] / 255.0;
      }
    }
  }
  return img;
}

Mask load_mask(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty())
    throw Error(ErrorKind::CorruptImage, "cannot decode mask: " + path.string());
  Mask mask(raw.rows, raw.cols);
  for (int y = 0; y < raw.rows; ++y)
    for (int x = 0; x < raw.cols; ++x)
      mask.at(y, x) = raw.at<std::uint8_t>(y, x) / 255.0 > 0.5 ? 1 : 0;
  return mask;
}

void save_image_png(const Image& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), image_to_cv8u(img)))
    throw Error(ErrorKind::IoError, "cannot write image: " + path.string());
}

void save_mask_png(const Mask& mask, const std::filesystem::path& path) {
  cv::Mat out(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      out.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  if (!cv::imwrite(path.string(), out))
    throw Error(ErrorKind::IoError, "cannot write mask: " + path.string());
}

Image resize_image(const Image& img, int h, int w) {
  if (img.height == h && img.width == w) return img;
  Image out(img.channels, h, w);
  for (int c = 0; c < img.channels; ++c) {
    cv::Mat plane(img.height, img.width, CV_64FC1,
                  const_cast<double*>(img.pix.data()) +
                      static_cast<std::size_t>(c) * img.height * img.width);
    cv::Mat resized;
    cv::resize(plane, resized, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = std::clamp(resized.at<double>(y, x), 0.0, 1.0);
  }
  return out;
}

Mask resize_mask(const Mask& mask, int h, int w) {
  if (mask.height == h && mask.width == w) return mask;
  cv::Mat plane(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      plane.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  cv::Mat resized;
  cv::resize(plane, resized, cv::Size(w, h), 0, 0, cv::INTER_NEAREST);
  Mask out(h, w);
  // Threshold restores {0,1} after any interpolation.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(y, x) = resized.at<std::uint8_t>(y, x) / 255.0 > 0.5 ? 1 : 0;
  return out;
}

void save_overlay_png(const Image& query, const Mask& truth, const Mask& pred,
                      const std::filesystem::path& path) {
  const int h = query.height, w = query.width;
  Image panel(3, h, 3 * w);
  auto paint_mask = [&](const Mask& m, int x_off) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          panel.at(c, y, x_off + x) = m.at(y, x) ? (c == 1 ? 1.0 : 0.2) : 0.05;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        panel.at(c, y, x) = query.at(query.channels == 1 ? 0 : c, y, x);
  paint_mask(truth, w);
  paint_mask(pred, 2 * w);
  save_image_png(panel, path);
}

}  // namespace protoseg
