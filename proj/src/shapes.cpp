#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "protoseg/dataset.hpp"
#include "protoseg/error.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

namespace {

namespace fs = std::filesystem;

enum class Family {
  disk,
  ring,
  square,
  frame,
  triangle,
  diamond,
  cross,
  xmark,
  hbar,
  vbar,
  ellipse,
  lshape,
  count_
};

constexpr int kFamilies = static_cast<int>(Family::count_);
constexpr int kStyles = 4;

const char* family_name(Family f) {
  switch (f) {
    case Family::disk: return "disk";
    case Family::ring: return "ring";
    case Family::square: return "square";
    case Family::frame: return "frame";
    case Family::triangle: return "triangle";
    case Family::diamond: return "diamond";
    case Family::cross: return "cross";
    case Family::xmark: return "xmark";
    case Family::hbar: return "hbar";
    case Family::vbar: return "vbar";
    case Family::ellipse: return "ellipse";
    case Family::lshape: return "lshape";
    default: return "?";
  }
}

// Point-inside test in shape-local coordinates (origin at the shape center,
// rotation already removed), scale r.
bool inside(Family f, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (f) {
    case Family::disk:
      return dx * dx + dy * dy <= r * r;
    case Family::ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
    }
    case Family::square:
      return ax <= 0.9 * r && ay <= 0.9 * r;
    case Family::frame:
      return ax <= 0.9 * r && ay <= 0.9 * r && !(ax <= 0.5 * r && ay <= 0.5 * r);
    case Family::triangle: {
      // Vertices (0, -r), (-0.9r, 0.8r), (0.9r, 0.8r).
      if (dy > 0.8 * r) return false;
      // Edge from apex to each base corner: |dx| grows linearly with dy.
      const double t = (dy + r) / (1.8 * r);  // 0 at apex, 1 at base
      return ax <= 0.9 * r * std::clamp(t, 0.0, 1.0);
    }
    case Family::diamond:
      return ax + ay <= r;
    case Family::cross:
      return (ax <= 0.35 * r && ay <= r) || (ay <= 0.35 * r && ax <= r);
    case Family::xmark: {
      // Cross rotated by 45 degrees.
      const double c = std::numbers::sqrt2 / 2.0;
      const double ux = c * dx + c * dy, uy = -c * dx + c * dy;
      const double aux = std::abs(ux), auy = std::abs(uy);
      return (aux <= 0.35 * r && auy <= r) || (auy <= 0.35 * r && aux <= r);
    }
    case Family::hbar:
      return ax <= r && ay <= 0.35 * r;
    case Family::vbar:
      return ax <= 0.35 * r && ay <= r;
    case Family::ellipse: {
      const double u = dx / r, v = dy / (0.55 * r);
      return u * u + v * v <= 1.0;
    }
    case Family::lshape:
      return (dx >= -r && dx <= -0.3 * r && ay <= r) ||
             (ax <= r && dy >= 0.3 * r && dy <= r);
    default:
      return false;
  }
}

bool rotatable(Family f) { return f != Family::disk && f != Family::ring; }

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

}  // namespace

int max_shape_classes() { return kFamilies * kStyles; }

ClassDataset generate_shapes_dataset(int n_classes, int per_class, int h, int w,
                                     std::uint64_t seed, const fs::path& out_root) {
  if (n_classes < 2)
    throw Error(ErrorKind::ConfigError, "n_classes must be at least 2");
  if (n_classes > max_shape_classes())
    throw Error(ErrorKind::UnsupportedClassCount,
                "at most " + std::to_string(max_shape_classes()) +
                    " shape classes are available, requested " +
                    std::to_string(n_classes));
  if (per_class < 1)
    throw Error(ErrorKind::ConfigError, "per_class must be at least 1");
  if (h < 16 || w < 16)
    throw Error(ErrorKind::ConfigError, "generated images must be at least 16x16");

  fs::create_directories(out_root);

  for (int ci = 0; ci < n_classes; ++ci) {
    const Family family = static_cast<Family>(ci % kFamilies);
    const int style = ci / kFamilies;
    const std::string class_id =
        std::string(family_name(family)) + "_" + static_cast<char>('a' + style);
    const fs::path class_dir = out_root / class_id;
    fs::create_directories(class_dir);

    // Foreground hue is a class signature: support and query of one episode
    // share it, so prototype matching carries appearance information.
    const double class_hue =
        std::fmod(0.61803398875 * (ci + 1) + 0.137 * style, 1.0);

    for (int ei = 0; ei < per_class; ++ei) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(ci),
                       static_cast<std::uint64_t>(ei)));

      const double cx = rng.uniform(0.35, 0.65) * w;
      const double cy = rng.uniform(0.35, 0.65) * h;
      const double r = rng.uniform(0.18, 0.32) * std::min(h, w);
      const double max_rot = 15.0 * std::numbers::pi / 180.0;
      const double rot = rotatable(family) ? rng.uniform(-max_rot, max_rot) : 0.0;
      const double cos_t = std::cos(rot), sin_t = std::sin(rot);

      const Rgb fg = hsv_to_rgb(class_hue + rng.uniform(-0.03, 0.03),
                                rng.uniform(0.55, 0.85), rng.uniform(0.65, 0.95));
      const Rgb bg = hsv_to_rgb(rng.uniform01(), rng.uniform(0.05, 0.2),
                                rng.uniform(0.3, 0.6));
      // Low-amplitude sinusoidal texture over the background.
      const double freq = rng.uniform(0.15, 0.45);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double kx = freq * std::cos(angle), ky = freq * std::sin(angle);

      Image img;
      img.channels = 3;
      img.height = h;
      img.width = w;
      img.pix.assign(static_cast<std::size_t>(3) * h * w, 0.0);
      Mask mask;
      mask.height = h;
      mask.width = w;
      mask.pix.assign(static_cast<std::size_t>(h) * w, 0);

      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          const double dx0 = px - cx, dy0 = py - cy;
          const double dx = cos_t * dx0 + sin_t * dy0;
          const double dy = -sin_t * dx0 + cos_t * dy0;
          const bool fg_here = inside(family, dx, dy, r);
          mask.at(y, x) = fg_here ? 1 : 0;

          double c3[3];
          if (fg_here) {
            c3[0] = fg.r;
            c3[1] = fg.g;
            c3[2] = fg.b;
          } else {
            const double wave = 0.06 * std::sin(kx * px + ky * py + phase);
            c3[0] = bg.r + wave;
            c3[1] = bg.g + wave;
            c3[2] = bg.b + wave;
          }
          for (int c = 0; c < 3; ++c) {
            const double noisy = c3[c] + rng.uniform(-0.05, 0.05);
            img.at(c, y, x) = std::clamp(noisy, 0.0, 1.0);
          }
        }
      }

      if (mask.foreground() == 0)
        throw Error(ErrorKind::EmptyMask,
                    "generator produced an empty mask for " + class_id);

      char stem[16];
      std::snprintf(stem, sizeof stem, "img%03d", ei);
      save_image_png(img, class_dir / (std::string(stem) + ".png"));
      save_mask_png(mask, class_dir / (std::string(stem) + "_mask.png"));
    }
  }

  return load_class_dataset(out_root, h, w);
}

}  // namespace protoseg
