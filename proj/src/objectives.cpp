#include "protoseg/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "protoseg/error.hpp"

namespace protoseg {

double bce_mean_value(const double* pred, const double* target, std::size_t n,
                      double eps) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred[i], eps, 1.0 - eps);
    const double t = target[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(n);
}

double few_shot_loss(const Tensor& pred, const Mask& target) {
  if (pred.n() != 1 || pred.c() != 1 || pred.h() != target.height ||
      pred.w() != target.width)
    throw Error(ErrorKind::ShapeMismatch,
                "prediction must be a (1, 1, H, W) map matching the mask");
  std::vector<double> t(target.pix.begin(), target.pix.end());
  return bce_mean_value(pred.data(), t.data(), t.size());
}

double surrogate_loss(const Image& reconstruction, const Image& clean) {
  if (!reconstruction.same_shape(clean))
    throw Error(ErrorKind::ShapeMismatch,
                "reconstruction and clean image shapes differ");
  for (double v : clean.pix)
    if (v < 0.0 || v > 1.0)
      throw Error(ErrorKind::RangeViolation, "clean image outside [0, 1]");
  return bce_mean_value(reconstruction.pix.data(), clean.pix.data(),
                        clean.pix.size());
}

double joint_loss(double few, double sur, double lambda) {
  if (lambda < 0.0)
    throw Error(ErrorKind::NegativeLambda, "lambda must be nonnegative");
  if (lambda == 0.0) return few;
  return few + lambda * sur;
}

}  // namespace protoseg
