#pragma once

#include <cstddef>

#include "protoseg/image.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg {

// Per-step loss record; total = few_shot + lambda * surrogate.
struct LossReport {
  double few_shot = 0.0;
  double surrogate = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// Mean binary cross-entropy with predictions clipped to [eps, 1-eps] before
// the logs. Shared by both losses and by the autodiff graph op.
double bce_mean_value(const double* pred, const double* target, std::size_t n,
                      double eps = 1e-7);

// Mean pixelwise BCE of a (1, 1, H, W) probability map against a binary mask.
double few_shot_loss(const Tensor& pred, const Mask& target);

// Mean pixel/channel BCE of a reconstruction against the clean image; the
// clean image acts as a soft target in [0, 1].
double surrogate_loss(const Image& reconstruction, const Image& clean);

// few + lambda * sur; lambda == 0 returns `few` unchanged (bitwise).
double joint_loss(double few, double sur, double lambda);

}  // namespace protoseg
