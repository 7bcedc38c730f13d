#pragma once

#include <cstdint>
#include <vector>

#include "protoseg/image.hpp"

namespace protoseg {

struct NoiseMeta {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

// Paired clean/corrupted images for the denoising task. corrupted[i] is
// clean[i] plus clamped Gaussian noise; with sigma 0 the pair is identical.
struct UnlabeledBatch {
  std::vector<Image> clean;
  std::vector<Image> corrupted;
  std::vector<NoiseMeta> noise_meta;

  std::size_t size() const { return clean.size(); }
};

// Adds i.i.d. zero-mean Gaussian noise with standard deviation sigma per
// channel (samples truncated at +/-4 sigma), then clamps to [0, 1].
Image corrupt_image(const Image& image, double sigma, std::uint64_t seed);

// Samples u pool images and emits u*copies (clean, corrupted) pairs, each
// copy with fresh noise. Deterministic given seed.
UnlabeledBatch make_unlabeled_batch(const std::vector<Image>& pool, int u,
                                    int copies, double sigma, std::uint64_t seed);

}  // namespace protoseg
