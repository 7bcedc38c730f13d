#include "protoseg/surrogate.hpp"

#include <algorithm>

#include "protoseg/error.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

Image corrupt_image(const Image& image, double sigma, std::uint64_t seed) {
  if (sigma < 0.0)
    throw Error(ErrorKind::NegativeSigma, "noise sigma must be nonnegative");
  if (sigma == 0.0) return image;

  Image out = image;
  Rng rng(seed);
  const double bound = 4.0 * sigma;
  for (auto& v : out.pix) {
    const double noise = std::clamp(sigma * rng.gaussian(), -bound, bound);
    v = std::clamp(v + noise, 0.0, 1.0);
  }
  return out;
}

UnlabeledBatch make_unlabeled_batch(const std::vector<Image>& pool, int u,
                                    int copies, double sigma, std::uint64_t seed) {
  if (pool.empty())
    throw Error(ErrorKind::EmptyUnlabeledPool, "unlabeled pool is empty");
  if (u < 1) throw Error(ErrorKind::ConfigError, "u must be at least 1");
  if (copies < 1) throw Error(ErrorKind::ConfigError, "copies must be at least 1");
  if (sigma < 0.0)
    throw Error(ErrorKind::NegativeSigma, "noise sigma must be nonnegative");

  Rng rng(mix_seed(seed, 0x706f6f6cULL));  // "pool"
  std::vector<std::size_t> picks;
  if (pool.size() >= static_cast<std::size_t>(u)) {
    picks = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(u));
  } else {
    picks.resize(static_cast<std::size_t>(u));
    for (auto& i : picks) i = rng.uniform_below(pool.size());
  }

  UnlabeledBatch batch;
  for (std::size_t pi = 0; pi < picks.size(); ++pi) {
    for (int c = 0; c < copies; ++c) {
      const std::uint64_t noise_seed =
          mix_seed(seed, static_cast<std::uint64_t>(pi), static_cast<std::uint64_t>(c));
      batch.clean.push_back(pool[picks[pi]]);
      batch.corrupted.push_back(corrupt_image(pool[picks[pi]], sigma, noise_seed));
      batch.noise_meta.push_back({sigma, noise_seed});
    }
  }
  return batch;
}

}  // namespace protoseg
