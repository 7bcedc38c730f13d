#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoseg/dataset.hpp"
#include "protoseg/image.hpp"

namespace protoseg {

// One c-way k-shot task (c fixed at 1): k labeled support shots of a class,
// one query of the same class, and optionally u unlabeled images for the
// surrogate task. Stems and seed are audit metadata for manifests.
struct Episode {
  std::string class_id;
  std::vector<Image> support_images;
  std::vector<Mask> support_masks;
  Image query_image;
  Mask query_mask;
  std::vector<Image> unlabeled;

  std::vector<std::string> support_stems;
  std::string query_stem;
  std::vector<std::string> unlabeled_names;
  std::uint64_t seed = 0;

  int k() const { return static_cast<int>(support_images.size()); }
};

// Mask-free image collection the surrogate task draws from.
class UnlabeledPool {
 public:
  UnlabeledPool() = default;

  // Recursively collects raster files under dir (files with the mask suffix
  // are skipped), decoded and resized to target size, ordered by path.
  static UnlabeledPool from_directory(const std::filesystem::path& dir,
                                      int target_h, int target_w,
                                      int channels = 3);
  static UnlabeledPool from_images(std::vector<Image> images,
                                   std::vector<std::string> names);

  bool empty() const { return images_.empty(); }
  std::size_t size() const { return images_.size(); }
  const Image& image(std::size_t i) const { return images_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<Image>& images() const { return images_; }

 private:
  std::vector<Image> images_;
  std::vector<std::string> names_;
};

// Uniformly picks a class from allowed_classes, then k+1 distinct entries of
// it (k support + 1 query), then u unlabeled images. Pure function of the
// seed. pool may be null when u == 0.
Episode sample_episode(const ClassDataset& dataset,
                       const std::vector<std::string>& allowed_classes, int k,
                       int u, const UnlabeledPool* pool, std::uint64_t seed);

// Indexable, reproducible episode sequence: episode i is sample_episode with
// seed mix_seed(base_seed, i). With fixed_support, every episode of a class
// reuses one support set drawn from the base seed; only the query varies.
class EpisodeStream {
 public:
  EpisodeStream(const ClassDataset& dataset, std::vector<std::string> allowed,
                int k, int u, const UnlabeledPool* pool, std::uint64_t base_seed,
                bool fixed_support = false);

  Episode at(std::uint64_t index) const;
  std::uint64_t base_seed() const { return base_seed_; }

 private:
  const ClassDataset* dataset_;
  std::vector<std::string> allowed_;
  int k_, u_;
  const UnlabeledPool* pool_;
  std::uint64_t base_seed_;
  bool fixed_support_;
};

// Nearest-neighbor downsample by the encoder stride: out[i, j] =
// in[i * (H/H'), j * (W/W')]. Source dims must be multiples of the target.
Mask downsample_mask(const Mask& mask, int target_h, int target_w);

// One structured line per episode (class, stems, seed) for audit and replay.
void write_episode_manifest(const std::vector<Episode>& episodes,
                            const std::filesystem::path& path);

}  // namespace protoseg
