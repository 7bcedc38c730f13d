#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoseg/image.hpp"

namespace protoseg {

// One labeled example: paired image and mask files sharing a stem.
struct DatasetEntry {
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  std::string stem;
};

// A class-organized segmentation corpus, fully decoded and resized at load
// time. Immutable after construction; safe to share across readers.
class ClassDataset {
 public:
  std::filesystem::path root;
  std::vector<std::string> classes;                    // sorted, unique
  std::vector<std::vector<DatasetEntry>> entries;      // parallel to classes
  std::vector<std::vector<Image>> images;              // decoded, resized
  std::vector<std::vector<Mask>> masks;                // binarized
  int height = 0, width = 0, channels = 3;

  int class_index(const std::string& id) const;        // -1 when absent
  std::size_t total_entries() const;
};

struct DatasetSplit {
  std::vector<std::string> train_classes;  // sorted
  std::vector<std::string> test_classes;   // sorted
};

// Walks <root>/<class>/<stem>.<ext> + <stem>_mask.<ext>, decodes and resizes
// everything to target size. Masks are re-binarized after resizing.
ClassDataset load_class_dataset(const std::filesystem::path& root, int target_h,
                                int target_w);

// Deterministic disjoint class partition; each side gets at least one class.
DatasetSplit split_classes(const ClassDataset& dataset, double test_fraction,
                           std::uint64_t seed);

// Writes a synthetic corpus of colored shapes on textured backgrounds with
// exact foreground masks, then loads it back. Deterministic given seed.
ClassDataset generate_shapes_dataset(int n_classes, int per_class, int h, int w,
                                     std::uint64_t seed,
                                     const std::filesystem::path& out_root);

// Number of distinct class identities the generator can produce.
int max_shape_classes();

}  // namespace protoseg
