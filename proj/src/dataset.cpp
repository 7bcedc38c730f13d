#include "protoseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "protoseg/error.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

namespace fs = std::filesystem;

int ClassDataset::class_index(const std::string& id) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), id);
  if (it == classes.end() || *it != id) return -1;
  return static_cast<int>(it - classes.begin());
}

std::size_t ClassDataset::total_entries() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.size();
  return n;
}

namespace {

const std::set<std::string> kRasterExtensions = {".png", ".jpg", ".jpeg", ".bmp"};

bool is_raster(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return kRasterExtensions.count(ext) > 0;
}

constexpr const char* kMaskSuffix = "_mask";

bool has_mask_suffix(const std::string& stem) {
  const std::string s(kMaskSuffix);
  return stem.size() > s.size() && stem.compare(stem.size() - s.size(), s.size(), s) == 0;
}

}  // namespace

ClassDataset load_class_dataset(const fs::path& root, int target_h, int target_w) {
  if (!fs::is_directory(root))
    throw Error(ErrorKind::IoError, "dataset root is not a directory: " + root.string());

  ClassDataset ds;
  ds.root = root;
  ds.height = target_h;
  ds.width = target_w;

  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());

  for (const auto& dir : class_dirs) {
    const std::string class_id = dir.filename().string();

    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir))
      if (f.is_regular_file() && is_raster(f.path())) files.push_back(f.path());
    std::sort(files.begin(), files.end());

    std::set<std::string> mask_stems;
    std::vector<fs::path> image_files;
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      if (has_mask_suffix(stem))
        mask_stems.insert(stem);
      else
        image_files.push_back(f);
    }

    std::vector<DatasetEntry> class_entries;
    std::vector<Image> class_images;
    std::vector<Mask> class_masks;
    for (const auto& img_path : image_files) {
      const std::string stem = img_path.stem().string();
      const std::string mask_stem = stem + kMaskSuffix;
      fs::path mask_path;
      for (const auto& ext : kRasterExtensions) {
        fs::path candidate = img_path.parent_path() / (mask_stem + ext);
        if (fs::exists(candidate)) {
          mask_path = candidate;
          break;
        }
      }
      if (mask_path.empty())
        throw Error(ErrorKind::MissingMask,
                    "no mask file for " + class_id + "/" + stem);

      Image img = load_image(img_path, ds.channels);
      Mask mask = load_mask(mask_path);
      if (img.height != target_h || img.width != target_w)
        img = resize_image(img, target_h, target_w);
      if (mask.height != target_h || mask.width != target_w)
        mask = resize_mask(mask, target_h, target_w);

      class_entries.push_back({img_path, mask_path, stem});
      class_images.push_back(std::move(img));
      class_masks.push_back(std::move(mask));
    }

    if (class_entries.empty())
      throw Error(ErrorKind::EmptyClass, "class has no image/mask pairs: " + class_id);

    ds.classes.push_back(class_id);
    ds.entries.push_back(std::move(class_entries));
    ds.images.push_back(std::move(class_images));
    ds.masks.push_back(std::move(class_masks));
  }

  if (ds.classes.empty())
    throw Error(ErrorKind::EmptyClass, "dataset has no class directories: " + root.string());
  return ds;
}

DatasetSplit split_classes(const ClassDataset& dataset, double test_fraction,
                           std::uint64_t seed) {
  const int n = static_cast<int>(dataset.classes.size());
  if (n < 2)
    throw Error(ErrorKind::DegenerateSplit, "need at least 2 classes to split");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(ErrorKind::ConfigError, "test_fraction must lie in (0, 1)");

  int n_test = static_cast<int>(std::floor(test_fraction * n));
  n_test = std::clamp(n_test, 1, n - 1);

  std::vector<std::string> order = dataset.classes;
  Rng rng(mix_seed(seed, 0x73706c6974ULL));  // "split"
  rng.shuffle(order);

  DatasetSplit split;
  split.test_classes.assign(order.begin(), order.begin() + n_test);
  split.train_classes.assign(order.begin() + n_test, order.end());
  std::sort(split.test_classes.begin(), split.test_classes.end());
  std::sort(split.train_classes.begin(), split.train_classes.end());
  return split;
}

}  // namespace protoseg
