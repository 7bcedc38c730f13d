#include "protoseg/episodes.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

#include "protoseg/error.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

namespace fs = std::filesystem;

UnlabeledPool UnlabeledPool::from_directory(const fs::path& dir, int target_h,
                                            int target_w, int channels) {
  if (!fs::is_directory(dir))
    throw Error(ErrorKind::IoError, "unlabeled pool is not a directory: " + dir.string());

  const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp"};
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (!exts.count(ext)) continue;
    const std::string stem = e.path().stem().string();
    if (stem.size() > 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw Error(ErrorKind::EmptyUnlabeledPool,
                "no images under pool directory: " + dir.string());

  UnlabeledPool pool;
  for (const auto& f : files) {
    Image img = load_image(f, channels);
    if (img.height != target_h || img.width != target_w)
      img = resize_image(img, target_h, target_w);
    pool.images_.push_back(std::move(img));
    pool.names_.push_back(fs::relative(f, dir).generic_string());
  }
  return pool;
}

UnlabeledPool UnlabeledPool::from_images(std::vector<Image> images,
                                         std::vector<std::string> names) {
  if (names.size() != images.size())
    throw Error(ErrorKind::DimensionMismatch, "pool names/images count mismatch");
  UnlabeledPool pool;
  pool.images_ = std::move(images);
  pool.names_ = std::move(names);
  return pool;
}

namespace {

void check_episode_preconditions(const ClassDataset& dataset,
                                 const std::vector<std::string>& allowed, int k,
                                 int u, const UnlabeledPool* pool) {
  if (allowed.empty())
    throw Error(ErrorKind::ConfigError, "allowed_classes is empty");
  if (k < 1) throw Error(ErrorKind::ConfigError, "k must be at least 1");
  if (u < 0) throw Error(ErrorKind::ConfigError, "u must be nonnegative");
  for (const auto& id : allowed) {
    const int ci = dataset.class_index(id);
    if (ci < 0)
      throw Error(ErrorKind::ConfigError, "unknown class in allowed set: " + id);
    if (static_cast<int>(dataset.entries[ci].size()) < k + 1)
      throw Error(ErrorKind::InsufficientEntries,
                  "class " + id + " has fewer than k+1 entries");
  }
  if (u > 0 && (pool == nullptr || pool->empty()))
    throw Error(ErrorKind::EmptyUnlabeledPool,
                "u > 0 but no unlabeled pool is configured");
}

std::vector<std::size_t> draw_pool_indices(const UnlabeledPool& pool, int u, Rng& rng) {
  if (pool.size() >= static_cast<std::size_t>(u))
    return rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(u));
  std::vector<std::size_t> idx(static_cast<std::size_t>(u));
  for (auto& i : idx) i = rng.uniform_below(pool.size());
  return idx;
}

Episode assemble_episode(const ClassDataset& dataset, int ci,
                         const std::vector<std::size_t>& support_idx,
                         std::size_t query_idx, int u, const UnlabeledPool* pool,
                         Rng& rng, std::uint64_t seed) {
  Episode ep;
  ep.class_id = dataset.classes[ci];
  ep.seed = seed;
  for (std::size_t i : support_idx) {
    ep.support_images.push_back(dataset.images[ci][i]);
    ep.support_masks.push_back(dataset.masks[ci][i]);
    ep.support_stems.push_back(dataset.entries[ci][i].stem);
  }
  ep.query_image = dataset.images[ci][query_idx];
  ep.query_mask = dataset.masks[ci][query_idx];
  ep.query_stem = dataset.entries[ci][query_idx].stem;

  if (u > 0) {
    for (std::size_t i : draw_pool_indices(*pool, u, rng)) {
      ep.unlabeled.push_back(pool->image(i));
      ep.unlabeled_names.push_back(pool->name(i));
    }
  }
  return ep;
}

}  // namespace

Episode sample_episode(const ClassDataset& dataset,
                       const std::vector<std::string>& allowed_classes, int k,
                       int u, const UnlabeledPool* pool, std::uint64_t seed) {
  check_episode_preconditions(dataset, allowed_classes, k, u, pool);

  Rng rng(seed);
  const std::size_t pick = rng.uniform_below(allowed_classes.size());
  const int ci = dataset.class_index(allowed_classes[pick]);

  std::vector<std::size_t> chosen = rng.sample_without_replacement(
      dataset.entries[ci].size(), static_cast<std::size_t>(k) + 1);
  const std::size_t query_idx = chosen.back();
  chosen.pop_back();

  return assemble_episode(dataset, ci, chosen, query_idx, u, pool, rng, seed);
}

EpisodeStream::EpisodeStream(const ClassDataset& dataset,
                             std::vector<std::string> allowed, int k, int u,
                             const UnlabeledPool* pool, std::uint64_t base_seed,
                             bool fixed_support)
    : dataset_(&dataset),
      allowed_(std::move(allowed)),
      k_(k),
      u_(u),
      pool_(pool),
      base_seed_(base_seed),
      fixed_support_(fixed_support) {
  check_episode_preconditions(dataset, allowed_, k_, u_, pool_);
}

Episode EpisodeStream::at(std::uint64_t index) const {
  const std::uint64_t seed = mix_seed(base_seed_, index);
  if (!fixed_support_)
    return sample_episode(*dataset_, allowed_, k_, u_, pool_, seed);

  // Fixed-support variant: the support set of each class is a function of the
  // base seed alone; per-episode randomness picks the class, the query, and
  // the unlabeled images.
  Rng rng(seed);
  const std::size_t pick = rng.uniform_below(allowed_.size());
  const int ci = dataset_->class_index(allowed_[pick]);

  Rng support_rng(mix_seed(base_seed_, 0x53555050ULL, static_cast<std::uint64_t>(ci)));
  std::vector<std::size_t> support_idx = support_rng.sample_without_replacement(
      dataset_->entries[ci].size(), static_cast<std::size_t>(k_));

  const std::size_t n = dataset_->entries[ci].size();
  std::size_t query_idx = rng.uniform_below(n - support_idx.size());
  // Map into the complement of the support set (support_idx is unordered).
  std::vector<std::size_t> sorted = support_idx;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t s : sorted)
    if (query_idx >= s) ++query_idx;

  return assemble_episode(*dataset_, ci, support_idx, query_idx, u_, pool_, rng, seed);
}

Mask downsample_mask(const Mask& mask, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1)
    throw Error(ErrorKind::ShapeMismatch, "downsample target must be positive");
  if (mask.height % target_h != 0 || mask.width % target_w != 0)
    throw Error(ErrorKind::ShapeMismatch,
                "mask dims must be multiples of the target dims");
  const int ry = mask.height / target_h;
  const int rx = mask.width / target_w;

  Mask out;
  out.height = target_h;
  out.width = target_w;
  out.pix.assign(static_cast<std::size_t>(target_h) * target_w, 0);
  for (int y = 0; y < target_h; ++y)
    for (int x = 0; x < target_w; ++x) out.at(y, x) = mask.at(y * ry, x * rx);

  if (mask.foreground() > 0 && out.foreground() == 0)
    throw Error(ErrorKind::EmptyAfterDownsample,
                "foreground vanished during downsampling");
  return out;
}

void write_episode_manifest(const std::vector<Episode>& episodes,
                            const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write manifest: " + path.string());
  for (const auto& ep : episodes) {
    nlohmann::json line{{"class", ep.class_id},
                        {"support", ep.support_stems},
                        {"query", ep.query_stem},
                        {"unlabeled", ep.unlabeled_names},
                        {"seed", ep.seed}};
    out << line.dump() << '\n';
  }
}

}  // namespace protoseg
