#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoseg/dataset.hpp"
#include "protoseg/episodes.hpp"
#include "protoseg/network.hpp"

namespace protoseg {

struct EpisodeScore {
  std::uint64_t index = 0;  // index into the evaluation episode stream
  std::string class_id;
  double dsc = 0.0;
};

// Result of scoring n episodes. Unscorable episodes (every support mask
// vanished at feature resolution) are excluded from the mean and counted.
struct EvalReport {
  std::vector<EpisodeScore> per_episode;
  double mean_dsc = 0.0;
  double std_dsc = 0.0;
  int k = 1;
  std::uint64_t n_episodes = 0;
  std::uint64_t unscorable = 0;
  std::string checkpoint_id;  // parameter checksum, hex
  std::uint64_t seed = 0;
};

// Dice similarity coefficient 2|A intersect B| / (|A| + |B|); DSC of two
// empty masks is 1 by convention.
double dsc(const Mask& a, const Mask& b);

// Full inference path: support pooling + aggregation + fuse/decode,
// thresholded at 0.5. Throws EmptyMask when no support mask survives
// downsampling.
Mask predict_episode(Model& model, const Episode& episode);

// Scores n_episodes episodes drawn from a seeded stream over allowed_classes.
// Deterministic given (parameters, seed); never mutates the model. When
// overlay_dir is non-empty, writes query|truth|prediction panels per episode.
EvalReport evaluate(Model& model, const ClassDataset& dataset,
                    const std::vector<std::string>& allowed_classes, int k,
                    std::uint64_t n_episodes, std::uint64_t seed,
                    const std::filesystem::path& overlay_dir = {});

// Machine-readable report (JSON) and a human summary table.
void write_eval_report(const EvalReport& report, const std::filesystem::path& path);
std::string format_eval_summary(const EvalReport& report);

}  // namespace protoseg
