#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoseg/dataset.hpp"
#include "protoseg/episodes.hpp"
#include "protoseg/network.hpp"
#include "protoseg/objectives.hpp"
#include "protoseg/surrogate.hpp"

namespace protoseg {

enum class TrainMode { episodic, regular };

inline const char* to_string(TrainMode m) {
  return m == TrainMode::episodic ? "episodic" : "regular";
}

struct TrainConfig {
  TrainMode mode = TrainMode::episodic;
  int k = 1;
  int u = 0;
  int copies = 1;
  double lambda = 0.0;
  double sigma = 0.1;
  int iterations = 1;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;    // class split is independent of the run seed
  double test_fraction = 1.0 / 3.0;
  int batch_size = 2;              // regular mode: labeled images per step
  int episodes_per_step = 1;       // episodic mode
  int resample_limit = 10;         // EmptyMask retries per step
  ModelConfig model;

  std::filesystem::path data_root;
  std::filesystem::path pool_dir;  // unlabeled images; needed when lambda>0, u>0
  std::filesystem::path checkpoint_path = "checkpoint.pseg";
  std::filesystem::path log_path;  // JSONL step log; empty disables logging
  int eval_every = 0;              // steps between held-out evals; 0 disables
  int eval_episodes = 50;          // episodes per periodic eval
  int checkpoint_every = 0;        // steps between extra checkpoints; 0 disables

  // Throws ConfigError naming the offending key.
  void validate() const;
};

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over the model's named parameters. First/second moments are exposed
// for checkpointing so resumed training is bit-identical.
class Adam {
 public:
  Adam(const std::vector<NamedParam>& params, AdamParams hp);

  void step();  // consumes .grad of every parameter

  long t() const { return t_; }
  const std::vector<Tensor>& m() const { return m_; }
  const std::vector<Tensor>& v() const { return v_; }
  void set_state(long t, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  std::vector<NamedParam> params_;
  AdamParams hp_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

// One combined gradient step on the joint objective for a single episode.
// batch may be null (surrogate skipped); returns the pre-step losses. Throws
// EmptyMask when every support mask vanishes at feature resolution (the
// caller resamples).
LossReport train_step(Model& model, Adam& opt, const Episode& episode,
                      const UnlabeledBatch* batch, double lambda);

// Full training given preloaded data. pool may be null when the surrogate
// path is off. resume_from continues a checkpointed run bit-exactly. Returns
// the final checkpoint path.
std::filesystem::path train_with_data(const TrainConfig& config,
                                      const ClassDataset& dataset,
                                      const UnlabeledPool* pool,
                                      const std::filesystem::path& resume_from = {});

// Loads datasets from the config paths, then trains.
std::filesystem::path train(const TrainConfig& config,
                            const std::filesystem::path& resume_from = {});

// Batch-wise supervised baseline (mode forced to regular).
std::filesystem::path train_regular(TrainConfig config,
                                    const std::filesystem::path& resume_from = {});

}  // namespace protoseg
