#include "protoseg/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

#include "protoseg/error.hpp"
#include "protoseg/evaluation.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

namespace fs = std::filesystem;

// Purpose tags mixed into the run seed so each random consumer draws from its
// own stream and skipping one consumer (e.g. the surrogate at lambda 0) never
// shifts the others.
namespace seed_tag {
constexpr std::uint64_t init = 0x696e6974ULL;      // model initialization
constexpr std::uint64_t episodes = 0x65706973ULL;  // episode stream
constexpr std::uint64_t surrogate = 0x73757272ULL; // unlabeled batches
constexpr std::uint64_t regular = 0x72656775ULL;   // regular-mode batches
constexpr std::uint64_t eval = 0x6576616cULL;      // periodic held-out evals
}  // namespace seed_tag

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(ErrorKind::ConfigError, key + " " + why);
  };
  if (iterations < 1) fail("iterations", "must be at least 1");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (k < 1) fail("k", "must be at least 1");
  if (u < 0) fail("u", "must be nonnegative");
  if (copies < 1) fail("copies", "must be at least 1");
  if (lambda < 0.0) fail("lambda", "must be nonnegative");
  if (sigma < 0.0) fail("sigma", "must be nonnegative");
  if (batch_size < 1) fail("batch_size", "must be at least 1");
  if (episodes_per_step < 1) fail("episodes_per_step", "must be at least 1");
  if (resample_limit < 1) fail("resample_limit", "must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    fail("test_fraction", "must lie in (0, 1)");
  if (eval_every < 0) fail("eval_every", "must be nonnegative");
  if (eval_episodes < 1) fail("eval_episodes", "must be at least 1");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be nonnegative");
  if (model.channels < 1) fail("model.channels", "must be at least 1");
  if (model.input_h < 4 || model.input_h % 4 != 0)
    fail("model.input_h", "must be a positive multiple of 4");
  if (model.input_w < 4 || model.input_w % 4 != 0)
    fail("model.input_w", "must be a positive multiple of 4");
  for (int c : model.encoder_channels)
    if (c < 1) fail("model.encoder_channels", "entries must be positive");
  for (int c : model.convs_per_block)
    if (c < 1) fail("model.convs_per_block", "entries must be positive");
  for (int c : model.decoder_channels)
    if (c < 1) fail("model.decoder_channels", "entries must be positive");
  for (int c : model.denoise_channels)
    if (c < 1) fail("model.denoise_channels", "entries must be positive");
  if (lambda > 0.0 && u > 0 && mode == TrainMode::episodic && pool_dir.empty())
    fail("pool_dir", "is required when lambda > 0 and u > 0");
}

Adam::Adam(const std::vector<NamedParam>& params, AdamParams hp)
    : params_(params), hp_(hp) {
  for (const auto& p : params_) {
    const Tensor& t = p.var->value;
    m_.emplace_back(t.n(), t.c(), t.h(), t.w());
    v_.emplace_back(t.n(), t.c(), t.h(), t.w());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i].var->value;
    const Tensor& grad = params_[i].var->grad;
    if (grad.size() != value.size())
      throw Error(ErrorKind::ShapeMismatch,
                  "gradient missing for " + params_[i].name +
                      " (zero_grad before building the graph)");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g;
      v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= hp_.lr * mhat / (std::sqrt(vhat) + hp_.eps);
    }
  }
}

void Adam::set_state(long t, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw Error(ErrorKind::ShapeMismatch, "optimizer state arity mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!m[i].same_shape(params_[i].var->value) ||
        !v[i].same_shape(params_[i].var->value))
      throw Error(ErrorKind::ShapeMismatch,
                  "optimizer state shape mismatch for " + params_[i].name);
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

namespace {

// Downsamples the support masks to feature resolution. Masks whose foreground
// vanishes are left empty and excluded via `valid`; all-empty is the caller's
// EmptyMask signal.
void downsample_supports(const Episode& ep, int fh, int fw,
                         std::vector<Mask>& small, std::vector<int>& valid) {
  small.clear();
  valid.clear();
  for (int i = 0; i < ep.k(); ++i) {
    try {
      small.push_back(downsample_mask(ep.support_masks[i], fh, fw));
      valid.push_back(i);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyAfterDownsample) throw;
      small.emplace_back(fh, fw);
    }
  }
  if (valid.empty())
    throw Error(ErrorKind::EmptyMask,
                "every support mask vanished at feature resolution");
}

// Few-shot BCE node for one episode on the current graph.
ad::Var episode_loss_node(Model& model, const Episode& ep) {
  const int stride = model.config().stride();
  const int fh = ep.query_image.height / stride;
  const int fw = ep.query_image.width / stride;
  std::vector<Mask> small;
  std::vector<int> valid;
  downsample_supports(ep, fh, fw, small, valid);

  ad::Var pred = model.fewshot_forward(stack_images(ep.support_images), small,
                                       valid, image_to_tensor(ep.query_image));
  return ad::bce_mean(pred, mask_to_tensor(ep.query_mask));
}

ad::Var surrogate_loss_node(Model& model, const UnlabeledBatch& batch) {
  ad::Var rec = model.denoise(ad::constant(stack_images(batch.corrupted)));
  return ad::bce_mean(rec, stack_images(batch.clean));
}

struct StepRecord {
  LossReport loss;
  std::string episode_class;
  std::uint64_t seed = 0;
};

void append_log_line(std::ofstream& log, std::uint64_t step, const StepRecord& rec) {
  if (!log.is_open()) return;
  nlohmann::json line{{"step", step},
                      {"few_shot", rec.loss.few_shot},
                      {"surrogate", rec.loss.surrogate},
                      {"total", rec.loss.total},
                      {"lambda", rec.loss.lambda},
                      {"episode_class", rec.episode_class},
                      {"seed", rec.seed}};
  log << line.dump() << '\n';
}

}  // namespace

LossReport train_step(Model& model, Adam& opt, const Episode& episode,
                      const UnlabeledBatch* batch, double lambda) {
  if (lambda < 0.0)
    throw Error(ErrorKind::NegativeLambda, "lambda must be nonnegative");

  model.set_training(true);
  model.zero_grad();

  ad::Var few = episode_loss_node(model, episode);
  ad::Var total = few;
  double sur_value = 0.0;
  if (lambda > 0.0 && batch != nullptr && batch->size() > 0) {
    ad::Var sur = surrogate_loss_node(model, *batch);
    sur_value = sur->value.item();
    total = ad::add_scaled(few, sur, lambda);
  }

  ad::backward(total);
  opt.step();
  model.set_training(false);

  LossReport report;
  report.few_shot = few->value.item();
  report.surrogate = sur_value;
  report.lambda = lambda;
  report.total = joint_loss(report.few_shot, sur_value, lambda);
  return report;
}

namespace {

class TrainLoop {
 public:
  TrainLoop(const TrainConfig& config, const ClassDataset& dataset,
            const UnlabeledPool* pool)
      : config_(config), dataset_(dataset), pool_(pool) {}

  fs::path run(const fs::path& resume_from) {
    config_.validate();

    split_ = split_classes(dataset_, config_.test_fraction, config_.split_seed);

    const bool surrogate_on = config_.mode == TrainMode::episodic &&
                              config_.lambda > 0.0 && config_.u > 0;
    if (surrogate_on && (pool_ == nullptr || pool_->empty()))
      throw Error(ErrorKind::EmptyUnlabeledPool,
                  "surrogate task enabled but the unlabeled pool is empty");
    if (config_.mode == TrainMode::regular && (config_.k != 1 || config_.u != 0))
      std::cerr << "warning: regular mode ignores k and u\n";

    std::uint64_t start_step = 0;
    std::uint64_t run_seed = config_.seed;

    if (!resume_from.empty()) {
      model_ = std::make_unique<Model>(config_.model, 0);
      CheckpointExtra extra;
      load_weights_into(*model_, resume_from, &extra);
      if (!extra.present)
        throw Error(ErrorKind::ConfigError,
                    "checkpoint has no optimizer state; cannot resume: " +
                        resume_from.string());
      start_step = extra.next_step;
      run_seed = extra.train_seed;  // keeps every derived stream bit-identical
      opt_ = std::make_unique<Adam>(model_->parameters(),
                                    AdamParams{config_.learning_rate});
      opt_->set_state(extra.adam_t, std::move(extra.adam_m), std::move(extra.adam_v));
    } else {
      model_ = std::make_unique<Model>(config_.model,
                                       mix_seed(run_seed, seed_tag::init));
      opt_ = std::make_unique<Adam>(model_->parameters(),
                                    AdamParams{config_.learning_rate});
    }
    run_seed_ = run_seed;

    if (config_.mode == TrainMode::episodic) {
      // The stream itself never draws unlabeled images; the surrogate batch
      // has its own seed stream so lambda=0 runs stay bit-identical.
      stream_ = std::make_unique<EpisodeStream>(
          dataset_, split_.train_classes, config_.k, 0, nullptr,
          mix_seed(run_seed, seed_tag::episodes));
      surrogate_on_ = surrogate_on;
    }

    std::ofstream log;
    if (!config_.log_path.empty()) {
      if (config_.log_path.has_parent_path())
        fs::create_directories(config_.log_path.parent_path());
      log.open(config_.log_path, start_step == 0 ? std::ios::trunc : std::ios::app);
      if (!log)
        throw Error(ErrorKind::IoError,
                    "cannot open log: " + config_.log_path.string());
    }

    for (std::uint64_t step = start_step;
         step < static_cast<std::uint64_t>(config_.iterations); ++step) {
      StepRecord rec = config_.mode == TrainMode::episodic ? episodic_step(step)
                                                           : regular_step(step);
      append_log_line(log, step, rec);

      if (config_.checkpoint_every > 0 &&
          (step + 1) % static_cast<std::uint64_t>(config_.checkpoint_every) == 0 &&
          step + 1 < static_cast<std::uint64_t>(config_.iterations))
        save(step + 1, checkpoint_name(step + 1));

      if (config_.eval_every > 0 &&
          (step + 1) % static_cast<std::uint64_t>(config_.eval_every) == 0)
        periodic_eval(step + 1);
    }

    save(static_cast<std::uint64_t>(config_.iterations), config_.checkpoint_path);
    return config_.checkpoint_path;
  }

 private:
  fs::path checkpoint_name(std::uint64_t step) const {
    fs::path p = config_.checkpoint_path;
    p += ".step" + std::to_string(step);
    return p;
  }

  void save(std::uint64_t next_step, const fs::path& path) {
    CheckpointExtra extra;
    extra.present = true;
    extra.next_step = next_step;
    extra.train_seed = run_seed_;
    extra.adam_t = opt_->t();
    extra.adam_m = opt_->m();
    extra.adam_v = opt_->v();
    save_checkpoint(*model_, path, &extra);
  }

  void periodic_eval(std::uint64_t step) {
    if (config_.log_path.empty()) return;
    EvalReport r = evaluate(*model_, dataset_, split_.test_classes, config_.k,
                            static_cast<std::uint64_t>(config_.eval_episodes),
                            mix_seed(run_seed_, seed_tag::eval, step));
    fs::path eval_path = config_.log_path;
    eval_path += ".eval";
    std::ofstream out(eval_path, step == static_cast<std::uint64_t>(config_.eval_every)
                                     ? std::ios::trunc
                                     : std::ios::app);
    nlohmann::json line{{"step", step},
                        {"mean_dsc", r.mean_dsc},
                        {"std_dsc", r.std_dsc},
                        {"episodes", r.n_episodes},
                        {"unscorable", r.unscorable}};
    out << line.dump() << '\n';
  }

  Episode sample_for_step(std::uint64_t step, int retry, int episode_slot) {
    // Slot 0 of retry 0 is exactly the stream's episode for this step; any
    // other draw derives a fresh seed so the retry sequence is reproducible.
    if (retry == 0 && episode_slot == 0) return stream_->at(step);
    const std::uint64_t seed =
        mix_seed(stream_->base_seed(), step,
                 static_cast<std::uint64_t>(retry) * 1000003ULL +
                     static_cast<std::uint64_t>(episode_slot) + 1);
    return sample_episode(dataset_, split_.train_classes, config_.k, 0, nullptr,
                          seed);
  }

  StepRecord episodic_step(std::uint64_t step) {
    UnlabeledBatch batch;
    const UnlabeledBatch* batch_ptr = nullptr;
    if (surrogate_on_) {
      batch = make_unlabeled_batch(pool_->images(), config_.u, config_.copies,
                                   config_.sigma,
                                   mix_seed(run_seed_, seed_tag::surrogate, step));
      batch_ptr = &batch;
    }

    for (int retry = 0; retry < config_.resample_limit; ++retry) {
      std::vector<Episode> episodes;
      episodes.reserve(config_.episodes_per_step);
      for (int e = 0; e < config_.episodes_per_step; ++e)
        episodes.push_back(sample_for_step(step, retry, e));
      try {
        StepRecord rec;
        rec.loss = multi_episode_step(episodes, batch_ptr);
        rec.seed = episodes.front().seed;
        rec.episode_class = episodes.front().class_id;
        for (std::size_t i = 1; i < episodes.size(); ++i)
          rec.episode_class += "+" + episodes[i].class_id;
        return rec;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyMask) throw;
      }
    }
    throw Error(ErrorKind::ExhaustedResampling,
                "step " + std::to_string(step) + ": " +
                    std::to_string(config_.resample_limit) +
                    " consecutive episodes had no usable support mask");
  }

  LossReport multi_episode_step(const std::vector<Episode>& episodes,
                                const UnlabeledBatch* batch) {
    if (episodes.size() == 1)
      return train_step(*model_, *opt_, episodes.front(), batch, config_.lambda);

    model_->set_training(true);
    model_->zero_grad();

    // Mean of the per-episode losses, built as a chain of scaled adds.
    const double w = 1.0 / static_cast<double>(episodes.size());
    ad::Var few = ad::constant(Tensor::scalar(0.0));
    double few_value = 0.0;
    for (const auto& ep : episodes) {
      ad::Var node = episode_loss_node(*model_, ep);
      few_value += w * node->value.item();
      few = ad::add_scaled(few, node, w);
    }

    ad::Var total = few;
    double sur_value = 0.0;
    if (config_.lambda > 0.0 && batch != nullptr && batch->size() > 0) {
      ad::Var sur = surrogate_loss_node(*model_, *batch);
      sur_value = sur->value.item();
      total = ad::add_scaled(few, sur, config_.lambda);
    }

    ad::backward(total);
    opt_->step();
    model_->set_training(false);

    LossReport report;
    report.few_shot = few_value;
    report.surrogate = sur_value;
    report.lambda = config_.lambda;
    report.total = joint_loss(few_value, sur_value, config_.lambda);
    return report;
  }

  StepRecord regular_step(std::uint64_t step) {
    Rng rng(mix_seed(run_seed_, seed_tag::regular, step));

    std::vector<int> train_indices;
    for (const auto& id : split_.train_classes)
      train_indices.push_back(dataset_.class_index(id));

    model_->set_training(true);
    model_->zero_grad();

    // Supervised batch without prototypes: each image is decoded against its
    // own global context vector so the decoder input keeps the same layout
    // the prototype path uses at evaluation time.
    const double w = 1.0 / static_cast<double>(config_.batch_size);
    ad::Var total = ad::constant(Tensor::scalar(0.0));
    double loss_value = 0.0;
    std::string classes;
    for (int b = 0; b < config_.batch_size; ++b) {
      const int ci = train_indices[rng.uniform_below(train_indices.size())];
      const std::size_t ei = rng.uniform_below(dataset_.entries[ci].size());
      classes += (b ? "+" : "") + dataset_.classes[ci];

      ad::Var f = model_->encode(ad::constant(image_to_tensor(dataset_.images[ci][ei])));
      ad::Var ctx = ad::spatial_mean(f);
      ad::Var pred = model_->decode(model_->fuse(f, ctx));
      ad::Var loss = ad::bce_mean(pred, mask_to_tensor(dataset_.masks[ci][ei]));
      loss_value += w * loss->value.item();
      total = ad::add_scaled(total, loss, w);
    }

    ad::backward(total);
    opt_->step();
    model_->set_training(false);

    StepRecord rec;
    rec.loss.few_shot = loss_value;
    rec.loss.surrogate = 0.0;
    rec.loss.lambda = config_.lambda;
    rec.loss.total = joint_loss(loss_value, 0.0, config_.lambda);
    rec.episode_class = classes;
    rec.seed = mix_seed(run_seed_, seed_tag::regular, step);
    return rec;
  }

  TrainConfig config_;
  const ClassDataset& dataset_;
  const UnlabeledPool* pool_;
  DatasetSplit split_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<Adam> opt_;
  std::unique_ptr<EpisodeStream> stream_;
  std::uint64_t run_seed_ = 0;
  bool surrogate_on_ = false;
};

}  // namespace

fs::path train_with_data(const TrainConfig& config, const ClassDataset& dataset,
                         const UnlabeledPool* pool, const fs::path& resume_from) {
  TrainLoop loop(config, dataset, pool);
  return loop.run(resume_from);
}

fs::path train(const TrainConfig& config, const fs::path& resume_from) {
  config.validate();
  ClassDataset dataset =
      load_class_dataset(config.data_root, config.model.input_h, config.model.input_w);
  UnlabeledPool pool;
  const UnlabeledPool* pool_ptr = nullptr;
  if (config.mode == TrainMode::episodic && config.lambda > 0.0 && config.u > 0) {
    pool = UnlabeledPool::from_directory(config.pool_dir, config.model.input_h,
                                         config.model.input_w, config.model.channels);
    pool_ptr = &pool;
  }
  return train_with_data(config, dataset, pool_ptr, resume_from);
}

fs::path train_regular(TrainConfig config, const fs::path& resume_from) {
  config.mode = TrainMode::regular;
  return train(config, resume_from);
}

}  // namespace protoseg
