#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "protoseg/autodiff.hpp"
#include "protoseg/image.hpp"
#include "protoseg/rng.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg {

// Encoded representation at 1/4 input resolution.
struct FeatureMap {
  Tensor data;  // (1, M, h', w')
  int stride = 4;
};

// Foreground-mean feature vector of one class.
struct Prototype {
  std::vector<double> values;
  std::string class_id;
};

enum class FusionMode { concat, cosine };

inline const char* to_string(FusionMode m) {
  return m == FusionMode::concat ? "concat" : "cosine";
}

// Channel widths and geometry of the parametric model. The same code runs the
// paper-scale VGG variant and the CPU-friendly tiny variant; only this struct
// changes.
struct ModelConfig {
  int input_h = 32, input_w = 32;
  int channels = 3;
  // Four encoder blocks; blocks 0-1 end in 2x2 max-pooling, blocks 2-3 use
  // dilation 2 with no pooling, so the output stride is exactly 4.
  std::array<int, 4> encoder_channels = {8, 16, 16, 16};
  std::array<int, 4> convs_per_block = {1, 1, 1, 1};
  std::array<int, 2> decoder_channels = {16, 16};
  std::array<int, 2> denoise_channels = {8, 8};
  FusionMode fusion = FusionMode::concat;

  int feature_dim() const { return encoder_channels[3]; }
  int stride() const { return 4; }
  int fused_channels() const {
    return fusion == FusionMode::concat ? 2 * feature_dim() : 1;
  }
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup { encoder, decoder, denoise };

struct NamedParam {
  std::string name;
  ad::Var var;
  ParamGroup group;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

namespace layers {

struct Conv2d {
  int in_ch = 0, out_ch = 0, kernel = 3, pad = 1, dilation = 1;
  ad::Var weight, bias;

  void init(int in, int out, int k, int p, int dil, Rng& rng);
  ad::Var operator()(const ad::Var& x) const {
    return ad::conv2d(x, weight, bias, pad, dilation);
  }
};

struct BatchNorm2d {
  ad::Var gamma, beta;
  Tensor running_mean, running_var;

  void init(int ch);
  ad::Var operator()(const ad::Var& x, bool training) {
    return ad::batchnorm(x, gamma, beta, running_mean, running_var, training);
  }
};

}  // namespace layers

// Encoder (theta) + segmentation decoder (psi) + denoising head (phi).
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  bool training() const { return training_; }
  void set_training(bool t) { training_ = t; }

  // images: (n, Ch, H, W) with H, W divisible by 4 -> (n, M, H/4, W/4).
  ad::Var encode(const ad::Var& images);
  // fused features at 1/4 resolution -> per-pixel foreground probability at
  // full resolution, (n, 1, H, W) in (0, 1).
  ad::Var decode(const ad::Var& fused);
  // corrupted images -> reconstruction of the same shape, entries in (0, 1).
  ad::Var denoise(const ad::Var& corrupted);

  // Prototype/query fusion per configured mode: query features (n, M, h', w')
  // with a (1, M, 1, 1) context vector.
  ad::Var fuse(const ad::Var& query_features, const ad::Var& prototype);

  // Full few-shot forward pass used by training and inference: encodes
  // supports, pools the prototype over `valid` supports, encodes the query,
  // fuses and decodes.
  ad::Var fewshot_forward(const Tensor& support_images,
                          const std::vector<Mask>& support_masks_ds,
                          const std::vector<int>& valid, const Tensor& query_images);

  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<NamedBuffer> buffers();
  void zero_grad();

  std::uint64_t parameter_checksum() const;
  std::size_t parameter_count() const;

 private:
  void check_divisible(const Tensor& t) const;

  ModelConfig cfg_;
  bool training_ = false;

  std::vector<std::vector<layers::Conv2d>> enc_blocks_;
  std::array<layers::Conv2d, 2> dec_convs_;
  std::array<layers::BatchNorm2d, 2> dec_bns_;
  layers::Conv2d dec_final_;
  std::array<layers::Conv2d, 2> den_convs_;
  std::array<layers::BatchNorm2d, 2> den_bns_;
  layers::Conv2d den_final_;

  std::vector<NamedParam> params_;
};

// --- value-level operations on plain tensors --------------------------------

// Inference-mode encoding of a single image.
FeatureMap encode(Model& model, const Image& image);

// Masked average pooling: arithmetic mean of feature vectors at
// foreground locations of a mask at feature resolution.
Prototype masked_average_pool(const FeatureMap& features, const Mask& mask,
                              const std::string& class_id = "");

// Elementwise mean of k prototypes of one class.
Prototype aggregate_prototypes(const std::vector<Prototype>& protos);

// Broadcast + fuse + decode in inference mode; returns (1, 1, H, W) probabilities.
Tensor fuse_and_decode(Model& model, const Prototype& prototype,
                       const FeatureMap& query_features);

// Inference-mode denoising reconstruction.
Image denoise_forward(Model& model, const Image& corrupted);

// --- checkpoints -------------------------------------------------------------

// Optimizer/progress payload carried alongside the weights so training can
// resume bit-exactly.
struct CheckpointExtra {
  bool present = false;
  std::uint64_t next_step = 0;
  std::uint64_t train_seed = 0;
  long adam_t = 0;
  std::vector<Tensor> adam_m, adam_v;  // aligned with Model::parameters()
};

void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const CheckpointExtra* extra = nullptr);

// Builds a model from the checkpoint's own config block.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path,
                                       CheckpointExtra* extra = nullptr);

// Loads weights into an existing model; the stored config must match exactly.
void load_weights_into(Model& model, const std::filesystem::path& path,
                       CheckpointExtra* extra = nullptr);

// Copies only the encoder parameter arrays (externally supplied pretrained
// weights). Shapes must match the target model's encoder.
void load_encoder_weights(Model& model, const std::filesystem::path& path);

}  // namespace protoseg
