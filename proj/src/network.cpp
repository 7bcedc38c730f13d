#include "protoseg/network.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "protoseg/error.hpp"

namespace protoseg {

using json = nlohmann::json;

namespace layers {

void Conv2d::init(int in, int out, int k, int p, int dil, Rng& rng) {
  in_ch = in;
  out_ch = out;
  kernel = k;
  pad = p;
  dilation = dil;
  Tensor w(out, in, k, k);
  // Fan-in-scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
  const double bound = std::sqrt(6.0 / (static_cast<double>(in) * k * k));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  weight = ad::make_var(std::move(w));
  bias = ad::make_var(Tensor(1, out, 1, 1));
}

void BatchNorm2d::init(int ch) {
  gamma = ad::make_var(Tensor(1, ch, 1, 1, 1.0));
  beta = ad::make_var(Tensor(1, ch, 1, 1, 0.0));
  running_mean = Tensor(1, ch, 1, 1, 0.0);
  running_var = Tensor(1, ch, 1, 1, 1.0);
}

}  // namespace layers

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  Rng rng(mix_seed(init_seed, 0x6d6f64656cULL));  // "model"

  auto add_param = [&](const std::string& name, ad::Var v, ParamGroup g) {
    params_.push_back({name, std::move(v), g});
  };

  enc_blocks_.resize(4);
  int in_ch = cfg_.channels;
  for (int b = 0; b < 4; ++b) {
    const int out_ch = cfg_.encoder_channels[b];
    const int dil = b < 2 ? 1 : 2;
    for (int j = 0; j < cfg_.convs_per_block[b]; ++j) {
      layers::Conv2d conv;
      conv.init(j == 0 ? in_ch : out_ch, out_ch, 3, dil, dil, rng);
      enc_blocks_[b].push_back(conv);
      const std::string base =
          "encoder.block" + std::to_string(b) + ".conv" + std::to_string(j);
      add_param(base + ".weight", enc_blocks_[b][j].weight, ParamGroup::encoder);
      add_param(base + ".bias", enc_blocks_[b][j].bias, ParamGroup::encoder);
    }
    in_ch = out_ch;
  }

  const int M = cfg_.feature_dim();
  int dec_in = cfg_.fused_channels();
  for (int i = 0; i < 2; ++i) {
    dec_convs_[i].init(dec_in, cfg_.decoder_channels[i], 3, 1, 1, rng);
    dec_bns_[i].init(cfg_.decoder_channels[i]);
    const std::string base = "decoder.block" + std::to_string(i);
    add_param(base + ".conv.weight", dec_convs_[i].weight, ParamGroup::decoder);
    add_param(base + ".conv.bias", dec_convs_[i].bias, ParamGroup::decoder);
    add_param(base + ".bn.gamma", dec_bns_[i].gamma, ParamGroup::decoder);
    add_param(base + ".bn.beta", dec_bns_[i].beta, ParamGroup::decoder);
    dec_in = cfg_.decoder_channels[i];
  }
  dec_final_.init(dec_in, 1, 1, 0, 1, rng);
  add_param("decoder.final.weight", dec_final_.weight, ParamGroup::decoder);
  add_param("decoder.final.bias", dec_final_.bias, ParamGroup::decoder);

  int den_in = M;
  for (int i = 0; i < 2; ++i) {
    den_convs_[i].init(den_in, cfg_.denoise_channels[i], 3, 1, 1, rng);
    den_bns_[i].init(cfg_.denoise_channels[i]);
    const std::string base = "denoise.block" + std::to_string(i);
    add_param(base + ".conv.weight", den_convs_[i].weight, ParamGroup::denoise);
    add_param(base + ".conv.bias", den_convs_[i].bias, ParamGroup::denoise);
    add_param(base + ".bn.gamma", den_bns_[i].gamma, ParamGroup::denoise);
    add_param(base + ".bn.beta", den_bns_[i].beta, ParamGroup::denoise);
    den_in = cfg_.denoise_channels[i];
  }
  den_final_.init(den_in, cfg_.channels, 1, 0, 1, rng);
  add_param("denoise.final.weight", den_final_.weight, ParamGroup::denoise);
  add_param("denoise.final.bias", den_final_.bias, ParamGroup::denoise);
}

void Model::check_divisible(const Tensor& t) const {
  if (t.h() % 4 != 0 || t.w() % 4 != 0)
    throw Error(ErrorKind::IndivisibleInput,
                "input spatial dims must be divisible by 4, got " +
                    std::to_string(t.h()) + "x" + std::to_string(t.w()));
}

ad::Var Model::encode(const ad::Var& images) {
  check_divisible(images->value);
  ad::Var x = images;
  for (int b = 0; b < 4; ++b) {
    for (const auto& conv : enc_blocks_[b]) x = ad::relu(conv(x));
    if (b < 2) x = ad::maxpool2(x);
  }
  return x;
}

ad::Var Model::decode(const ad::Var& fused) {
  ad::Var x = fused;
  for (int i = 0; i < 2; ++i) {
    x = ad::upsample2(x);
    x = dec_convs_[i](x);
    x = dec_bns_[i](x, training_);
    x = ad::relu(x);
  }
  return ad::sigmoid(dec_final_(x));
}

ad::Var Model::denoise(const ad::Var& corrupted) {
  ad::Var x = encode(corrupted);
  for (int i = 0; i < 2; ++i) {
    x = ad::upsample2(x);
    x = den_convs_[i](x);
    x = den_bns_[i](x, training_);
    x = ad::relu(x);
  }
  return ad::sigmoid(den_final_(x));
}

ad::Var Model::fuse(const ad::Var& query_features, const ad::Var& prototype) {
  const Tensor& f = query_features->value;
  if (prototype->value.c() != f.c())
    throw Error(ErrorKind::DimensionMismatch,
                "prototype dimensionality disagrees with query features");
  if (cfg_.fusion == FusionMode::concat) {
    // prototype is (n, M, 1, 1); n == 1 for episodic queries, n == batch for
    // the per-image context vectors of regular training.
    ad::Var broad = ad::broadcast_spatial(prototype, f.h(), f.w());
    return ad::concat_channels(query_features, broad);
  }
  return ad::cosine_map(query_features, prototype);
}

ad::Var Model::fewshot_forward(const Tensor& support_images,
                               const std::vector<Mask>& support_masks_ds,
                               const std::vector<int>& valid,
                               const Tensor& query_images) {
  ad::Var supports = ad::constant(support_images);
  ad::Var fs = encode(supports);
  ad::Var proto = ad::masked_mean_pool(fs, support_masks_ds, valid);
  ad::Var fq = encode(ad::constant(query_images));
  return decode(fuse(fq, proto));
}

std::vector<NamedBuffer> Model::buffers() {
  std::vector<NamedBuffer> out;
  for (int i = 0; i < 2; ++i) {
    const std::string base = "decoder.block" + std::to_string(i) + ".bn";
    out.push_back({base + ".running_mean", &dec_bns_[i].running_mean});
    out.push_back({base + ".running_var", &dec_bns_[i].running_var});
  }
  for (int i = 0; i < 2; ++i) {
    const std::string base = "denoise.block" + std::to_string(i) + ".bn";
    out.push_back({base + ".running_mean", &den_bns_[i].running_mean});
    out.push_back({base + ".running_var", &den_bns_[i].running_var});
  }
  return out;
}

void Model::zero_grad() {
  for (auto& p : params_) {
    if (p.var->grad.size() != p.var->value.size())
      p.var->grad = Tensor(p.var->value.n(), p.var->value.c(), p.var->value.h(),
                           p.var->value.w());
    else
      p.var->grad.zero();
  }
}

std::uint64_t Model::parameter_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over raw parameter bytes
  auto absorb = [&](const Tensor& t) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) absorb(p.var->value);
  return h;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

// --- value-level operations ---------------------------------------------------

namespace {

class EvalModeGuard {
 public:
  explicit EvalModeGuard(Model& m) : model_(m), was_(m.training()) {
    model_.set_training(false);
  }
  ~EvalModeGuard() { model_.set_training(was_); }

 private:
  Model& model_;
  bool was_;
};

}  // namespace

FeatureMap encode(Model& model, const Image& image) {
  EvalModeGuard guard(model);
  ad::Var out = model.encode(ad::constant(image_to_tensor(image)));
  return FeatureMap{out->value, model.config().stride()};
}

Prototype masked_average_pool(const FeatureMap& features, const Mask& mask,
                              const std::string& class_id) {
  const Tensor& f = features.data;
  if (mask.height != f.h() || mask.width != f.w())
    throw Error(ErrorKind::ShapeMismatch,
                "mask resolution must equal feature resolution");
  const long area = mask.foreground();
  if (area == 0) throw Error(ErrorKind::EmptyMask, "mask has no foreground");
  Prototype p;
  p.class_id = class_id;
  p.values.assign(f.c(), 0.0);
  for (int c = 0; c < f.c(); ++c) {
    double s = 0.0;
    for (int y = 0; y < f.h(); ++y)
      for (int x = 0; x < f.w(); ++x)
        if (mask.at(y, x)) s += f.at(0, c, y, x);
    p.values[c] = s / static_cast<double>(area);
  }
  return p;
}

Prototype aggregate_prototypes(const std::vector<Prototype>& protos) {
  if (protos.empty())
    throw Error(ErrorKind::EmptyMask, "no prototypes to aggregate");
  const std::size_t M = protos.front().values.size();
  for (const auto& p : protos) {
    if (p.class_id != protos.front().class_id)
      throw Error(ErrorKind::MixedClasses,
                  "cannot aggregate prototypes of different classes");
    if (p.values.size() != M)
      throw Error(ErrorKind::DimensionMismatch, "prototype widths disagree");
  }
  Prototype out;
  out.class_id = protos.front().class_id;
  out.values.assign(M, 0.0);
  for (const auto& p : protos)
    for (std::size_t i = 0; i < M; ++i) out.values[i] += p.values[i];
  for (auto& v : out.values) v /= static_cast<double>(protos.size());
  return out;
}

Tensor fuse_and_decode(Model& model, const Prototype& prototype,
                       const FeatureMap& query_features) {
  if (static_cast<int>(prototype.values.size()) != query_features.data.c())
    throw Error(ErrorKind::DimensionMismatch,
                "prototype dimensionality disagrees with query features");
  EvalModeGuard guard(model);
  Tensor pv(1, static_cast<int>(prototype.values.size()), 1, 1);
  for (std::size_t i = 0; i < prototype.values.size(); ++i) pv[i] = prototype.values[i];
  ad::Var fq = ad::constant(query_features.data);
  ad::Var fused = model.fuse(fq, ad::constant(std::move(pv)));
  return model.decode(fused)->value;
}

Image denoise_forward(Model& model, const Image& corrupted) {
  EvalModeGuard guard(model);
  ad::Var out = model.denoise(ad::constant(image_to_tensor(corrupted)));
  return tensor_to_image(out->value);
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
  return json{{"input_h", c.input_h},
              {"input_w", c.input_w},
              {"channels", c.channels},
              {"encoder_channels", c.encoder_channels},
              {"convs_per_block", c.convs_per_block},
              {"decoder_channels", c.decoder_channels},
              {"denoise_channels", c.denoise_channels},
              {"fusion", to_string(c.fusion)},
              {"stride", c.stride()}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.input_h = j.at("input_h").get<int>();
  c.input_w = j.at("input_w").get<int>();
  c.channels = j.at("channels").get<int>();
  auto arr4 = [&](const char* key, std::array<int, 4>& dst) {
    auto v = j.at(key).get<std::vector<int>>();
    if (v.size() != 4) throw Error(ErrorKind::CorruptCheckpoint, "bad config array");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  auto arr2 = [&](const char* key, std::array<int, 2>& dst) {
    auto v = j.at(key).get<std::vector<int>>();
    if (v.size() != 2) throw Error(ErrorKind::CorruptCheckpoint, "bad config array");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  arr4("encoder_channels", c.encoder_channels);
  arr4("convs_per_block", c.convs_per_block);
  arr2("decoder_channels", c.decoder_channels);
  arr2("denoise_channels", c.denoise_channels);
  c.fusion = j.at("fusion").get<std::string>() == "cosine" ? FusionMode::cosine
                                                           : FusionMode::concat;
  return c;
}

struct ArrayEntry {
  std::string name;
  std::array<int, 4> shape;
  std::uint64_t offset;  // doubles into the blob
  std::uint64_t count;
};

struct CheckpointFile {
  json header;
  std::vector<double> blob;
};

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw Error(ErrorKind::CorruptCheckpoint, "bad magic in " + path.string());
  if (version != kVersion)
    throw Error(ErrorKind::CorruptCheckpoint, "unsupported checkpoint version");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  std::uint64_t blob_count = 0;
  in.read(reinterpret_cast<char*>(&blob_count), sizeof blob_count);
  CheckpointFile file;
  file.blob.resize(blob_count);
  in.read(reinterpret_cast<char*>(file.blob.data()),
          static_cast<std::streamsize>(blob_count * sizeof(double)));
  if (!in) throw Error(ErrorKind::CorruptCheckpoint, "truncated checkpoint file");
  try {
    file.header = json::parse(header_text);
  } catch (const json::exception&) {
    throw Error(ErrorKind::CorruptCheckpoint, "unparseable checkpoint header");
  }
  return file;
}

void apply_arrays(Model& model, const CheckpointFile& file, CheckpointExtra* extra) {
  const json& arrays = file.header.at("arrays");
  auto find_array = [&](const std::string& name) -> const json& {
    for (const auto& a : arrays)
      if (a.at("name").get<std::string>() == name) return a;
    throw Error(ErrorKind::CorruptCheckpoint, "missing array: " + name);
  };
  auto load_tensor = [&](const json& entry, Tensor& dst, const std::string& name) {
    auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 4)
      throw Error(ErrorKind::CorruptCheckpoint, "bad shape for " + name);
    if (shape[0] != dst.n() || shape[1] != dst.c() || shape[2] != dst.h() ||
        shape[3] != dst.w())
      throw Error(ErrorKind::ShapeMismatch,
                  "stored shape disagrees with model for " + name);
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t cnt = entry.at("count").get<std::uint64_t>();
    if (cnt != dst.size() || off + cnt > file.blob.size())
      throw Error(ErrorKind::CorruptCheckpoint, "array bounds for " + name);
    std::copy(file.blob.begin() + static_cast<std::ptrdiff_t>(off),
              file.blob.begin() + static_cast<std::ptrdiff_t>(off + cnt),
              dst.data());
  };

  for (auto& p : model.parameters()) load_tensor(find_array(p.name), p.var->value, p.name);
  for (auto& b : model.buffers()) load_tensor(find_array(b.name), *b.tensor, b.name);

  if (extra) {
    extra->present = file.header.value("has_optimizer", false);
    if (extra->present) {
      extra->next_step = file.header.at("next_step").get<std::uint64_t>();
      extra->train_seed = file.header.at("train_seed").get<std::uint64_t>();
      extra->adam_t = file.header.at("adam_t").get<long>();
      extra->adam_m.clear();
      extra->adam_v.clear();
      for (auto& p : model.parameters()) {
        Tensor m(p.var->value.n(), p.var->value.c(), p.var->value.h(), p.var->value.w());
        Tensor v = m;
        load_tensor(find_array("adam.m." + p.name), m, p.name);
        load_tensor(find_array("adam.v." + p.name), v, p.name);
        extra->adam_m.push_back(std::move(m));
        extra->adam_v.push_back(std::move(v));
      }
    }
  }
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const CheckpointExtra* extra) {
  json arrays = json::array();
  std::vector<double> blob;
  auto append = [&](const std::string& name, const Tensor& t) {
    arrays.push_back(json{{"name", name},
                          {"shape", t.shape()},
                          {"offset", blob.size()},
                          {"count", t.size()}});
    blob.insert(blob.end(), t.data(), t.data() + t.size());
  };
  for (const auto& p : model.parameters()) append(p.name, p.var->value);
  for (auto& b : model.buffers()) append(b.name, *b.tensor);

  json header{{"format", "protoseg-checkpoint"},
              {"format_version", kVersion},
              {"config", config_to_json(model.config())},
              {"has_optimizer", extra != nullptr && extra->present}};
  if (extra && extra->present) {
    header["next_step"] = extra->next_step;
    header["train_seed"] = extra->train_seed;
    header["adam_t"] = extra->adam_t;
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      append("adam.m." + params[i].name, extra->adam_m[i]);
      append("adam.v." + params[i].name, extra->adam_v[i]);
    }
  }
  header["arrays"] = arrays;
  const std::string header_text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  const std::uint64_t blob_count = blob.size();
  out.write(reinterpret_cast<const char*>(&blob_count), sizeof blob_count);
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::IoError, "short write: " + path.string());
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path,
                                       CheckpointExtra* extra) {
  CheckpointFile file = read_checkpoint_file(path);
  ModelConfig cfg = config_from_json(file.header.at("config"));
  auto model = std::make_unique<Model>(cfg, 0);
  apply_arrays(*model, file, extra);
  return model;
}

void load_weights_into(Model& model, const std::filesystem::path& path,
                       CheckpointExtra* extra) {
  CheckpointFile file = read_checkpoint_file(path);
  ModelConfig cfg = config_from_json(file.header.at("config"));
  if (!(cfg == model.config()))
    throw Error(ErrorKind::ShapeMismatch,
                "checkpoint config differs from model config");
  apply_arrays(model, file, extra);
}

void load_encoder_weights(Model& model, const std::filesystem::path& path) {
  CheckpointFile file = read_checkpoint_file(path);
  const json& arrays = file.header.at("arrays");
  for (auto& p : model.parameters()) {
    if (p.group != ParamGroup::encoder) continue;
    const json* found = nullptr;
    for (const auto& a : arrays)
      if (a.at("name").get<std::string>() == p.name) {
        found = &a;
        break;
      }
    if (!found)
      throw Error(ErrorKind::ShapeMismatch,
                  "encoder weights missing array: " + p.name);
    auto stored_shape = found->at("shape").get<std::vector<int>>();
    Tensor& dst = p.var->value;
    if (stored_shape.size() != 4 || stored_shape[0] != dst.n() ||
        stored_shape[1] != dst.c() || stored_shape[2] != dst.h() ||
        stored_shape[3] != dst.w())
      throw Error(ErrorKind::ShapeMismatch,
                  "encoder weight shape disagrees for " + p.name);
    const std::uint64_t off = found->at("offset").get<std::uint64_t>();
    const std::uint64_t cnt = found->at("count").get<std::uint64_t>();
    if (cnt != dst.size() || off + cnt > file.blob.size())
      throw Error(ErrorKind::CorruptCheckpoint, "array bounds for " + p.name);
    std::copy(file.blob.begin() + static_cast<std::ptrdiff_t>(off),
              file.blob.begin() + static_cast<std::ptrdiff_t>(off + cnt), dst.data());
  }
}

}  // namespace protoseg
