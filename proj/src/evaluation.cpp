#include "protoseg/evaluation.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "protoseg/error.hpp"

namespace protoseg {

namespace fs = std::filesystem;

double dsc(const Mask& a, const Mask& b) {
  if (!a.same_shape(b))
    throw Error(ErrorKind::ShapeMismatch, "mask shapes differ");
  long inter = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) {
    const std::uint8_t va = a.pix[i], vb = b.pix[i];
    if (va > 1 || vb > 1)
      throw Error(ErrorKind::NonBinaryInput, "mask contains values outside {0, 1}");
    sa += va;
    sb += vb;
    inter += (va & vb);
  }
  if (sa + sb == 0) return 1.0;  // two empty masks agree perfectly
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

Mask predict_episode(Model& model, const Episode& episode) {
  if (episode.k() < 1)
    throw Error(ErrorKind::ConfigError, "episode has no support shots");

  std::vector<Prototype> protos;
  for (int i = 0; i < episode.k(); ++i) {
    FeatureMap f = encode(model, episode.support_images[i]);
    Mask small;
    try {
      small = downsample_mask(episode.support_masks[i], f.data.h(), f.data.w());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::EmptyAfterDownsample) continue;
      throw;
    }
    protos.push_back(masked_average_pool(f, small, episode.class_id));
  }
  if (protos.empty())
    throw Error(ErrorKind::EmptyMask,
                "every support mask vanished at feature resolution");

  const Prototype proto = aggregate_prototypes(protos);
  FeatureMap fq = encode(model, episode.query_image);
  Tensor prob = fuse_and_decode(model, proto, fq);

  Mask pred;
  pred.height = prob.h();
  pred.width = prob.w();
  pred.pix.assign(static_cast<std::size_t>(prob.h()) * prob.w(), 0);
  for (int y = 0; y < prob.h(); ++y)
    for (int x = 0; x < prob.w(); ++x)
      pred.at(y, x) = prob.at(0, 0, y, x) > 0.5 ? 1 : 0;
  return pred;
}

EvalReport evaluate(Model& model, const ClassDataset& dataset,
                    const std::vector<std::string>& allowed_classes, int k,
                    std::uint64_t n_episodes, std::uint64_t seed,
                    const fs::path& overlay_dir) {
  EpisodeStream stream(dataset, allowed_classes, k, 0, nullptr, seed);
  if (!overlay_dir.empty()) fs::create_directories(overlay_dir);

  EvalReport report;
  report.k = k;
  report.seed = seed;

  const std::uint64_t attempt_limit = 10 * n_episodes + 100;
  std::uint64_t idx = 0;
  while (report.per_episode.size() < n_episodes && idx < attempt_limit) {
    Episode ep = stream.at(idx);
    Mask pred;
    try {
      pred = predict_episode(model, ep);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::EmptyMask) {
        ++report.unscorable;
        ++idx;
        continue;
      }
      throw;
    }
    const double score = dsc(pred, ep.query_mask);
    report.per_episode.push_back({idx, ep.class_id, score});
    if (!overlay_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "episode%05llu.png",
                    static_cast<unsigned long long>(idx));
      save_overlay_png(ep.query_image, ep.query_mask, pred, overlay_dir / name);
    }
    ++idx;
  }
  if (report.per_episode.size() < n_episodes)
    throw Error(ErrorKind::ExhaustedResampling,
                "could not score the requested number of episodes");

  report.n_episodes = report.per_episode.size();
  double sum = 0.0;
  for (const auto& s : report.per_episode) sum += s.dsc;
  report.mean_dsc = sum / static_cast<double>(report.n_episodes);
  double sq = 0.0;
  for (const auto& s : report.per_episode) {
    const double d = s.dsc - report.mean_dsc;
    sq += d * d;
  }
  report.std_dsc = std::sqrt(sq / static_cast<double>(report.n_episodes));

  char id[32];
  std::snprintf(id, sizeof id, "%016llx",
                static_cast<unsigned long long>(model.parameter_checksum()));
  report.checkpoint_id = id;
  return report;
}

void write_eval_report(const EvalReport& report, const fs::path& path) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : report.per_episode)
    per.push_back({{"index", s.index}, {"class", s.class_id}, {"dsc", s.dsc}});
  nlohmann::json j{{"mean_dsc", report.mean_dsc},
                   {"std_dsc", report.std_dsc},
                   {"k", report.k},
                   {"n_episodes", report.n_episodes},
                   {"unscorable", report.unscorable},
                   {"checkpoint", report.checkpoint_id},
                   {"seed", report.seed},
                   {"per_episode", per}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write report: " + path.string());
  out << j.dump(2) << '\n';
}

std::string format_eval_summary(const EvalReport& report) {
  char buf[256];
  std::string s;
  s += "checkpoint        shots  episodes  mean DSC  std DSC\n";
  std::snprintf(buf, sizeof buf, "%-16s  %5d  %8llu  %8.4f  %7.4f\n",
                report.checkpoint_id.c_str(), report.k,
                static_cast<unsigned long long>(report.n_episodes),
                report.mean_dsc, report.std_dsc);
  s += buf;
  if (report.unscorable > 0) {
    std::snprintf(buf, sizeof buf, "unscorable episodes skipped: %llu\n",
                  static_cast<unsigned long long>(report.unscorable));
    s += buf;
  }
  return s;
}

}  // namespace protoseg
