#pragma once

// Alternating two-network optimization: per scene, one descent step on the
// main network under the current weight map, then one on the tutoring
// network against the frozen error map. Baseline and sf-only modes drop the
// tutoring half and use unit weights.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>

#include "tutornet/curriculum.hpp"
#include "tutornet/nets.hpp"
#include "tutornet/serialize.hpp"
#include "tutornet/synth.hpp"

namespace tutornet {

enum class TrainMode { baseline, sf_only, sf_plus_tutornet };

inline TrainMode parse_mode(const std::string& s) {
  if (s == "baseline") return TrainMode::baseline;
  if (s == "sf" || s == "sf-only") return TrainMode::sf_only;
  if (s == "sf-tn" || s == "sf-plus-tutornet") return TrainMode::sf_plus_tutornet;
  throw NetError("unknown mode '" + s + "' (baseline, sf, sf-tn)");
}

inline std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::sf_only: return "sf";
    case TrainMode::sf_plus_tutornet: return "sf-tn";
  }
  return "?";
}

struct Optimizer {
  enum class Kind { sgd, sgd_momentum } kind = Kind::sgd;
  double momentum = 0.9;
};

struct TrainConfig {
  CurriculumParams curriculum;
  int epochs = 6;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::sf_plus_tutornet;
  NetworkSpec main_spec;
  NetworkSpec tutor_spec;
  Optimizer optimizer;
  int checkpoint_every = 0;  // epochs; 0 = final only
  double sigma = 15.0;
  int downsample = 8;
  std::filesystem::path out_dir;  // empty = no files written

  // Mode-effective scale factor: the baseline trains on raw density maps.
  double effective_scale() const {
    return mode == TrainMode::baseline ? 1.0 : curriculum.scale_factor;
  }
  bool uses_tutor() const { return mode == TrainMode::sf_plus_tutornet; }
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double main_loss = 0.0;
  std::optional<double> tutor_loss;
  std::optional<double> mean_weight;
  std::optional<double> min_weight;
  std::optional<double> max_weight;
  double mean_error = 0.0;
};

struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& quantity, double value)
      : std::runtime_error("divergence: " + quantity + " = " + std::to_string(value)),
        quantity(quantity),
        value(value) {}
  std::string quantity;
  double value;
};

struct SgdState {
  std::vector<std::vector<double>> velocity;
};

namespace detail {

inline void sgd_update(NetworkParams& params, const Optimizer& opt, double lr,
                       SgdState& state) {
  if (state.velocity.size() != params.tensors.size())
    state.velocity.assign(params.tensors.size(), {});
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& t = params.tensors[i];
    if (!t.has_grad()) continue;
    const auto& g = t.grad();
    auto& v = t.mutable_values();
    if (opt.kind == Optimizer::Kind::sgd_momentum) {
      auto& vel = state.velocity[i];
      if (vel.size() != v.size()) vel.assign(v.size(), 0.0);
      for (std::size_t j = 0; j < v.size(); ++j) {
        vel[j] = opt.momentum * vel[j] + g[j];
        v[j] -= lr * vel[j];
      }
    } else {
      for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * g[j];
    }
  }
}

inline void check_finite(const char* quantity, double v) {
  if (!std::isfinite(v) || std::abs(v) > 1e12) throw DivergenceError(quantity, v);
}

}  // namespace detail

inline StepRecord train_step(const AnnotatedScene& scene, const DensityMap& gt,
                             const TrainConfig& cfg, NetworkParams& main_params,
                             NetworkParams& tutor_params, SgdState* main_state = nullptr,
                             SgdState* tutor_state = nullptr) {
  SgdState local_main, local_tutor;
  if (!main_state) main_state = &local_main;
  if (!tutor_state) tutor_state = &local_tutor;

  Tensor pred = forward(cfg.main_spec, main_params, scene.image);
  ErrorMap e = error_map(pred, gt);

  WeightMap w{Tensor::filled(pred.shape(), 1.0)};
  if (cfg.uses_tutor())
    w = WeightMap{forward(cfg.tutor_spec, tutor_params, scene.image)};

  Tensor lm = main_loss(pred, gt, w);
  detail::check_finite("main_loss", lm.item());
  main_params.zero_grads();
  lm.backward();
  detail::sgd_update(main_params, cfg.optimizer, cfg.curriculum.alpha_main, *main_state);

  StepRecord rec;
  rec.main_loss = lm.item();
  {
    double acc = 0.0;
    for (double v : e.grid.values()) acc += v;
    rec.mean_error = acc / static_cast<double>(e.grid.numel());
  }

  if (cfg.uses_tutor()) {
    Tensor lt = tutor_loss(w, e, cfg.curriculum.margin);
    detail::check_finite("tutor_loss", lt.item());
    tutor_params.zero_grads();
    lt.backward();
    detail::sgd_update(tutor_params, cfg.optimizer, cfg.curriculum.alpha_tutor,
                       *tutor_state);
    rec.tutor_loss = lt.item();
    const auto& wv = w.grid.values();
    double mn = wv[0], mx = wv[0], acc = 0.0;
    for (double v : wv) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      acc += v;
    }
    rec.mean_weight = acc / static_cast<double>(wv.size());
    rec.min_weight = mn;
    rec.max_weight = mx;
  }
  return rec;
}

struct TrainResult {
  NetworkParams main_params;
  NetworkParams tutor_params;
  std::vector<StepRecord> records;
  bool diverged = false;
  std::string diagnostic;
};

inline TrainResult train(const std::vector<AnnotatedScene>& dataset, TrainConfig cfg) {
  if (dataset.empty()) throw SceneError("train: dataset is empty");
  if (cfg.epochs < 1) throw SceneError("train: epochs must be >= 1");
  cfg.curriculum.validate();
  set_weight_floor(cfg.tutor_spec, cfg.curriculum.t_floor);

  double s = cfg.effective_scale();
  std::vector<DensityMap> gts;
  gts.reserve(dataset.size());
  for (const auto& scene : dataset)
    gts.push_back(make_density_map(scene, cfg.sigma, cfg.downsample, s));

  TrainResult out;
  out.main_params = init_params(cfg.main_spec, cfg.seed + 1);
  if (cfg.uses_tutor()) out.tutor_params = init_params(cfg.tutor_spec, cfg.seed + 2);

  auto checkpoint = [&](const std::string& stem) {
    if (cfg.out_dir.empty()) return;
    write_checkpoint(cfg.out_dir / (stem + ".ckpt"), cfg.main_spec, out.main_params,
                     cfg.seed, s, cfg.sigma);
    if (cfg.uses_tutor())
      write_checkpoint(cfg.out_dir / (stem + "_tutor.ckpt"), cfg.tutor_spec,
                       out.tutor_params, cfg.seed, s, cfg.sigma);
  };

  Rng shuffle_rng(cfg.seed);
  SgdState main_state, tutor_state;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs && !out.diverged; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t idx : order) {
      try {
        StepRecord rec = train_step(dataset[idx], gts[idx], cfg, out.main_params,
                                    out.tutor_params, &main_state, &tutor_state);
        rec.epoch = epoch;
        rec.step = ++step;
        out.records.push_back(rec);
      } catch (const DivergenceError& e) {
        out.diverged = true;
        out.diagnostic = std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                         ", scene " + dataset[idx].id;
        break;
      }
    }
    if (!out.diverged && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
        epoch != cfg.epochs)
      checkpoint("main_epoch" + std::to_string(epoch));
  }
  if (!out.diverged) checkpoint("main");
  return out;
}

// ---- count metrics (dataset-level MAE / root-mean-square MSE) --------------

inline std::pair<double, double> count_metrics(
    const std::vector<std::pair<double, double>>& pred_gt) {
  if (pred_gt.empty()) throw SceneError("count_metrics: empty input");
  double abs_acc = 0.0, sq_acc = 0.0;
  for (const auto& [pred, gt] : pred_gt) {
    double d = pred - gt;
    abs_acc += std::abs(d);
    sq_acc += d * d;
  }
  double n = static_cast<double>(pred_gt.size());
  return {abs_acc / n, std::sqrt(sq_acc / n)};
}

struct SceneEval {
  std::string id;
  double pred_count = 0.0;
  double gt_count = 0.0;
};

struct EvalResult {
  double mae = 0.0;
  double mse = 0.0;
  std::vector<SceneEval> scenes;
};

// Predicted count = sum(prediction) / s; ground truth is the annotation
// count. Pure forwards, no graph capture.
inline EvalResult evaluate(const std::vector<AnnotatedScene>& dataset,
                           const NetworkParams& main_params, const TrainConfig& cfg) {
  if (dataset.empty()) throw SceneError("evaluate: dataset is empty");
  NoGradGuard ng;
  double s = cfg.effective_scale();
  EvalResult out;
  out.scenes.reserve(dataset.size());
  std::vector<std::pair<double, double>> counts;
  counts.reserve(dataset.size());
  for (const auto& scene : dataset) {
    Tensor pred = forward(cfg.main_spec, main_params, scene.image);
    double total = 0.0;
    for (double v : pred.values()) total += v;
    double pred_count = total / s;
    double gt_count = static_cast<double>(scene.points.size());
    out.scenes.push_back({scene.id, pred_count, gt_count});
    counts.emplace_back(pred_count, gt_count);
  }
  auto [mae, mse] = count_metrics(counts);
  out.mae = mae;
  out.mse = mse;
  return out;
}

// ---- CSV telemetry ----------------------------------------------------------

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string records_csv(const std::vector<StepRecord>& records) {
  std::string out = "epoch,step,main_loss,tutor_loss,mean_weight,min_weight,max_weight,mean_error\n";
  auto opt = [](const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); };
  for (const StepRecord& r : records) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
           csv_number(r.main_loss) + "," + opt(r.tutor_loss) + "," + opt(r.mean_weight) +
           "," + opt(r.min_weight) + "," + opt(r.max_weight) + "," +
           csv_number(r.mean_error) + "\n";
  }
  return out;
}

inline std::string eval_csv(const EvalResult& result) {
  std::string out = "scene_id,pred_count,gt_count\n";
  for (const SceneEval& s : result.scenes)
    out += s.id + "," + csv_number(s.pred_count) + "," + csv_number(s.gt_count) + "\n";
  return out;
}

}  // namespace tutornet
