#pragma once

// Batch entry points. Exit codes: 0 success, 2 configuration or input
// error, 3 numerical divergence.

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tutornet/config.hpp"
#include "tutornet/gradcheck.hpp"
#include "tutornet/io.hpp"
#include "tutornet/serialize.hpp"
#include "tutornet/trainer.hpp"

namespace tutornet {
namespace cli {

inline std::vector<double> parse_factor_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    double f = detail::to_double("scale-factors", item);
    if (!(f > 0.0)) throw ConfigError("scale factors must be positive, got " + item);
    out.push_back(f);
  }
  if (out.empty()) throw ConfigError("empty --scale-factors list");
  return out;
}

inline int cmd_gen_data(const std::string& recipe_path, long long count,
                        const std::string& out_dir) {
  SceneRecipe recipe;
  if (!recipe_path.empty()) recipe = recipe_from_keys(read_config_file(recipe_path));
  recipe.validate();
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) {
    AnnotatedScene scene = generate_scene(recipe, static_cast<std::uint64_t>(i));
    write_scene(out_dir, scene);
    ids.push_back(scene.id);
  }
  write_manifest(out_dir, ids);
  std::cout << "wrote " << ids.size() << " scenes to " << out_dir << "\n";
  return 0;
}

struct TrainFlags {
  std::string config, data, out, mode, test_data;
  long long seed = -1;
  long long epochs = -1;
  double scale_factor = -1.0, alpha_main = -1.0, alpha_tutor = -1.0;
  double t_floor = -1.0, margin = -1.0;
};

inline int cmd_train(const TrainFlags& f) {
  TrainFileValues v;
  if (!f.config.empty()) v = train_values_from_keys(read_config_file(f.config));
  if (!f.mode.empty()) v.mode = f.mode;
  if (f.seed >= 0) v.seed = static_cast<std::uint64_t>(f.seed);
  if (f.epochs >= 0) v.epochs = static_cast<int>(f.epochs);
  if (f.scale_factor > 0.0) v.curriculum.scale_factor = f.scale_factor;
  if (f.alpha_main > 0.0) v.curriculum.alpha_main = f.alpha_main;
  if (f.alpha_tutor > 0.0) v.curriculum.alpha_tutor = f.alpha_tutor;
  if (f.t_floor > 0.0) v.curriculum.t_floor = f.t_floor;
  if (f.margin > 0.0) v.curriculum.margin = f.margin;

  TrainConfig cfg = build_train_config(v);
  cfg.out_dir = f.out;
  std::vector<AnnotatedScene> dataset = load_dataset(f.data);
  if (dataset.empty()) throw ConfigError("no scenes in " + f.data);

  TrainResult res = train(dataset, cfg);
  atomic_write(cfg.out_dir / "telemetry.csv",
               [&](std::ostream& os) { os << records_csv(res.records); });
  if (res.diverged) {
    std::cerr << "training stopped: " << res.diagnostic << "\n";
    return 3;
  }
  std::vector<AnnotatedScene> eval_set =
      f.test_data.empty() ? dataset : load_dataset(f.test_data);
  EvalResult ev = evaluate(eval_set, res.main_params, cfg);
  atomic_write(cfg.out_dir / "eval.csv", [&](std::ostream& os) { os << eval_csv(ev); });
  std::cout << "MAE " << ev.mae << "\nMSE " << ev.mse << "\n";
  return 0;
}

inline int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                    const std::string& out_csv) {
  Checkpoint ck = read_checkpoint(checkpoint_path);
  auto [spec, params] = restore_network(ck);
  TrainConfig cfg;
  cfg.main_spec = std::move(spec);
  cfg.mode = TrainMode::sf_only;  // counts divide by the recorded factor
  cfg.curriculum.scale_factor = ck.scale_factor;
  cfg.sigma = ck.sigma;
  std::vector<AnnotatedScene> dataset = load_dataset(data_dir);
  if (dataset.empty()) throw ConfigError("no scenes in " + data_dir);
  EvalResult ev = evaluate(dataset, params, cfg);
  std::cout << "MAE " << ev.mae << "\nMSE " << ev.mse << "\n";
  if (out_csv.empty())
    std::cout << eval_csv(ev);
  else
    atomic_write(out_csv, [&](std::ostream& os) { os << eval_csv(ev); });
  return 0;
}

inline int cmd_analyze(const std::string& data_dir, const std::string& factors_csv,
                       const std::string& out_dir, int bins, double sigma,
                       long long export_maps) {
  std::vector<double> factors = parse_factor_list(factors_csv);
  std::vector<AnnotatedScene> dataset = load_dataset(data_dir);
  if (dataset.empty()) throw ConfigError("no scenes in " + data_dir);

  // Pool every unscaled full-resolution map value across the dataset.
  std::vector<double> pooled;
  long long exported = 0;
  for (const auto& scene : dataset) {
    DensityMap map = make_density_map(scene, sigma, 1, 1.0);
    pooled.insert(pooled.end(), map.grid.values().begin(), map.grid.values().end());
    if (exported < export_maps) {
      write_density_pgm(std::filesystem::path(out_dir) / (scene.id + ".pgm"), map);
      write_dmap(std::filesystem::path(out_dir) / (scene.id + ".dmap"), map);
      ++exported;
    }
  }
  // Read the size before the move; argument evaluation order is unspecified.
  const int pooled_n = static_cast<int>(pooled.size());
  DensityMap all{Tensor::from({1, 1, 1, pooled_n}, std::move(pooled)), 1.0, sigma, 1};

  auto hist = value_histogram(all, bins);
  atomic_write(std::filesystem::path(out_dir) / "histogram.csv", [&](std::ostream& os) {
    os << "bin_edge,count\n" << std::setprecision(17);
    for (const auto& [edge, count] : hist) os << edge << "," << count << "\n";
  });

  // Clustering rounds to 4 decimals first; each factor then acts on the
  // quantized lattice, which is what makes the distances scale linearly.
  DensityMap q = quantize4(all);
  atomic_write(std::filesystem::path(out_dir) / "distances.csv", [&](std::ostream& os) {
    os << "scale_factor,group,distance\n" << std::setprecision(17);
    for (double f : factors) {
      auto rows = cluster_distance_analysis(scaled_copy(q, f));
      for (const auto& [group, dist] : rows)
        os << f << "," << group << "," << dist << "\n";
    }
  });
  std::cout << "analyzed " << dataset.size() << " scenes into " << out_dir << "\n";
  return 0;
}

inline int cmd_check_grad() {
  struct Check {
    std::string name;
    double err;
    double tol;
  };
  std::vector<Check> checks;
  Rng rng(20240817);
  auto rand_tensor = [&](Shape shape, double lo, double hi) {
    std::int64_t n = shape_numel(shape);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v));
  };

  {
    Tensor x = rand_tensor({2, 3, 4, 4}, -1.5, 1.5);
    auto f = [](const Tensor& t) {
      return sum(mul(sigmoid(t), add(square(t), relu(t))));
    };
    checks.push_back({"elementwise chain", finite_difference_check(f, x, 1e-5), 1e-6});
  }
  {
    Tensor x = rand_tensor({1, 2, 6, 6}, -1.0, 1.0);
    Tensor k = rand_tensor({3, 2, 3, 3}, -1.0, 1.0);
    Tensor b = rand_tensor({3}, -0.5, 0.5);
    auto wrt_input = [&](const Tensor& t) { return sum(square(conv2d(t, k, b, 2, 1))); };
    auto wrt_kernel = [&](const Tensor& t) { return sum(square(conv2d(x, t, b, 2, 1))); };
    auto wrt_bias = [&](const Tensor& t) { return sum(square(conv2d(x, k, t, 2, 1))); };
    checks.push_back({"conv2d d/dinput", finite_difference_check(wrt_input, x, 1e-5), 1e-6});
    checks.push_back({"conv2d d/dkernel", finite_difference_check(wrt_kernel, k, 1e-5), 1e-6});
    checks.push_back({"conv2d d/dbias", finite_difference_check(wrt_bias, b, 1e-5), 1e-6});
  }
  {
    Tensor x = rand_tensor({1, 1, 6, 6}, 0.0, 1.0);  // distinct values, no ties
    auto f = [](const Tensor& t) { return sum(square(maxpool2d(t, 3, 2))); };
    checks.push_back({"maxpool2d", finite_difference_check(f, x, 1e-6), 1e-5});
  }
  {
    double margin = 0.8;
    Tensor e_vals = rand_tensor({1, 1, 4, 4}, 0.0, 2.0 * margin);
    ErrorMap e{e_vals};
    Tensor w0 = rand_tensor({1, 1, 4, 4}, 0.5, 0.99);
    auto f = [&](const Tensor& t) { return tutor_loss(WeightMap{t}, e, margin); };
    checks.push_back({"tutor_loss d/dw", finite_difference_check(f, w0, 1e-6), 1e-6});
    Tensor analytic = tutor_loss_grad(WeightMap{w0}, e, margin);
    Tensor leaf = Tensor::from(w0.shape(), w0.values(), true);
    tutor_loss(WeightMap{leaf}, e, margin).backward();
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.values().size(); ++i)
      worst = std::max(worst, std::abs(analytic.values()[i] - leaf.grad()[i]));
    checks.push_back({"tutor_loss_grad vs autodiff", worst, 1e-9});
  }
  {
    AnnotatedScene scene{rand_tensor({1, 3, 16, 16}, 0.0, 1.0), {{8.0, 8.0}}, "g"};
    DensityMap gt = make_density_map(scene, 15.0, 8, 100.0);
    WeightMap w{rand_tensor({1, 1, 2, 2}, 0.5, 0.99)};
    Tensor pred0 = rand_tensor({1, 1, 2, 2}, 0.0, 30.0);
    auto f = [&](const Tensor& t) { return main_loss(t, gt, w); };
    checks.push_back({"main_loss d/dpred", finite_difference_check(f, pred0, 1e-5), 1e-6});
  }
  {
    // Seed 8 leaves the final relu live on this input; a dead head would
    // zero every sampled gradient and make the comparison vacuous.
    NetworkSpec spec = main_net_spec("dense-tiny", {1, 1});
    NetworkParams params = init_params(spec, 8);
    Tensor x = rand_tensor({1, 3, 16, 16}, 0.0, 1.0);
    Tensor kernel = params.tensors[0];
    std::vector<std::int64_t> coords;
    for (std::int64_t i = 0; i < kernel.numel(); i += 37) coords.push_back(i);
    auto f = [&](const Tensor& t) {
      NetworkParams p = params;
      p.tensors[0] = t;
      return sum(square(forward(spec, p, x)));
    };
    double live;
    {
      NoGradGuard g;
      live = f(kernel).item();
    }
    double err = live > 0.0
                     ? finite_difference_check_sampled(f, kernel.detach(), 1e-5, coords)
                     : std::numeric_limits<double>::infinity();
    checks.push_back({"dense-tiny d/dstem", err, 1e-4});
  }
  {
    NetworkSpec spec = tutornet_spec(15, {1, 8});
    NetworkParams params = init_params(spec, 3);
    Tensor x = rand_tensor({1, 3, 16, 16}, 0.0, 1.0);
    Tensor kernel = params.tensors[0];
    std::vector<std::int64_t> coords;
    for (std::int64_t i = 0; i < kernel.numel(); i += 11) coords.push_back(i);
    auto f = [&](const Tensor& t) {
      NetworkParams p = params;
      p.tensors[0] = t;
      return sum(square(forward(spec, p, x)));
    };
    checks.push_back({"tutornet-15 d/dstem",
                      finite_difference_check_sampled(f, kernel.detach(), 1e-5, coords),
                      1e-4});
  }

  bool ok = true;
  for (const auto& c : checks) {
    bool pass = c.err <= c.tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << c.name << ": max rel err " << c.err
              << " (tolerance " << c.tol << ")\n";
  }
  return ok ? 0 : 1;
}

}  // namespace cli

inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"Error-driven curriculum training for density regression"};
  app.name("tutornet");
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  std::string gen_recipe, gen_out;
  long long gen_count = 200;
  gen->add_option("--recipe", gen_recipe, "Recipe file (key=value); defaults when omitted");
  gen->add_option("--count", gen_count, "Number of scenes")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a main network (optionally tutored)");
  cli::TrainFlags tf;
  tr->add_option("--config", tf.config, "Training config file (key=value)");
  tr->add_option("--data", tf.data, "Training dataset directory")->required();
  tr->add_option("--out", tf.out, "Output directory for telemetry and checkpoints")
      ->required();
  tr->add_option("--mode", tf.mode, "baseline | sf | sf-tn");
  tr->add_option("--test-data", tf.test_data, "Evaluate on this dataset instead of --data");
  tr->add_option("--seed", tf.seed, "Run seed");
  tr->add_option("--epochs", tf.epochs, "Training epochs");
  tr->add_option("--scale-factor", tf.scale_factor, "Density scale factor s");
  tr->add_option("--alpha-main", tf.alpha_main, "Main network learning rate");
  tr->add_option("--alpha-tutor", tf.alpha_tutor, "Tutoring network learning rate");
  tr->add_option("--t", tf.t_floor, "Weight floor T for easy pixels");
  tr->add_option("--margin", tf.margin, "Error margin M");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--out", ev_out, "Per-scene CSV path (stdout when omitted)");

  auto* an = app.add_subcommand("analyze", "Density value histogram and group distances");
  std::string an_data, an_factors = "1,10,100,1000", an_out = "analysis";
  int an_bins = 50;
  double an_sigma = 15.0;
  long long an_export = 0;
  an->add_option("--data", an_data, "Dataset directory")->required();
  an->add_option("--scale-factors", an_factors, "Comma-separated factors");
  an->add_option("--out", an_out, "Output directory");
  an->add_option("--bins", an_bins, "Histogram bin count")->check(CLI::Range(2, 100000));
  an->add_option("--sigma", an_sigma, "Gaussian kernel sigma in pixels");
  an->add_option("--export-maps", an_export, "Also write the first K maps as PGM+DMAP");

  auto* cg = app.add_subcommand("check-grad", "Run the finite-difference gradient suite");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cli::cmd_gen_data(gen_recipe, gen_count, gen_out);
    if (tr->parsed()) return cli::cmd_train(tf);
    if (ev->parsed()) return cli::cmd_eval(ev_ckpt, ev_data, ev_out);
    if (an->parsed())
      return cli::cmd_analyze(an_data, an_factors, an_out, an_bins, an_sigma, an_export);
    if (cg->parsed()) return cli::cmd_check_grad();
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

inline int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace tutornet
