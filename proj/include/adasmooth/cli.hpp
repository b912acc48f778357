#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adasmooth/adasmooth.hpp"

namespace adasmooth::cli {

namespace detail {

inline void log_resolved(std::ostream& err, const std::string& command, const std::string& body) {
  err << "# " << command << " resolved configuration\n";
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) err << "#   " << line << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

struct TrainFlags {
  std::string config;
  std::string data;
  std::string out;
  std::optional<double> lr, lambda, bump_p, t, fixed_fwhm_mm;
  std::optional<int> max_epochs, patience;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--data", data, "dataset directory (with manifest.csv)")->required();
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--lambda", lambda, "L2 weight on the classifier");
    app->add_option("--max-epochs", max_epochs);
    app->add_option("--patience", patience);
    app->add_option("--seed", seed);
    app->add_option("--bump-p", bump_p, "single-cell bump probability");
    app->add_option("--t", t, "truncation parameter");
    app->add_option("--fixed-fwhm-mm", fixed_fwhm_mm, "train a fixed-FWHM baseline instead");
  }

  TrainConfig resolve(double voxel_mm) const {
    TrainConfig cfg = config.empty() ? TrainConfig{} : load_config(config);
    if (lr) cfg.learning_rate = *lr;
    if (lambda) cfg.lambda_l2 = *lambda;
    if (bump_p) cfg.bump_probability = *bump_p;
    if (t) cfg.truncation_t = *t;
    if (max_epochs) cfg.max_epochs = *max_epochs;
    if (patience) cfg.patience = *patience;
    if (seed) cfg.seed = *seed;
    if (fixed_fwhm_mm) cfg.fixed_sigma = fwhm_mm_to_sigma(*fixed_fwhm_mm, voxel_mm);
    cfg.validate();
    return cfg;
  }
};

}  // namespace detail

/// Runs one command. Returns 0 on success, 1 for usage errors, 2 for data
/// errors, 3 for numerical failures; errors go to `err` prefixed `ERROR <code>:`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive Gaussian smoothing for volumetric decoding", "adasmooth"};
  app.require_subcommand(1);

  // gen-phantom
  std::string spec_path, out_dir;
  std::uint64_t seed = 1;
  auto* gen = app.add_subcommand("gen-phantom", "generate a synthetic two-class dataset");
  gen->add_option("--spec", spec_path, "phantom spec file (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", seed);

  // add-noise
  std::string in_path, out_path;
  double sigma = 0.0;
  auto* noise = app.add_subcommand("add-noise", "add iid Gaussian noise to a volume");
  noise->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  noise->add_option("--sigma", sigma)->required();
  noise->add_option("--seed", seed);
  noise->add_option("--out", out_path)->required();

  // estimate-noise
  auto* estimate = app.add_subcommand("estimate-noise", "Laplacian noise estimate of a volume");
  estimate->add_option("--in", in_path)->required()->check(CLI::ExistingFile);

  // smooth
  std::optional<double> sigma_f, fwhm_mm, voxel_mm;
  double t = kDefaultTruncation;
  auto* sm = app.add_subcommand("smooth", "smooth a volume with a fixed Gaussian");
  sm->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  auto* sigma_opt = sm->add_option("--sigma-f", sigma_f, "filter sigma in voxels");
  auto* fwhm_opt = sm->add_option("--fwhm-mm", fwhm_mm, "filter FWHM in millimetres");
  sigma_opt->excludes(fwhm_opt);
  sm->add_option("--voxel-mm", voxel_mm, "voxel size for --fwhm-mm (default: from the file)");
  sm->add_option("--t", t);
  sm->add_option("--out", out_path)->required();

  // train / grid-search
  detail::TrainFlags train_flags, grid_flags;
  auto* tr = app.add_subcommand("train", "train the adaptive (or a fixed-FWHM) model");
  train_flags.attach(tr);
  auto* gs = app.add_subcommand("grid-search", "log-scale grid over learning rate and L2 weight");
  grid_flags.attach(gs);

  // evaluate
  std::string weights_dir, data_dir, split_name = "test";
  std::optional<double> eval_fwhm;
  auto* ev = app.add_subcommand("evaluate", "per-noise-level accuracy table");
  ev->add_option("--weights", weights_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--fixed-fwhm-mm", eval_fwhm, "smooth with this FWHM instead of the params net");
  ev->add_option("--split", split_name, "train, validation or test");
  ev->add_option("--t", t);

  // inspect-filter
  double inspect_sigma = 1.0, inspect_voxel = 3.0;
  auto* insp = app.add_subcommand("inspect-filter", "dump a Gaussian filter and its FWHM");
  insp->add_option("--sigma-f", inspect_sigma)->required();
  insp->add_option("--t", t);
  insp->add_option("--voxel-mm", inspect_voxel);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ERROR 1: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*gen) {
      PhantomSpec spec = spec_path.empty() ? PhantomSpec{} : load_phantom_spec(spec_path);
      detail::log_resolved(err, "gen-phantom", spec.describe() + "seed = " + std::to_string(seed) + "\n");
      const Phantom ph = generate_phantom(spec, seed);
      const DatasetManifest m = write_phantom(ph, out_dir);
      out << "wrote " << m.entries.size() << " volumes to " << out_dir << '\n' << ph.log;
    } else if (*noise) {
      detail::log_resolved(err, "add-noise", "sigma = " + std::to_string(sigma) + "\nseed = " + std::to_string(seed) + "\n");
      write_volume(add_gaussian_noise(read_volume(in_path), sigma, seed), out_path);
    } else if (*estimate) {
      const Volume v = read_volume(in_path);
      out << std::setprecision(8) << "feature " << noise_feature(v) << "\nsigma_hat " << calibrated_noise_estimate(v)
          << '\n';
    } else if (*sm) {
      if (!sigma_f && !fwhm_mm) throw UsageError("smooth: give exactly one of --sigma-f or --fwhm-mm");
      const Volume v = read_volume(in_path);
      const double s = sigma_f ? *sigma_f : fwhm_mm_to_sigma(*fwhm_mm, voxel_mm.value_or(v.voxel_size_mm()));
      const GaussianFilter f = build_filter(s, t);
      detail::log_resolved(err, "smooth",
                           "sigma_f = " + adasmooth::detail::shortest(s) + "\nt = " + adasmooth::detail::shortest(t) +
                               "\nradius = " + std::to_string(f.radius) + "\n");
      write_volume(smooth(v, f), out_path);
    } else if (*tr || *gs) {
      const auto& flags = *tr ? train_flags : grid_flags;
      const Dataset ds = load_dataset(flags.data);
      const TrainConfig cfg = flags.resolve(ds.voxel_size_mm());
      detail::log_resolved(err, *tr ? "train" : "grid-search", cfg.describe());
      std::filesystem::create_directories(flags.out);
      detail::open_out(std::filesystem::path(flags.out) / "config.resolved") << cfg.describe();
      if (*tr) {
        const TrainResult r = train(cfg, ds, std::nullopt, &err);
        save_model(r.model, flags.out);
        auto csv = detail::open_out(std::filesystem::path(flags.out) / "train_report.csv");
        write_epoch_csv(r.report, csv);
        auto summary = detail::open_out(std::filesystem::path(flags.out) / "summary.txt");
        write_summary(r.report, summary);
        write_summary(r.report, out);
      } else {
        const GridResult g = grid_search(cfg, ds, &err);
        auto csv = detail::open_out(std::filesystem::path(flags.out) / "grid_results.csv");
        write_grid_csv(g, csv);
        write_grid_csv(g, out);
        if (!g.best) throw NumericalError("grid-search: every cell failed");
        out << "selected learning_rate " << g.rows[*g.best].learning_rate << " lambda_l2 "
            << g.rows[*g.best].lambda_l2 << '\n';
      }
    } else if (*ev) {
      const Dataset ds = load_dataset(data_dir);
      const Model model = load_model(weights_dir);
      TrainConfig cfg;
      cfg.truncation_t = t;
      std::optional<double> fixed;
      if (eval_fwhm) fixed = fwhm_mm_to_sigma(*eval_fwhm, ds.voxel_size_mm());
      detail::log_resolved(err, "evaluate",
                           "split = " + split_name + "\nt = " + adasmooth::detail::shortest(t) + "\nfixed_sigma = " +
                               (fixed ? adasmooth::detail::shortest(*fixed) : std::string("none")) + "\n");
      const EvalTable table = evaluate(model, ds, parse_split(split_name), cfg, fixed);
      write_accuracy_table(table, ds.voxel_size_mm(), out);
    } else if (*insp) {
      const GaussianFilter f = build_filter(inspect_sigma, t);
      dump_filter(out, f);
      out << std::fixed << std::setprecision(4) << "radius " << f.radius << "\nside " << (2 * f.radius + 1)
          << "\nsingle_cell " << (f.single_cell() ? "yes" : "no") << "\nfwhm_mm "
          << sigma_to_fwhm_mm(inspect_sigma, inspect_voxel) << " (voxel " << inspect_voxel << " mm)\n";
    }
  } catch (const Error& e) {
    err << "ERROR " << e.exit_code() << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "ERROR 2: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace adasmooth::cli
