#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "adasmooth/classifier.hpp"
#include "adasmooth/conv3d.hpp"
#include "adasmooth/dataset.hpp"
#include "adasmooth/error.hpp"
#include "adasmooth/gaussian_filter.hpp"
#include "adasmooth/params_net.hpp"

namespace adasmooth {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.1;
  double lambda_l2 = 0.0;
  int max_epochs = 200;
  int patience = 10;
  double bump_probability = 0.5;
  double truncation_t = kDefaultTruncation;
  std::uint64_t seed = 1;
  std::size_t params_width = 50;
  /// Bypass the params net and smooth every volume with this sigma_f.
  std::optional<double> fixed_sigma;
  /// Upper bound on sigma_f; 0 picks the largest sigma whose filter still fits
  /// the volume.
  double sigma_max = 0.0;
  std::vector<double> lr_grid{1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> lambda_grid{0.0, 1e-5, 1e-4, 1e-3, 1e-2};

  void validate() const {
    if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be >= 0");
    if (!(lambda_l2 >= 0.0)) throw UsageError("lambda_l2 must be >= 0");
    if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
    if (patience < 1) throw UsageError("patience must be >= 1");
    if (!(bump_probability >= 0.0 && bump_probability <= 1.0)) {
      throw UsageError("bump_probability must be in [0, 1]");
    }
    if (!(truncation_t > 0.0)) throw UsageError("truncation_t must be positive");
    if (params_width == 0) throw UsageError("params_width must be >= 1");
    if (fixed_sigma && !(*fixed_sigma > 0.0)) throw UsageError("fixed_sigma must be positive");
    if (!(sigma_max >= 0.0)) throw UsageError("sigma_max must be >= 0");
  }

  /// Applies one `key = value` setting. Unknown keys are rejected.
  void set(const std::string& key, const std::string& value) {
    auto number = [&]() {
      try {
        std::size_t used = 0;
        const double x = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
      } catch (const std::logic_error&) {
        throw UsageError("config: '" + key + "' expects a number, got '" + value + "'");
      }
    };
    auto list = [&]() {
      std::vector<double> xs;
      for (const auto& f : detail::split(value, ',')) {
        try {
          xs.push_back(std::stod(f));
        } catch (const std::logic_error&) {
          throw UsageError("config: bad list entry '" + f + "' for " + key);
        }
      }
      if (xs.empty()) throw UsageError("config: empty list for " + key);
      return xs;
    };
    if (key == "learning_rate") learning_rate = number();
    else if (key == "lambda_l2") lambda_l2 = number();
    else if (key == "max_epochs") max_epochs = static_cast<int>(number());
    else if (key == "patience") patience = static_cast<int>(number());
    else if (key == "bump_probability") bump_probability = number();
    else if (key == "truncation_t") truncation_t = number();
    else if (key == "seed") seed = static_cast<std::uint64_t>(number());
    else if (key == "params_width") params_width = static_cast<std::size_t>(number());
    else if (key == "fixed_sigma") {
      if (value == "none" || value.empty()) fixed_sigma.reset();
      else fixed_sigma = number();
    } else if (key == "sigma_max") sigma_max = number();
    else if (key == "lr_grid") lr_grid = list();
    else if (key == "lambda_grid") lambda_grid = list();
    else throw UsageError("config: unknown key '" + key + "'");
  }

  /// Resolved settings, one `key = value` per line.
  std::string describe() const {
    std::ostringstream os;
    auto join = [](const std::vector<double>& xs) {
      std::string s;
      for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + detail::shortest(xs[i]);
      return s;
    };
    os << "learning_rate = " << detail::shortest(learning_rate) << '\n'
       << "lambda_l2 = " << detail::shortest(lambda_l2) << '\n'
       << "max_epochs = " << max_epochs << '\n'
       << "patience = " << patience << '\n'
       << "bump_probability = " << detail::shortest(bump_probability) << '\n'
       << "truncation_t = " << detail::shortest(truncation_t) << '\n'
       << "seed = " << seed << '\n'
       << "params_width = " << params_width << '\n'
       << "fixed_sigma = " << (fixed_sigma ? detail::shortest(*fixed_sigma) : "none") << '\n'
       << "sigma_max = " << detail::shortest(sigma_max) << '\n'
       << "lr_grid = " << join(lr_grid) << '\n'
       << "lambda_grid = " << join(lambda_grid) << '\n';
    return os.str();
  }
};

/// `key = value` lines; `#` starts a comment.
inline TrainConfig parse_config(std::istream& in, TrainConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  return parse_config(in);
}

/// Largest sigma_f whose filter side 2r+1 still fits in `min_side` voxels.
inline double max_supported_sigma(std::size_t min_side, double t) {
  const double r_max = std::floor((static_cast<double>(min_side) - 1.0) / 2.0);
  // r <= r_max  <=>  t * sigma + 0.5 < 2 (r_max + 1)
  return std::nextafter((2.0 * (r_max + 1.0) - 0.5) / t, 0.0);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Model {
  ParamsNetWeights params;
  ClassifierWeights classifier;
  std::optional<double> fixed_sigma;

  static Model initial(const Dataset& ds, const TrainConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    Model m;
    m.params = ParamsNetWeights::random(cfg.params_width, rng);
    m.classifier = ClassifierWeights::xavier(ds.dims(), rng);
    m.fixed_sigma = cfg.fixed_sigma;
    return m;
  }

  bool operator==(const Model&) const = default;
};

/// Writes params_net.txt, classifier.txt and model.txt into `dir`.
inline void save_model(const Model& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_params_net(m.params, dir / "params_net.txt");
  save_classifier(m.classifier, dir / "classifier.txt");
  std::ofstream out(dir / "model.txt", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "model.txt").string());
  out << "fixed_sigma = " << (m.fixed_sigma ? detail::shortest(*m.fixed_sigma) : "none") << '\n';
}

inline Model load_model(const std::filesystem::path& dir) {
  Model m;
  m.params = load_params_net(dir / "params_net.txt");
  m.classifier = load_classifier(dir / "classifier.txt");
  std::ifstream in(dir / "model.txt");
  std::string line;
  if (in && std::getline(in, line)) {
    const auto eq = line.find('=');
    const auto value = eq == std::string::npos ? std::string{} : detail::trim(line.substr(eq + 1));
    if (!value.empty() && value != "none") m.fixed_sigma = std::stod(value);
  }
  return m;
}

// ---------------------------------------------------------------------------
// One mini-batch through the whole graph
// ---------------------------------------------------------------------------

struct PassOptions {
  bool training = false;
  bool compute_gradients = false;
  double bump_probability = 0.5;
  double truncation_t = kDefaultTruncation;
  double sigma_max = std::numeric_limits<double>::infinity();
  /// Overrides the model's sigma source when set.
  std::optional<double> fixed_sigma;
};

struct EventCounts {
  std::size_t clamp = 0;  // params-net pre-activation clamped
  std::size_t bump = 0;   // single-cell bump fired
  std::size_t cap = 0;    // sigma_f limited to sigma_max

  EventCounts& operator+=(const EventCounts& o) {
    clamp += o.clamp;
    bump += o.bump;
    cap += o.cap;
    return *this;
  }
  bool operator==(const EventCounts&) const = default;
};

struct BatchPass {
  double loss = 0.0;
  std::vector<double> probabilities;
  std::vector<int> labels;
  std::vector<double> sigmas;  // sigma_f actually used per volume
  EventCounts events;
  ParamsNetGrad params_grad;
  std::vector<double> classifier_grad;
  double classifier_bias_grad = 0.0;
};

/// Forward (and optionally backward) pass over one mini-batch:
/// feature -> map_to_sigma -> degenerate policy -> cap -> filter -> smooth ->
/// classifier -> BCE. `presmoothed`, when given, holds the already smoothed
/// volume for every dataset sample (fixed-sigma runs only).
inline BatchPass run_batch(const Model& model, const Dataset& ds, const MiniBatch& batch, const PassOptions& opt,
                           std::mt19937_64& rng, const std::vector<Volume>* presmoothed = nullptr) {
  const std::size_t n = batch.members.size();
  const std::optional<double> fixed = opt.fixed_sigma ? opt.fixed_sigma : model.fixed_sigma;
  const bool adaptive = !fixed.has_value();
  const bool want_sigma_grad = opt.compute_gradients && adaptive;

  BatchPass out;
  out.sigmas.resize(n);
  out.labels.resize(n);
  std::vector<Volume> smoothed;
  smoothed.reserve(presmoothed ? 0 : n);
  std::vector<double> logits(n);
  std::vector<double> tangent_dot_w(n, 0.0);  // <w, dZ_i/dsigma>
  std::vector<bool> sigma_passes_grad(n, false);

  for (std::size_t b = 0; b < n; ++b) {
    const Sample& s = ds.samples[batch.members[b]];
    out.labels[b] = s.label;
    double sigma = 0.0;
    bool grad_ok = true;
    if (adaptive) {
      const SigmaMapping m = map_to_sigma(s.feature, model.params);
      if (m.clamped) ++out.events.clamp;
      grad_ok = !m.clamped;
      const DegenerateDecision d =
          apply_degenerate_policy(m.sigma_f, opt.truncation_t, opt.bump_probability, opt.training, rng);
      if (d.bumped) ++out.events.bump;
      sigma = d.sigma_f;
      if (sigma > opt.sigma_max) {
        sigma = opt.sigma_max;
        ++out.events.cap;
        grad_ok = false;
      }
    } else {
      sigma = std::min(*fixed, opt.sigma_max);
    }
    out.sigmas[b] = sigma;
    sigma_passes_grad[b] = grad_ok;

    const Volume* z = nullptr;
    if (presmoothed && !adaptive) {
      z = &(*presmoothed)[batch.members[b]];
    } else {
      const GaussianFilter f = build_filter(sigma, opt.truncation_t);
      if (want_sigma_grad && grad_ok && !f.single_cell()) {
        SmoothTangent st = smooth_with_tangent(s.volume, f);
        tangent_dot_w[b] = logit(st.tangent.data(), model.classifier) - model.classifier.bias;
        smoothed.push_back(std::move(st.smoothed));
      } else {
        smoothed.push_back(smooth(s.volume, f));
      }
      z = &smoothed.back();
    }
    logits[b] = logit(z->data(), model.classifier);
  }

  const ClassifierForward fwd = forward_logits(std::move(logits));
  out.probabilities = fwd.probabilities;
  out.loss = bce_loss(out.probabilities, out.labels);
  if (!opt.compute_gradients) return out;

  const std::vector<double> g = backward_logits(fwd, out.labels);
  out.classifier_grad.assign(model.classifier.w.size(), 0.0);
  out.params_grad = ParamsNetGrad(model.params.width());
  for (std::size_t b = 0; b < n; ++b) {
    const Volume& z = presmoothed && !adaptive ? (*presmoothed)[batch.members[b]] : smoothed[b];
    const auto zd = z.data();
    for (std::size_t k = 0; k < zd.size(); ++k) out.classifier_grad[k] += g[b] * zd[k];
    out.classifier_bias_grad += g[b];
    if (want_sigma_grad && sigma_passes_grad[b]) {
      const double dl_dsigma = g[b] * tangent_dot_w[b];
      out.params_grad += map_to_sigma_backward(ds.samples[batch.members[b]].feature, model.params, dl_dsigma);
    }
  }
  return out;
}

/// Plain SGD step, with the L2 gradient on the classifier weights (not bias).
inline void sgd_step(Model& model, const BatchPass& pass, double lr, double lambda) {
  const L2Penalty pen = l2_penalty(model.classifier, lambda);
  for (std::size_t k = 0; k < model.classifier.w.size(); ++k) {
    model.classifier.w[k] -= lr * (pass.classifier_grad[k] + pen.gradient[k]);
  }
  model.classifier.bias -= lr * pass.classifier_bias_grad;
  if (model.fixed_sigma) return;
  auto& p = model.params;
  const auto& g = pass.params_grad;
  for (std::size_t m = 0; m < p.width(); ++m) {
    p.a[m] -= lr * g.a[m];
    p.b[m] -= lr * g.b[m];
    p.v[m] -= lr * g.v[m];
  }
  p.c -= lr * g.c;
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when `loss` is a new best.
  bool update(int epoch, double loss) {
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const noexcept { return since_best_ >= patience_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct NoiseRow {
  double noise_level = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  double mean_sigma = 0.0;
  double mean_fwhm_mm = 0.0;
};

struct EvalTable {
  std::vector<NoiseRow> rows;  // ascending noise level; absent levels omitted
  double accuracy = 0.0;
  double loss = 0.0;  // mean batch loss
  std::optional<double> fixed_sigma;
  EventCounts events;

  const NoiseRow* row(double noise) const {
    for (const auto& r : rows)
      if (std::abs(r.noise_level - noise) < 1e-12) return &r;
    return nullptr;
  }
};

inline PassOptions eval_options(const TrainConfig& cfg, const Dataset& ds) {
  PassOptions opt;
  opt.training = false;
  opt.compute_gradients = false;
  opt.bump_probability = cfg.bump_probability;
  opt.truncation_t = cfg.truncation_t;
  opt.sigma_max = cfg.sigma_max > 0.0 ? cfg.sigma_max : max_supported_sigma(ds.dims().min_side(), cfg.truncation_t);
  return opt;
}

/// Per-noise-level accuracy on one split. Batches are the split's (subject,
/// noise) groups, standardized with their own statistics. With `fixed_sigma`
/// every volume is smoothed with that sigma_f instead of the params net output.
inline EvalTable evaluate(const Model& model, const Dataset& ds, Split split, const TrainConfig& cfg,
                          std::optional<double> fixed_sigma = std::nullopt,
                          const std::vector<Volume>* presmoothed = nullptr) {
  const auto batches = group_batches(ds, split);
  if (batches.empty()) throw DataError("evaluate: split " + to_string(split) + " is empty");
  PassOptions opt = eval_options(cfg, ds);
  opt.fixed_sigma = fixed_sigma;
  std::mt19937_64 rng(cfg.seed);

  struct Acc {
    std::size_t n = 0, correct = 0, batches = 0;
    double sigma = 0.0, loss = 0.0;
  };
  std::map<double, Acc> by_noise;
  EvalTable table;
  table.fixed_sigma = fixed_sigma ? fixed_sigma : model.fixed_sigma;
  std::size_t total = 0, correct = 0;
  for (const auto& b : batches) {
    const BatchPass pass = run_batch(model, ds, b, opt, rng, presmoothed);
    table.events += pass.events;
    auto& acc = by_noise[b.noise_level];
    const auto right = static_cast<std::size_t>(
        std::llround(accuracy(pass.probabilities, pass.labels) * static_cast<double>(pass.labels.size())));
    acc.n += pass.labels.size();
    acc.correct += right;
    acc.batches += 1;
    acc.loss += pass.loss;
    for (double s : pass.sigmas) acc.sigma += s;
    total += pass.labels.size();
    correct += right;
    table.loss += pass.loss;
  }
  table.loss /= static_cast<double>(batches.size());
  table.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  const double voxel = ds.voxel_size_mm();
  for (const auto& [noise, a] : by_noise) {
    NoiseRow r;
    r.noise_level = noise;
    r.count = a.n;
    r.accuracy = static_cast<double>(a.correct) / static_cast<double>(a.n);
    r.loss = a.loss / static_cast<double>(a.batches);
    r.mean_sigma = a.sigma / static_cast<double>(a.n);
    r.mean_fwhm_mm = sigma_to_fwhm_mm(r.mean_sigma, voxel);
    table.rows.push_back(r);
  }
  return table;
}

/// Smooths every sample once with a fixed sigma_f.
inline std::vector<Volume> presmooth(const Dataset& ds, double sigma, double t) {
  const GaussianFilter f = build_filter(sigma, t);
  std::vector<Volume> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(smooth(s.volume, f));
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  double mean_sigma = 0.0;  // over training volumes this epoch

  bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  int stop_epoch = 0;
  double best_validation_loss = 0.0;
  double best_validation_accuracy = 0.0;
  std::optional<EvalTable> test;
  EventCounts events;
  double bump_probability = 0.0;
  double voxel_size_mm = 3.0;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::array<std::uint64_t, 1> out{};
  seq.generate(reinterpret_cast<std::uint32_t*>(out.data()),
               reinterpret_cast<std::uint32_t*>(out.data()) + 2);
  return out[0];
}

inline std::string diagnose(const BatchPass& pass, const MiniBatch& b) {
  std::ostringstream os;
  os << "non-finite loss on batch (subject " << b.subject << ", noise " << b.noise_level << "); sigma_f =";
  for (double s : pass.sigmas) os << ' ' << s;
  os << "; clamp events " << pass.events.clamp << ", cap events " << pass.events.cap;
  return os.str();
}

}  // namespace detail

/// Mini-batch SGD over the training split with validation-loss early
/// stopping. Returns the best-validation model. Starts from `initial` when
/// given, otherwise from Model::initial(ds, cfg).
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, std::optional<Model> initial = std::nullopt,
                         std::ostream* log = nullptr) {
  cfg.validate();
  if (ds.count(Split::train) == 0) throw DataError("train: no training volumes");
  if (ds.count(Split::validation) == 0) throw DataError("train: no validation volumes");

  Model model = initial ? std::move(*initial) : Model::initial(ds, cfg);
  if (cfg.fixed_sigma) model.fixed_sigma = cfg.fixed_sigma;
  if (model.classifier.dims != ds.dims()) throw DataError("train: model dims do not match dataset");

  PassOptions train_opt = eval_options(cfg, ds);
  train_opt.training = true;
  train_opt.compute_gradients = true;

  std::optional<std::vector<Volume>> cache;
  if (model.fixed_sigma) cache = presmooth(ds, std::min(*model.fixed_sigma, train_opt.sigma_max), cfg.truncation_t);
  const std::vector<Volume>* pre = cache ? &*cache : nullptr;

  TrainReport report;
  report.bump_probability = cfg.bump_probability;
  report.voxel_size_mm = ds.voxel_size_mm();
  EarlyStopping stopper(cfg.patience);
  Model best = model;
  std::mt19937_64 bump_rng(detail::mix_seed(cfg.seed, 0xb0b));

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(ds, Split::train, detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t volumes = 0;
    for (const auto& b : batches) {
      const BatchPass pass = run_batch(model, ds, b, train_opt, bump_rng, pre);
      report.events += pass.events;
      if (!std::isfinite(pass.loss)) throw NumericalError(detail::diagnose(pass, b));
      rec.train_loss += pass.loss;
      for (double s : pass.sigmas) rec.mean_sigma += s;
      volumes += pass.sigmas.size();
      sgd_step(model, pass, cfg.learning_rate, cfg.lambda_l2);
    }
    rec.train_loss /= static_cast<double>(batches.size());
    rec.mean_sigma /= static_cast<double>(volumes);

    const EvalTable val = evaluate(model, ds, Split::validation, cfg, std::nullopt, pre);
    report.events += val.events;
    if (!std::isfinite(val.loss)) throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.validation_loss = val.loss;
    rec.validation_accuracy = val.accuracy;
    report.epochs.push_back(rec);
    if (log) {
      *log << "epoch " << epoch << " train_loss " << rec.train_loss << " val_loss " << rec.validation_loss
           << " val_acc " << rec.validation_accuracy << " mean_sigma " << rec.mean_sigma << '\n';
    }
    if (stopper.update(epoch, val.loss)) {
      best = model;
      report.best_validation_accuracy = val.accuracy;
    }
    report.stop_epoch = epoch;
    if (stopper.should_stop()) break;
  }
  report.best_epoch = stopper.best_epoch();
  report.best_validation_loss = stopper.best_loss();
  if (ds.count(Split::test) > 0) report.test = evaluate(best, ds, Split::test, cfg, std::nullopt, pre);
  return {std::move(best), std::move(report)};
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridRow {
  double learning_rate = 0.0;
  double lambda_l2 = 0.0;
  bool ok = false;
  std::string error;
  double validation_accuracy = 0.0;
  double validation_loss = std::numeric_limits<double>::infinity();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::optional<std::size_t> best;  // index into rows
};

/// Trains one model per (lr, lambda) pair. Picks the highest validation
/// accuracy, then the lower validation loss, then the lower lr. A failing cell
/// is recorded and the sweep continues.
inline GridResult grid_search(const TrainConfig& cfg, const Dataset& ds, std::ostream* log = nullptr) {
  if (cfg.lr_grid.empty() || cfg.lambda_grid.empty()) throw UsageError("grid_search: empty grid");
  GridResult result;
  for (double lr : cfg.lr_grid) {
    for (double lambda : cfg.lambda_grid) {
      TrainConfig c = cfg;
      c.learning_rate = lr;
      c.lambda_l2 = lambda;
      GridRow row;
      row.learning_rate = lr;
      row.lambda_l2 = lambda;
      try {
        const TrainResult r = train(c, ds);
        row.ok = true;
        row.validation_accuracy = r.report.best_validation_accuracy;
        row.validation_loss = r.report.best_validation_loss;
        row.best_epoch = r.report.best_epoch;
        if (r.report.test) row.test_accuracy = r.report.test->accuracy;
      } catch (const Error& e) {
        row.error = e.what();
      }
      if (log) {
        *log << "grid lr " << lr << " lambda " << lambda << (row.ok ? " val_acc " : " FAILED ")
             << (row.ok ? std::to_string(row.validation_accuracy) : row.error) << '\n';
      }
      result.rows.push_back(std::move(row));
    }
  }
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    if (!r.ok) continue;
    if (!result.best) {
      result.best = i;
      continue;
    }
    const auto& b = result.rows[*result.best];
    if (std::tie(b.validation_accuracy, r.validation_loss, r.learning_rate) <
        std::tie(r.validation_accuracy, b.validation_loss, b.learning_rate)) {
      result.best = i;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline void write_epoch_csv(const TrainReport& r, std::ostream& os) {
  const auto old = os.precision(10);
  os << "epoch,train_loss,validation_loss,validation_accuracy,mean_sigma\n";
  for (const auto& e : r.epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ',' << e.validation_accuracy << ','
       << e.mean_sigma << '\n';
  }
  os.precision(old);
}

inline void write_grid_csv(const GridResult& g, std::ostream& os) {
  const auto old = os.precision(10);
  os << "learning_rate,lambda_l2,status,validation_accuracy,validation_loss,test_accuracy,best_epoch,selected\n";
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    const auto& r = g.rows[i];
    os << r.learning_rate << ',' << r.lambda_l2 << ',' << (r.ok ? "ok" : "failed") << ',' << r.validation_accuracy
       << ',' << r.validation_loss << ',' << r.test_accuracy << ',' << r.best_epoch << ','
       << (g.best && *g.best == i ? 1 : 0) << '\n';
  }
  os.precision(old);
}

/// Accuracy per noise level in one column, headed either by the fixed FWHM or
/// "Adaptive" (with the mean FWHM per level in parentheses).
inline void write_accuracy_table(const EvalTable& t, double voxel_mm, std::ostream& os) {
  std::ostringstream head;
  if (t.fixed_sigma) {
    head << "FWHM " << std::fixed << std::setprecision(1) << sigma_to_fwhm_mm(*t.fixed_sigma, voxel_mm);
  } else {
    head << "Adaptive (mean FWHM mm)";
  }
  os << std::left << std::setw(8) << "Noise" << head.str() << '\n';
  for (const auto& r : t.rows) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(1) << 100.0 * r.accuracy;
    if (!t.fixed_sigma) cell << " (" << std::setprecision(1) << r.mean_fwhm_mm << ")";
    std::ostringstream noise;
    noise << std::fixed << std::setprecision(1) << r.noise_level;
    os << std::left << std::setw(8) << noise.str() << cell.str() << '\n';
  }
}

inline void write_summary(const TrainReport& r, std::ostream& os) {
  os << "best_epoch " << r.best_epoch << "\nstop_epoch " << r.stop_epoch << "\nbest_validation_loss "
     << r.best_validation_loss << "\nbest_validation_accuracy " << r.best_validation_accuracy
     << "\nbump_probability " << r.bump_probability << "\nclamp_events " << r.events.clamp << "\nbump_events "
     << r.events.bump << "\ncap_events " << r.events.cap << '\n';
  if (r.test) {
    os << "test_accuracy " << r.test->accuracy << "\n\n";
    write_accuracy_table(*r.test, r.voxel_size_mm, os);
  }
}

}  // namespace adasmooth
