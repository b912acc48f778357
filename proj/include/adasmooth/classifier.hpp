#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "adasmooth/error.hpp"
#include "adasmooth/volume.hpp"

namespace adasmooth {

/// Single sigmoid output over the flattened volume.
struct ClassifierWeights {
  Dims dims{};
  std::vector<double> w;
  double bias = 0.0;

  ClassifierWeights() = default;
  explicit ClassifierWeights(Dims d) : dims(d), w(d.count(), 0.0) {}

  /// Xavier/Glorot uniform: U(-sqrt(6 / (fan_in + 1)), +sqrt(6 / (fan_in + 1))).
  static ClassifierWeights xavier(Dims d, std::mt19937_64& rng) {
    ClassifierWeights cw(d);
    const double limit = std::sqrt(6.0 / (static_cast<double>(d.count()) + 1.0));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& x : cw.w) x = u(rng);
    return cw;
  }

  void validate() const {
    if (w.size() != dims.count()) throw DataError("classifier weights: length does not match dims");
    if (!std::all_of(w.begin(), w.end(), [](double x) { return std::isfinite(x); }) ||
        !std::isfinite(bias)) {
      throw DataError("classifier weights: non-finite value");
    }
  }

  bool operator==(const ClassifierWeights&) const = default;
};

inline constexpr double kStandardizeEpsilon = 1e-5;
inline constexpr double kProbabilityClamp = 1e-7;

struct BatchStats {
  double mean = 0.0;
  double std = 0.0;  // population (1/B)
  double epsilon = kStandardizeEpsilon;
};

struct ClassifierForward {
  std::vector<double> probabilities;
  BatchStats stats;
  std::vector<double> logits;
  std::vector<double> standardized;
};

inline double sigmoid(double s) {
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

/// Standardizes logits with this batch's own mean and population std (also
/// at evaluation), then applies the sigmoid. A zero-std batch standardizes to
/// all zeros.
inline ClassifierForward forward_logits(std::vector<double> logits) {
  const std::size_t n = logits.size();
  if (n < 2) throw UsageError("classifier: batch size must be >= 2");
  ClassifierForward out;
  double mean = 0.0;
  for (double l : logits) mean += l;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double l : logits) var += (l - mean) * (l - mean);
  var /= static_cast<double>(n);
  out.stats.mean = mean;
  out.stats.std = std::sqrt(var);
  const double denom = out.stats.std + out.stats.epsilon;
  out.standardized.resize(n);
  out.probabilities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.standardized[i] = out.stats.std == 0.0 ? 0.0 : (logits[i] - mean) / denom;
    out.probabilities[i] = sigmoid(out.standardized[i]);
  }
  out.logits = std::move(logits);
  return out;
}

inline double logit(std::span<const double> volume, const ClassifierWeights& w) {
  double acc = w.bias;
  for (std::size_t i = 0; i < volume.size(); ++i) acc += volume[i] * w.w[i];
  return acc;
}

inline ClassifierForward forward(const std::vector<Volume>& batch, const ClassifierWeights& w) {
  if (batch.size() < 2) throw UsageError("classifier: batch size must be >= 2");
  std::vector<double> logits;
  logits.reserve(batch.size());
  for (const auto& z : batch) {
    if (z.dims() != w.dims) {
      throw UsageError("classifier: volume dims " + to_string(z.dims()) + " do not match weights " +
                       to_string(w.dims));
    }
    logits.push_back(logit(z.data(), w));
  }
  return forward_logits(std::move(logits));
}

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size() || p.empty()) throw UsageError("bce_loss: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total += y[i] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  return -total / static_cast<double>(p.size());
}

/// Fraction with (p > 0.5) == (y == 1). p == 0.5 exactly counts as wrong.
inline double accuracy(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size() || p.empty()) throw UsageError("accuracy: size mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.5) continue;
    if ((p[i] > 0.5) == (y[i] == 1)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

/// Gradient of bce_loss(forward(...)) with respect to every logit, including
/// the dependence of the batch mean and std on each logit.
inline std::vector<double> backward_logits(const ClassifierForward& f, std::span<const int> y) {
  const std::size_t n = f.logits.size();
  if (y.size() != n) throw UsageError("classifier backward: label count mismatch");
  const auto bn = static_cast<double>(n);

  // dL/ds_i
  std::vector<double> gs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = f.probabilities[i];
    if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) {
      gs[i] = 0.0;
      continue;
    }
    const double dl_dp = y[i] == 1 ? -1.0 / p : 1.0 / (1.0 - p);
    gs[i] = dl_dp * p * (1.0 - p) / bn;
  }

  std::vector<double> gl(n, 0.0);
  if (f.stats.std == 0.0) {
    // Standardized values are pinned at zero; nothing flows back.
    return gl;
  }
  const double denom = f.stats.std + f.stats.epsilon;
  double mean_gs = 0.0;
  double gs_dot_c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_gs += gs[i];
    gs_dot_c += gs[i] * (f.logits[i] - f.stats.mean);
  }
  mean_gs /= bn;
  // s_i = c_i / (std + eps), c_i = l_i - mean, dstd/dl_j = c_j / (B std).
  for (std::size_t j = 0; j < n; ++j) {
    const double cj = f.logits[j] - f.stats.mean;
    gl[j] = (gs[j] - mean_gs) / denom - gs_dot_c * cj / (denom * denom * bn * f.stats.std);
  }
  return gl;
}

struct ClassifierGrad {
  std::vector<double> w;
  double bias = 0.0;
  /// dL/dlogit_i; dL/dZ_i = d_logits[i] * weights.w.
  std::vector<double> d_logits;

  Volume input_gradient(std::size_t i, const ClassifierWeights& weights, double voxel_mm = 3.0) const {
    std::vector<double> g(weights.w.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = d_logits[i] * weights.w[k];
    return Volume(weights.dims, std::move(g), voxel_mm);
  }
};

inline ClassifierGrad backward(const ClassifierForward& f, const std::vector<Volume>& batch,
                               std::span<const int> y) {
  ClassifierGrad g;
  g.d_logits = backward_logits(f, y);
  if (batch.size() != g.d_logits.size()) throw UsageError("classifier backward: batch size mismatch");
  g.w.assign(batch.front().size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double gi = g.d_logits[i];
    g.bias += gi;
    const auto z = batch[i].data();
    for (std::size_t k = 0; k < z.size(); ++k) g.w[k] += gi * z[k];
  }
  return g;
}

struct L2Penalty {
  double value = 0.0;
  std::vector<double> gradient;
};

/// lambda * sum(w^2), bias excluded.
inline L2Penalty l2_penalty(const ClassifierWeights& w, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("l2_penalty: lambda must be >= 0");
  L2Penalty out;
  out.gradient.resize(w.w.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < w.w.size(); ++i) {
    ss += w.w[i] * w.w[i];
    out.gradient[i] = 2.0 * lambda * w.w[i];
  }
  out.value = lambda * ss;
  return out;
}

/// Text checkpoint: "H W D", then w on one line (17 significant digits), then bias.
inline void save_classifier(const ClassifierWeights& w, std::ostream& os) {
  const auto old = os.precision(17);
  os << w.dims.h << ' ' << w.dims.w << ' ' << w.dims.d << '\n';
  for (std::size_t i = 0; i < w.w.size(); ++i) os << (i ? " " : "") << w.w[i];
  os << '\n' << w.bias << '\n';
  os.precision(old);
}

inline ClassifierWeights load_classifier(std::istream& in) {
  std::string line;
  Dims d;
  if (!std::getline(in, line) || !(std::istringstream(line) >> d.h >> d.w >> d.d) || d.count() == 0) {
    throw DataError("classifier checkpoint: bad dims line");
  }
  ClassifierWeights w(d);
  if (!std::getline(in, line)) throw DataError("classifier checkpoint: missing weights");
  std::istringstream ws(line);
  for (auto& x : w.w) {
    if (!(ws >> x)) throw DataError("classifier checkpoint: short weight row");
  }
  if (!std::getline(in, line) || !(std::istringstream(line) >> w.bias)) {
    throw DataError("classifier checkpoint: missing bias");
  }
  w.validate();
  return w;
}

inline void save_classifier(const ClassifierWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  save_classifier(w, out);
}

inline ClassifierWeights load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_classifier(in);
}

}  // namespace adasmooth
