#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "adasmooth/conv3d.hpp"
#include "adasmooth/cube.hpp"
#include "adasmooth/error.hpp"
#include "adasmooth/volume.hpp"

namespace adasmooth {

/// [1, -2, 1] along each axis.
inline const std::vector<double> kLaplacianProfile{1.0, -2.0, 1.0};

/// The fixed 3x3x3 noise-estimation kernel, [1,-2,1] (x) [1,-2,1] (x) [1,-2,1].
/// Entries sum to 0 and their squares sum to 216.
inline Cube laplacian_kernel() { return Cube::outer(kLaplacianProfile); }

/// sqrt(216) * sqrt(2 / pi): mean |response| per unit of iid noise sigma.
inline const double kNoiseFeatureScale = std::sqrt(216.0) * std::sqrt(2.0 / std::numbers::pi);

/// Mean absolute Laplacian response over the (H-2)(W-2)(D-2) interior.
///
/// Computed as three valid-mode [1,-2,1] passes (x, then y, then z), which
/// equals the valid 3D correlation with laplacian_kernel().
inline double noise_feature(const Volume& x) {
  const Dims d = x.dims();
  if (d.h < 3 || d.w < 3 || d.d < 3) {
    throw UsageError("noise_feature: every dimension must be >= 3, got " + to_string(d));
  }
  const std::size_t w = d.w, h = d.h;
  // x pass: (w-2) * h * d
  std::vector<double> a((w - 2) * h * d.d);
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w - 2; ++i) {
        a[i + (w - 2) * (y + h * z)] = x(i, y, z) - 2.0 * x(i + 1, y, z) + x(i + 2, y, z);
      }
  // y pass: (w-2) * (h-2) * d
  const std::size_t aw = w - 2;
  std::vector<double> b(aw * (h - 2) * d.d);
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < h - 2; ++y)
      for (std::size_t i = 0; i < aw; ++i) {
        const auto at = [&](std::size_t yy) { return a[i + aw * (yy + h * z)]; };
        b[i + aw * (y + (h - 2) * z)] = at(y) - 2.0 * at(y + 1) + at(y + 2);
      }
  // z pass, abs, mean
  const std::size_t plane = aw * (h - 2);
  double total = 0.0;
  for (std::size_t z = 0; z < d.d - 2; ++z)
    for (std::size_t j = 0; j < plane; ++j) {
      total += std::abs(b[j + plane * z] - 2.0 * b[j + plane * (z + 1)] + b[j + plane * (z + 2)]);
    }
  return total / static_cast<double>(plane * (d.d - 2));
}

/// noise_feature with the iid-Gaussian constant divided out: an estimate of
/// the noise standard deviation. Diagnostic only; training uses the raw feature.
inline double calibrated_noise_estimate(const Volume& x) { return noise_feature(x) / kNoiseFeatureScale; }

struct ParamsNetWeights {
  std::vector<double> a;  // first layer weights
  std::vector<double> b;  // first layer biases
  std::vector<double> v;  // second layer weights
  double c = 0.0;         // second layer bias

  ParamsNetWeights() = default;
  explicit ParamsNetWeights(std::size_t m) : a(m, 0.0), b(m, 0.0), v(m, 0.0) {
    if (m == 0) throw UsageError("params net width must be >= 1");
  }

  std::size_t width() const noexcept { return a.size(); }

  void validate() const {
    if (a.empty() || b.size() != a.size() || v.size() != a.size()) {
      throw DataError("params net weights: inconsistent layer widths");
    }
    auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(a.begin(), a.end(), finite) || !std::all_of(b.begin(), b.end(), finite) ||
        !std::all_of(v.begin(), v.end(), finite) || !std::isfinite(c)) {
      throw DataError("params net weights: non-finite value");
    }
  }

  /// Every weight and bias drawn from N(0, 0.09).
  static ParamsNetWeights random(std::size_t m, std::mt19937_64& rng) {
    ParamsNetWeights w(m);
    std::normal_distribution<double> n(0.0, 0.3);
    for (std::size_t i = 0; i < m; ++i) {
      w.a[i] = n(rng);
      w.b[i] = n(rng);
      w.v[i] = n(rng);
    }
    w.c = n(rng);
    return w;
  }

  bool operator==(const ParamsNetWeights&) const = default;
};

inline constexpr double kPreActivationMin = -10.0;
inline constexpr double kPreActivationMax = 6.0;

struct SigmaMapping {
  double sigma_f = 1.0;
  double pre_activation = 0.0;  // before clamping
  bool clamped = false;
};

/// sigma_f = exp(sum_m v_m (a_m f + b_m) + c), pre-activation clamped to
/// [-10, 6].
inline SigmaMapping map_to_sigma(double feature, const ParamsNetWeights& w) {
  if (!std::isfinite(feature)) throw UsageError("map_to_sigma: non-finite feature");
  double pre = w.c;
  for (std::size_t m = 0; m < w.width(); ++m) pre += w.v[m] * (w.a[m] * feature + w.b[m]);
  SigmaMapping out;
  out.pre_activation = pre;
  const double used = std::clamp(pre, kPreActivationMin, kPreActivationMax);
  out.clamped = used != pre || std::isnan(pre);
  out.sigma_f = std::exp(std::isnan(pre) ? kPreActivationMin : used);
  return out;
}

struct ParamsNetGrad {
  std::vector<double> a, b, v;
  double c = 0.0;
  double feature = 0.0;

  explicit ParamsNetGrad(std::size_t m = 0) : a(m, 0.0), b(m, 0.0), v(m, 0.0) {}

  ParamsNetGrad& operator+=(const ParamsNetGrad& o) {
    for (std::size_t m = 0; m < a.size(); ++m) {
      a[m] += o.a[m];
      b[m] += o.b[m];
      v[m] += o.v[m];
    }
    c += o.c;
    feature += o.feature;
    return *this;
  }
};

/// Chain rule through map_to_sigma for an upstream dL/dsigma_f. A clamped
/// pre-activation passes no gradient.
inline ParamsNetGrad map_to_sigma_backward(double feature, const ParamsNetWeights& w, double upstream) {
  const std::size_t m_count = w.width();
  ParamsNetGrad g(m_count);
  const SigmaMapping fwd = map_to_sigma(feature, w);
  if (fwd.clamped || upstream == 0.0) return g;
  const double ds = upstream * fwd.sigma_f;  // dL/d(pre-activation)
  g.c = ds;
  double va = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const double u = w.a[m] * feature + w.b[m];
    g.v[m] = ds * u;
    g.b[m] = ds * w.v[m];
    g.a[m] = ds * w.v[m] * feature;
    va += w.v[m] * w.a[m];
  }
  g.feature = ds * va;
  return g;
}

namespace detail {

inline void write_row(std::ostream& os, const std::vector<double>& xs) {
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? " " : "") << xs[i];
  os << '\n';
}

inline std::vector<double> read_row(std::istream& in, std::size_t n, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint: missing " + what);
  std::istringstream ss(line);
  std::vector<double> xs(n);
  for (auto& x : xs) {
    if (!(ss >> x)) throw DataError("checkpoint: short row for " + what);
  }
  double extra = 0.0;
  if (ss >> extra) throw DataError("checkpoint: too many values for " + what);
  return xs;
}

}  // namespace detail

/// Text checkpoint: M, then a, b, v one row each, then c. 17 significant digits.
inline void save_params_net(const ParamsNetWeights& w, std::ostream& os) {
  const auto old = os.precision(17);
  os << w.width() << '\n';
  detail::write_row(os, w.a);
  detail::write_row(os, w.b);
  detail::write_row(os, w.v);
  os << w.c << '\n';
  os.precision(old);
}

inline ParamsNetWeights load_params_net(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("params net checkpoint: missing width");
  std::size_t m = 0;
  try {
    m = std::stoul(line);
  } catch (const std::logic_error&) {
    throw DataError("params net checkpoint: bad width line");
  }
  if (m == 0) throw DataError("params net checkpoint: zero width");
  ParamsNetWeights w;
  w.a = detail::read_row(in, m, "a");
  w.b = detail::read_row(in, m, "b");
  w.v = detail::read_row(in, m, "v");
  w.c = detail::read_row(in, 1, "c").front();
  w.validate();
  return w;
}

inline void save_params_net(const ParamsNetWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  save_params_net(w, out);
}

inline ParamsNetWeights load_params_net(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_params_net(in);
}

}  // namespace adasmooth
