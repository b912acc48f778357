#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <vector>

#include "adasmooth/cube.hpp"
#include "adasmooth/error.hpp"

namespace adasmooth {

inline constexpr double kDefaultTruncation = 4.0;

/// 2 * sqrt(2 ln 2), the FWHM of a unit-sigma Gaussian.
inline const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2);

/// Truncated, renormalized, isotropic 3D Gaussian on the integer grid
/// [-radius, radius]^3, together with its derivative with respect to sigma_f
/// at fixed support.
///
/// `profile` is the renormalized 1D Gaussian on [-radius, radius]; the cube
/// `weights` equals profile (x) profile (x) profile up to rounding, which is
/// what the separable convolution path relies on. `d_profile` is the sigma
/// derivative of `profile`.
struct GaussianFilter {
  double sigma_f = 0.0;
  double truncation_t = kDefaultTruncation;
  int radius = 0;
  Cube weights;
  Cube d_weights;
  std::vector<double> profile{1.0};
  std::vector<double> d_profile{0.0};

  bool single_cell() const noexcept { return radius == 0; }
};

/// floor((t * sigma_f + 0.5) / 2).
inline int filter_radius(double sigma_f, double t) {
  return static_cast<int>(std::floor((t * sigma_f + 0.5) / 2.0));
}

/// Below this sigma_f the grid collapses to a single cell.
inline double single_cell_threshold(double t) { return 1.5 / t; }

namespace detail {

/// g(rho^2) for every integer squared distance rho^2 in [0, 3 r^2]. Every
/// cell with the same squared distance reads the same table entry, so all 48
/// axis reflections and permutations of a cell get bitwise-equal weights.
inline std::vector<double> gaussian_by_squared_distance(double sigma, int r) {
  const double pref = 1.0 / std::pow(std::sqrt(2.0 * std::numbers::pi) * sigma, 3);
  std::vector<double> g(static_cast<std::size_t>(3 * r * r + 1));
  for (std::size_t rho2 = 0; rho2 < g.size(); ++rho2) {
    g[rho2] = pref * std::exp(-static_cast<double>(rho2) / (2.0 * sigma * sigma));
  }
  return g;
}

inline int squared_distance(int i, int j, int k) { return i * i + j * j + k * k; }

}  // namespace detail

/// dQ/dsigma_f for every cell, by the quotient rule on Q = g / sum(g) with
/// dg/dsigma = g * (rho^2 / sigma^3 - 3 / sigma).
inline Cube derivative_of_normalized_gaussian(const GaussianFilter& f) {
  if (f.radius < 1) {
    throw UsageError("derivative_of_normalized_gaussian: single-cell filter has no derivative");
  }
  const int r = f.radius;
  const double s = f.sigma_f;
  const auto g = detail::gaussian_by_squared_distance(s, r);
  std::vector<double> dg(g.size());
  for (std::size_t rho2 = 0; rho2 < g.size(); ++rho2) {
    dg[rho2] = g[rho2] * (static_cast<double>(rho2) / (s * s * s) - 3.0 / s);
  }
  double sum_g = 0.0;
  double sum_dg = 0.0;
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) {
        const int rho2 = detail::squared_distance(i, j, k);
        sum_g += g[rho2];
        sum_dg += dg[rho2];
      }
  std::vector<double> dq(g.size());
  for (std::size_t rho2 = 0; rho2 < g.size(); ++rho2) {
    dq[rho2] = (dg[rho2] * sum_g - g[rho2] * sum_dg) / (sum_g * sum_g);
  }
  Cube out(r);
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) out.at(i, j, k) = dq[detail::squared_distance(i, j, k)];
  return out;
}

inline GaussianFilter build_filter(double sigma_f, double t = kDefaultTruncation) {
  if (!(sigma_f > 0.0) || !std::isfinite(sigma_f)) {
    throw UsageError("build_filter: sigma_f must be positive and finite");
  }
  if (!(t > 0.0) || !std::isfinite(t)) throw UsageError("build_filter: t must be positive");

  GaussianFilter f;
  f.sigma_f = sigma_f;
  f.truncation_t = t;
  f.radius = filter_radius(sigma_f, t);
  const int r = f.radius;

  if (r == 0) {
    // The renormalized single cell is exactly 1 whatever sigma_f is.
    f.weights = Cube(0, 1.0);
    f.d_weights = Cube(0, 0.0);
    return f;
  }

  const auto g = detail::gaussian_by_squared_distance(sigma_f, r);
  double sum_g = 0.0;
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) sum_g += g[detail::squared_distance(i, j, k)];
  f.weights = Cube(r);
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) f.weights.at(i, j, k) = g[detail::squared_distance(i, j, k)] / sum_g;
  f.d_weights = derivative_of_normalized_gaussian(f);

  // 1D factor: e(x) = exp(-x^2 / 2 sigma^2), p = e / sum(e).
  const std::size_t n = static_cast<std::size_t>(2 * r + 1);
  std::vector<double> e(n), de(n);
  double se = 0.0, sde = 0.0;
  for (int x = -r; x <= r; ++x) {
    const double x2 = static_cast<double>(x * x);
    e[x + r] = std::exp(-x2 / (2.0 * sigma_f * sigma_f));
    de[x + r] = e[x + r] * x2 / (sigma_f * sigma_f * sigma_f);
    se += e[x + r];
    sde += de[x + r];
  }
  f.profile.resize(n);
  f.d_profile.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.profile[i] = e[i] / se;
    f.d_profile[i] = (de[i] * se - e[i] * sde) / (se * se);
  }
  return f;
}

struct DegenerateDecision {
  double sigma_f = 0.0;
  bool bumped = false;
};

/// In training, a sigma_f below the single-cell threshold is raised by 1.0
/// with probability p. The bump is additive, so d(out)/d(sigma_f) = 1 on both
/// branches. Never fires outside training.
inline DegenerateDecision apply_degenerate_policy(double sigma_f, double t, double p, bool training,
                                                  std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError("bump probability must be in [0, 1]");
  if (!training || !(sigma_f < single_cell_threshold(t))) return {sigma_f, false};
  std::bernoulli_distribution coin(p);
  if (coin(rng)) return {sigma_f + 1.0, true};
  return {sigma_f, false};
}

inline DegenerateDecision apply_degenerate_policy(double sigma_f, double t, double p, bool training,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return apply_degenerate_policy(sigma_f, t, p, training, rng);
}

inline double sigma_to_fwhm_mm(double sigma_f, double voxel_size_mm) {
  if (!(sigma_f > 0.0) || !(voxel_size_mm > 0.0)) {
    throw UsageError("sigma_to_fwhm_mm: inputs must be positive");
  }
  return kFwhmPerSigma * sigma_f * voxel_size_mm;
}

inline double fwhm_mm_to_sigma(double fwhm_mm, double voxel_size_mm) {
  if (!(fwhm_mm > 0.0) || !(voxel_size_mm > 0.0)) {
    throw UsageError("fwhm_mm_to_sigma: inputs must be positive");
  }
  return fwhm_mm / (kFwhmPerSigma * voxel_size_mm);
}

/// Debug dump: "sigma_f t radius", then the weights x fastest, one per line.
inline void dump_filter(std::ostream& os, const GaussianFilter& f) {
  const auto old = os.precision(17);
  os << f.sigma_f << ' ' << f.truncation_t << ' ' << f.radius << '\n';
  for (double w : f.weights.values) os << w << '\n';
  os.precision(old);
}

}  // namespace adasmooth
