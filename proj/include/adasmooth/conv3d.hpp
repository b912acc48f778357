#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "adasmooth/cube.hpp"
#include "adasmooth/error.hpp"
#include "adasmooth/gaussian_filter.hpp"
#include "adasmooth/volume.hpp"

namespace adasmooth {

// Same-size 3D convolution with zero padding:
//
//   Z(x, y, z) = sum_{i,j,k = -r..r} X~(x+i, y+j, z+k) * Q(i, j, k)
//
// where X~ is X extended by zeros. Both kernels used here are symmetric, so
// this correlation is also the convolution. Accumulation is in double.

enum class ConvStrategy { direct, separable };

struct ConvPlan {
  ConvStrategy strategy = ConvStrategy::separable;
  /// Worker threads; output z-slabs are split between them, so every output
  /// voxel is written by exactly one worker and results do not depend on this.
  unsigned threads = 1;
};

namespace detail {

inline void parallel_slabs(std::size_t depth, unsigned threads,
                           const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t n = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(depth, 1));
  if (n == 1) {
    body(0, depth);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t z0 = depth * t / n;
    const std::size_t z1 = depth * (t + 1) / n;
    workers.emplace_back([&body, z0, z1] { body(z0, z1); });
  }
}

inline void check_filter_fits(const Dims& dims, int radius) {
  if (radius < 0) throw UsageError("negative filter radius");
  const auto side = static_cast<std::size_t>(2 * radius + 1);
  if (side > dims.min_side()) {
    throw UsageError("filter side " + std::to_string(side) + " exceeds volume " + to_string(dims));
  }
}

inline std::ptrdiff_t sz(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

/// One zero-padded 1D pass along `axis` (0 = x, 1 = y, 2 = z).
inline Volume pass_axis(const Volume& in, std::span<const double> kernel, int axis, unsigned threads) {
  const Dims d = in.dims();
  const auto r = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  Volume out(d, in.voxel_size_mm());
  const std::span<const double> src = in.data();
  const std::span<double> dst = out.data();
  const std::size_t row = d.w;
  const std::size_t plane = d.w * d.h;

  parallel_slabs(d.d, threads, [&](std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z) {
      for (std::size_t y = 0; y < d.h; ++y) {
        double* o = dst.data() + z * plane + y * row;
        if (axis == 0) {
          const double* s = src.data() + z * plane + y * row;
          for (std::ptrdiff_t x = 0; x < sz(d.w); ++x) {
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-r, -x);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(r, sz(d.w) - 1 - x);
            double acc = 0.0;
            for (std::ptrdiff_t i = lo; i <= hi; ++i) acc += kernel[i + r] * s[x + i];
            o[x] = acc;
          }
        } else {
          const std::ptrdiff_t pos = axis == 1 ? sz(y) : sz(z);
          const std::ptrdiff_t extent = axis == 1 ? sz(d.h) : sz(d.d);
          const std::size_t stride = axis == 1 ? row : plane;
          const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-r, -pos);
          const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(r, extent - 1 - pos);
          const double* base = src.data() + z * plane + y * row;
          for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            const double k = kernel[i + r];
            const double* s = base + i * static_cast<std::ptrdiff_t>(stride);
            for (std::size_t x = 0; x < row; ++x) o[x] += k * s[x];
          }
        }
      }
    }
  });
  return out;
}

}  // namespace detail

/// Direct triple loop over the filter support.
inline Volume convolve_direct(const Volume& x, const Cube& q, unsigned threads = 1) {
  const Dims d = x.dims();
  detail::check_filter_fits(d, q.radius);
  const std::ptrdiff_t r = q.radius;
  Volume out(d, x.voxel_size_mm());
  detail::parallel_slabs(d.d, threads, [&](std::size_t z0, std::size_t z1) {
    using detail::sz;
    for (std::size_t z = z0; z < z1; ++z)
      for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t xx = 0; xx < d.w; ++xx) {
          const std::ptrdiff_t klo = std::max(-r, -sz(z)), khi = std::min(r, sz(d.d) - 1 - sz(z));
          const std::ptrdiff_t jlo = std::max(-r, -sz(y)), jhi = std::min(r, sz(d.h) - 1 - sz(y));
          const std::ptrdiff_t ilo = std::max(-r, -sz(xx)), ihi = std::min(r, sz(d.w) - 1 - sz(xx));
          double acc = 0.0;
          for (std::ptrdiff_t k = klo; k <= khi; ++k)
            for (std::ptrdiff_t j = jlo; j <= jhi; ++j) {
              const std::size_t base = x.index(0, static_cast<std::size_t>(sz(y) + j),
                                               static_cast<std::size_t>(sz(z) + k));
              for (std::ptrdiff_t i = ilo; i <= ihi; ++i) {
                acc += x[base + static_cast<std::size_t>(sz(xx) + i)] *
                       q.at(static_cast<int>(i), static_cast<int>(j), static_cast<int>(k));
              }
            }
          out(xx, y, z) = acc;
        }
  });
  return out;
}

/// Three 1D passes: z with pz, then y with py, then x with px.
inline Volume convolve_separable(const Volume& x, std::span<const double> px, std::span<const double> py,
                                 std::span<const double> pz, unsigned threads = 1) {
  for (auto p : {px, py, pz}) {
    if (p.size() % 2 == 0) throw UsageError("separable profile length must be odd");
    detail::check_filter_fits(x.dims(), static_cast<int>(p.size() / 2));
  }
  return detail::pass_axis(
      detail::pass_axis(detail::pass_axis(x, pz, 2, threads), py, 1, threads), px, 0, threads);
}

inline Volume convolve_separable(const Volume& x, std::span<const double> p, unsigned threads = 1) {
  return convolve_separable(x, p, p, p, threads);
}

/// Recovers p with q = p (x) p (x) p. Throws if q is not of that form.
inline std::vector<double> rank1_profile(const Cube& q) {
  const int r = q.radius;
  const double center = q.at(0, 0, 0);
  if (center == 0.0) throw UsageError("cube is not a separable outer product (zero center)");
  const double p0 = std::cbrt(center);
  std::vector<double> p(static_cast<std::size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i) p[i + r] = q.at(i, 0, 0) / (p0 * p0);
  double scale = 0.0;
  for (double v : q.values) scale = std::max(scale, std::abs(v));
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) {
        if (std::abs(q.at(i, j, k) - p[i + r] * p[j + r] * p[k + r]) > 1e-12 * scale) {
          throw UsageError("cube is not a separable outer product");
        }
      }
  return p;
}

inline Volume convolve(const Volume& x, const Cube& q, const ConvPlan& plan = {}) {
  if (plan.strategy == ConvStrategy::direct) return convolve_direct(x, q, plan.threads);
  return convolve_separable(x, rank1_profile(q), plan.threads);
}

/// Smooths with a Gaussian filter, using its 1D profile on the separable path.
inline Volume smooth(const Volume& x, const GaussianFilter& f, const ConvPlan& plan = {}) {
  if (f.single_cell()) return x;
  if (plan.strategy == ConvStrategy::direct) return convolve_direct(x, f.weights, plan.threads);
  return convolve_separable(x, f.profile, plan.threads);
}

/// dL/dQ(i, j, k) = sum_h U(h) * X~(h + (i, j, k)).
inline Cube convolve_backward_filter(const Volume& upstream, const Volume& x, int radius) {
  if (upstream.dims() != x.dims()) throw UsageError("convolve_backward_filter: dims mismatch");
  const Dims d = x.dims();
  detail::check_filter_fits(d, radius);
  using detail::sz;
  Cube g(radius);
  for (int k = -radius; k <= radius; ++k)
    for (int j = -radius; j <= radius; ++j)
      for (int i = -radius; i <= radius; ++i) {
        double acc = 0.0;
        const std::ptrdiff_t z0 = std::max<std::ptrdiff_t>(0, -k), z1 = std::min(sz(d.d), sz(d.d) - k);
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -j), y1 = std::min(sz(d.h), sz(d.h) - j);
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -i), x1 = std::min(sz(d.w), sz(d.w) - i);
        for (std::ptrdiff_t z = z0; z < z1; ++z)
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const std::size_t ub = upstream.index(0, static_cast<std::size_t>(y), static_cast<std::size_t>(z));
            const std::size_t xb = x.index(0, static_cast<std::size_t>(y + j), static_cast<std::size_t>(z + k));
            for (std::ptrdiff_t xx = x0; xx < x1; ++xx) {
              acc += upstream[ub + static_cast<std::size_t>(xx)] * x[xb + static_cast<std::size_t>(xx + i)];
            }
          }
        g.at(i, j, k) = acc;
      }
  return g;
}

/// dL/dX: correlation of the upstream gradient with the flipped filter.
inline Volume convolve_backward_input(const Volume& upstream, const Cube& q, const ConvPlan& plan = {}) {
  Cube flipped(q.radius);
  const int r = q.radius;
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) flipped.at(i, j, k) = q.at(-i, -j, -k);
  return convolve(upstream, flipped, plan);
}

/// Interior-only correlation: output dims shrink by 2r along every axis.
inline Volume correlate_valid(const Volume& x, const Cube& q) {
  const Dims d = x.dims();
  const auto side = static_cast<std::size_t>(q.side());
  if (side > d.min_side()) throw UsageError("correlate_valid: filter larger than volume");
  const int r = q.radius;
  const Dims od{d.h - side + 1, d.w - side + 1, d.d - side + 1};
  Volume out(od, x.voxel_size_mm());
  for (std::size_t z = 0; z < od.d; ++z)
    for (std::size_t y = 0; y < od.h; ++y)
      for (std::size_t xx = 0; xx < od.w; ++xx) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k)
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              acc += x(xx + static_cast<std::size_t>(i + r), y + static_cast<std::size_t>(j + r),
                       z + static_cast<std::size_t>(k + r)) *
                     q.at(i, j, k);
            }
        out(xx, y, z) = acc;
      }
  return out;
}

struct SmoothTangent {
  Volume smoothed;
  /// dZ/dsigma_f at fixed support.
  Volume tangent;
};

/// Z = Q * X and dZ/dsigma_f in one go. With Q = p (x) p (x) p,
/// dQ = p' (x) p (x) p + p (x) p' (x) p + p (x) p (x) p', so the tangent is
/// three more separable convolutions that share intermediate passes.
inline SmoothTangent smooth_with_tangent(const Volume& x, const GaussianFilter& f, unsigned threads = 1) {
  if (f.single_cell()) return {x, Volume(x.dims(), x.voxel_size_mm())};
  detail::check_filter_fits(x.dims(), f.radius);
  const auto& p = f.profile;
  const auto& dp = f.d_profile;
  using detail::pass_axis;
  const Volume a = pass_axis(x, p, 2, threads);
  const Volume b = pass_axis(a, p, 1, threads);
  SmoothTangent out{pass_axis(b, p, 0, threads), pass_axis(b, dp, 0, threads)};
  Volume c = pass_axis(a, dp, 1, threads);
  const Volume e = pass_axis(pass_axis(x, dp, 2, threads), p, 1, threads);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += e[i];
  const Volume cx = pass_axis(c, p, 0, threads);
  for (std::size_t i = 0; i < cx.size(); ++i) out.tangent[i] += cx[i];
  return out;
}

}  // namespace adasmooth
