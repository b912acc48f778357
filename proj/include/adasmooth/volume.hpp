#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adasmooth/error.hpp"

namespace adasmooth {

/// Voxel counts of a volume. `h` is the number of rows (y), `w` the number of
/// columns (x), `d` the number of slices (z).
struct Dims {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t d = 0;

  std::size_t count() const noexcept { return h * w * d; }
  std::size_t min_side() const noexcept { return std::min({h, w, d}); }
  bool operator==(const Dims&) const = default;
};

inline std::string to_string(const Dims& dims) {
  return std::to_string(dims.h) + "x" + std::to_string(dims.w) + "x" +
         std::to_string(dims.d);
}

/// Dense 3D scalar field. Storage is x fastest, then y, then z:
/// index(x, y, z) = x + w * (y + h * z).
class Volume {
 public:
  Volume() = default;

  explicit Volume(Dims dims, double voxel_size_mm = 3.0, double fill = 0.0)
      : dims_(dims), voxel_size_mm_(voxel_size_mm), data_(dims.count(), fill) {
    validate();
  }

  Volume(Dims dims, std::vector<double> data, double voxel_size_mm = 3.0)
      : dims_(dims), voxel_size_mm_(voxel_size_mm), data_(std::move(data)) {
    validate();
    if (data_.size() != dims_.count()) {
      throw UsageError("volume data length " + std::to_string(data_.size()) +
                       " does not match dims " + to_string(dims_));
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  double voxel_size_mm() const noexcept { return voxel_size_mm_; }
  void set_voxel_size_mm(double mm) {
    if (!(mm > 0.0)) throw UsageError("voxel size must be positive");
    voxel_size_mm_ = mm;
  }

  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims_.w * (y + dims_.h * z);
  }

  double& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept {
    return data_[index(x, y, z)];
  }
  double operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[index(x, y, z)];
  }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Volume&) const = default;

 private:
  void validate() const {
    if (dims_.h == 0 || dims_.w == 0 || dims_.d == 0) {
      throw UsageError("volume dims must be positive, got " + to_string(dims_));
    }
    if (!(voxel_size_mm_ > 0.0)) throw UsageError("voxel size must be positive");
  }

  Dims dims_{};
  double voxel_size_mm_ = 3.0;
  std::vector<double> data_;
};

inline double dot(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims()) throw UsageError("dot: dims mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Maps every voxel of a subject's volumes to [0, 1] using the extrema over
/// the whole set.
inline std::vector<Volume> normalize_subject(const std::vector<Volume>& volumes) {
  if (volumes.empty()) throw DataError("normalize_subject: empty volume list");
  const Dims dims = volumes.front().dims();
  double lo = volumes.front()[0];
  double hi = lo;
  for (const auto& v : volumes) {
    if (v.dims() != dims) throw DataError("normalize_subject: dims mismatch");
    const auto [mn, mx] = std::minmax_element(v.data().begin(), v.data().end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }
  if (!(hi > lo)) throw DataError("normalize_subject: constant data (max == min)");

  const double range = hi - lo;
  std::vector<Volume> out;
  out.reserve(volumes.size());
  for (const auto& v : volumes) {
    Volume n = v;
    for (auto& x : n.data()) x = (x - lo) / range;
    out.push_back(std::move(n));
  }
  return out;
}

/// Adds iid N(0, sigma^2) to every voxel. The result is not clipped.
inline Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw UsageError("noise sigma must be >= 0");
  Volume out = v;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& x : out.data()) x += noise(rng);
  return out;
}

}  // namespace adasmooth
