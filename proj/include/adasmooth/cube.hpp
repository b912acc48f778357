#pragma once

#include <cstddef>
#include <vector>

#include "adasmooth/error.hpp"

namespace adasmooth {

/// Odd-sided cubic kernel of side 2r+1, stored x fastest. Cell (i, j, k) with
/// i, j, k in [-r, r] lives at at(i, j, k).
struct Cube {
  int radius = 0;
  std::vector<double> values;

  Cube() : values(1, 0.0) {}
  explicit Cube(int r, double fill = 0.0) : radius(r) {
    if (r < 0) throw UsageError("cube radius must be >= 0");
    values.assign(static_cast<std::size_t>(side() * side() * side()), fill);
  }

  int side() const noexcept { return 2 * radius + 1; }
  std::size_t size() const noexcept { return values.size(); }

  std::size_t offset(int i, int j, int k) const noexcept {
    const int s = side();
    return static_cast<std::size_t>((i + radius) + s * ((j + radius) + s * (k + radius)));
  }
  double& at(int i, int j, int k) noexcept { return values[offset(i, j, k)]; }
  double at(int i, int j, int k) const noexcept { return values[offset(i, j, k)]; }

  double sum() const noexcept {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  /// p (x) p (x) p, outer product of one 1D profile along all three axes.
  static Cube outer(const std::vector<double>& p) {
    if (p.size() % 2 == 0) throw UsageError("profile length must be odd");
    Cube c(static_cast<int>(p.size() / 2));
    const int r = c.radius;
    for (int k = -r; k <= r; ++k)
      for (int j = -r; j <= r; ++j)
        for (int i = -r; i <= r; ++i) c.at(i, j, k) = p[i + r] * p[j + r] * p[k + r];
    return c;
  }

  bool operator==(const Cube&) const = default;
};

}  // namespace adasmooth
