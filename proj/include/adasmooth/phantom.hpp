#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "adasmooth/dataset.hpp"
#include "adasmooth/error.hpp"
#include "adasmooth/volume.hpp"
#include "adasmooth/volume_io.hpp"

namespace adasmooth {

/// Two-class synthetic dataset: a smooth anatomy that is mirror-symmetric
/// about the x midline, plus an activation blob left of the midline (class 0)
/// or at the mirrored position right of it (class 1).
///
/// Blobs are Gaussian profiles of width `blob_radius`, tapered to exactly zero
/// at distance 1.5 * blob_radius, so each blob's support is a ball of diameter
/// 3 * blob_radius.
struct PhantomSpec {
  Dims dims{24, 24, 24};
  std::size_t train_subjects = 6;
  std::size_t validation_subjects = 1;
  std::size_t test_subjects = 1;
  std::size_t volumes_per_class = 16;
  /// Blob peak, as a fraction of the anatomy's dynamic range.
  double amplitude = 0.15;
  double blob_radius = 2.5;
  double blob_offset = 6.0;
  /// Per-subject uniform jitter of the blob centre, in voxels per axis.
  double jitter = 1.0;
  /// Per-volume smooth fluctuation (std, before normalization). Shared by the
  /// k-th volume of both classes so class means still differ only in blobs.
  double fluctuation = 0.0;
  double fluctuation_width = 3.0;
  std::vector<double> noise_levels{0.1, 0.2, 0.3};
  double voxel_size_mm = 3.0;

  std::size_t subjects() const { return train_subjects + validation_subjects + test_subjects; }

  double support_radius() const { return 1.5 * blob_radius; }

  void validate() const {
    if (dims.count() == 0) throw UsageError("phantom: dims must be positive");
    if (dims.min_side() < 8) throw UsageError("phantom: every dim must be >= 8");
    if (train_subjects == 0 || validation_subjects == 0) {
      throw UsageError("phantom: need at least one training and one validation subject");
    }
    if (volumes_per_class < 1) throw UsageError("phantom: volumes_per_class must be >= 1");
    if (!(amplitude > 0.0)) throw UsageError("phantom: amplitude must be positive");
    if (!(blob_radius > 0.0)) throw UsageError("phantom: blob_radius must be positive");
    if (!(jitter >= 0.0) || !(fluctuation >= 0.0) || !(fluctuation_width > 0.0)) {
      throw UsageError("phantom: jitter and fluctuation must be >= 0");
    }
    for (double n : noise_levels)
      if (!(n > 0.0)) throw UsageError("phantom: noise levels must be positive");
    // Closest approach of the two blob centres is 2 * (offset - jitter).
    if (2.0 * (blob_offset - jitter) <= 2.0 * support_radius()) {
      throw UsageError("phantom: blob supports of the two classes overlap");
    }
    const double cx = (static_cast<double>(dims.w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(dims.h) - 1.0) / 2.0;
    const double cz = (static_cast<double>(dims.d) - 1.0) / 2.0;
    if (cx - (blob_offset + jitter) < 3.0 || cy - jitter < 3.0 || cz - jitter < 3.0) {
      throw UsageError("phantom: blob centres closer than 3 voxels to a face");
    }
  }

  void set(const std::string& key, const std::string& value) {
    auto number = [&]() {
      try {
        std::size_t used = 0;
        const double x = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
      } catch (const std::logic_error&) {
        throw UsageError("phantom spec: '" + key + "' expects a number, got '" + value + "'");
      }
    };
    auto count = [&]() { return static_cast<std::size_t>(number()); };
    if (key == "dims") {
      const auto f = detail::split(value, 'x');
      if (f.size() != 3) throw UsageError("phantom spec: dims expects HxWxD");
      try {
        dims = {std::stoul(f[0]), std::stoul(f[1]), std::stoul(f[2])};
      } catch (const std::logic_error&) {
        throw UsageError("phantom spec: bad dims '" + value + "'");
      }
    } else if (key == "train_subjects") train_subjects = count();
    else if (key == "validation_subjects") validation_subjects = count();
    else if (key == "test_subjects") test_subjects = count();
    else if (key == "volumes_per_class") volumes_per_class = count();
    else if (key == "amplitude") amplitude = number();
    else if (key == "blob_radius") blob_radius = number();
    else if (key == "blob_offset") blob_offset = number();
    else if (key == "jitter") jitter = number();
    else if (key == "fluctuation") fluctuation = number();
    else if (key == "fluctuation_width") fluctuation_width = number();
    else if (key == "voxel_size_mm") voxel_size_mm = number();
    else if (key == "noise_levels") {
      noise_levels.clear();
      for (const auto& f : detail::split(value, ',')) {
        try {
          noise_levels.push_back(std::stod(f));
        } catch (const std::logic_error&) {
          throw UsageError("phantom spec: bad noise level '" + f + "'");
        }
      }
    } else throw UsageError("phantom spec: unknown key '" + key + "'");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "dims = " << dims.h << 'x' << dims.w << 'x' << dims.d << '\n'
       << "train_subjects = " << train_subjects << '\n'
       << "validation_subjects = " << validation_subjects << '\n'
       << "test_subjects = " << test_subjects << '\n'
       << "volumes_per_class = " << volumes_per_class << '\n'
       << "amplitude = " << detail::shortest(amplitude) << '\n'
       << "blob_radius = " << detail::shortest(blob_radius) << '\n'
       << "blob_offset = " << detail::shortest(blob_offset) << '\n'
       << "jitter = " << detail::shortest(jitter) << '\n'
       << "fluctuation = " << detail::shortest(fluctuation) << '\n'
       << "fluctuation_width = " << detail::shortest(fluctuation_width) << '\n'
       << "voxel_size_mm = " << detail::shortest(voxel_size_mm) << '\n'
       << "noise_levels = ";
    for (std::size_t i = 0; i < noise_levels.size(); ++i) os << (i ? "," : "") << detail::shortest(noise_levels[i]);
    os << '\n';
    return os.str();
  }
};

inline PhantomSpec parse_phantom_spec(std::istream& in) {
  PhantomSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("phantom spec: expected key = value, got '" + line + "'");
    spec.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  spec.validate();
  return spec;
}

inline PhantomSpec load_phantom_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open phantom spec " + path.string());
  return parse_phantom_spec(in);
}

struct PhantomVolume {
  std::string name;  // file stem
  Volume volume;
  int label = 0;
  std::string subject;
  double noise_level = 0.0;
  Split split = Split::train;
};

struct Phantom {
  PhantomSpec spec;
  std::vector<PhantomVolume> volumes;
  /// (noise level, normalized blob amplitude / noise sigma).
  std::vector<std::pair<double, double>> snr;
  std::string log;

  Dataset to_dataset() const {
    Dataset ds;
    ds.samples.reserve(volumes.size());
    for (const auto& v : volumes) ds.add(v.volume, v.label, v.subject, v.noise_level, v.split);
    return ds;
  }
};

namespace detail {

struct Point3 {
  double x, y, z;
};

inline double squared_distance(double x, double y, double z, const Point3& p) {
  return (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y) + (z - p.z) * (z - p.z);
}

/// Gaussian of width rho, shifted so it reaches 0 at the support radius, peak 1.
inline double tapered_blob(double d2, double rho, double support) {
  if (d2 >= support * support) return 0.0;
  const double floor = std::exp(-support * support / (2.0 * rho * rho));
  return (std::exp(-d2 / (2.0 * rho * rho)) - floor) / (1.0 - floor);
}

inline std::string subject_name(std::size_t s) {
  std::ostringstream os;
  os << "sub" << std::setw(2) << std::setfill('0') << s;
  return os.str();
}

}  // namespace detail

/// Builds the phantom in memory. Every random draw derives from `seed`.
inline Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Dims d = spec.dims;
  const double cx = (static_cast<double>(d.w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(d.h) - 1.0) / 2.0;
  const double cz = (static_cast<double>(d.d) - 1.0) / 2.0;

  // Anatomy: three broad blobs on the x midline, scaled to [0, 1].
  Volume anatomy(d, spec.voxel_size_mm);
  {
    const std::array<detail::Point3, 3> centres{{{cx, cy - 0.2 * static_cast<double>(d.h), cz},
                                                 {cx, cy + 0.2 * static_cast<double>(d.h), cz + 2.0},
                                                 {cx, cy, cz - 0.2 * static_cast<double>(d.d)}}};
    const std::array<double, 3> widths{0.3 * static_cast<double>(d.w), 0.25 * static_cast<double>(d.w),
                                       0.2 * static_cast<double>(d.w)};
    const std::array<double, 3> weights{1.0, 0.7, 0.5};
    for (std::size_t z = 0; z < d.d; ++z)
      for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t x = 0; x < d.w; ++x) {
          double v = 0.0;
          for (std::size_t b = 0; b < 3; ++b) {
            const double d2 = detail::squared_distance(static_cast<double>(x), static_cast<double>(y),
                                                       static_cast<double>(z), centres[b]);
            v += weights[b] * std::exp(-d2 / (2.0 * widths[b] * widths[b]));
          }
          anatomy(x, y, z) = v;
        }
    const auto [mn, mx] = std::minmax_element(anatomy.data().begin(), anatomy.data().end());
    const double lo = *mn, range = *mx - *mn;
    for (auto& v : anatomy.data()) v = (v - lo) / range;
  }

  const std::size_t subjects = spec.subjects();
  Phantom out;
  out.spec = spec;
  std::ostringstream log;
  std::mt19937_64 master(seed);
  std::uniform_real_distribution<double> jitter(-spec.jitter, spec.jitter);
  double normalized_amplitude = 0.0;  // mean over subjects

  for (std::size_t s = 0; s < subjects; ++s) {
    const std::string subject = detail::subject_name(s);
    const Split split = s < spec.train_subjects                               ? Split::train
                        : s < spec.train_subjects + spec.validation_subjects ? Split::validation
                                                                             : Split::test;
    // Mirrored jitter: class-1 centre is the x-mirror image of class-0's.
    const double jx = jitter(master), jy = jitter(master), jz = jitter(master);
    const detail::Point3 left{cx - (spec.blob_offset + jx), cy + jy, cz + jz};
    const detail::Point3 right{cx + (spec.blob_offset + jx), cy + jy, cz + jz};

    std::vector<Volume> fluct(spec.volumes_per_class, Volume(d, spec.voxel_size_mm));
    if (spec.fluctuation > 0.0) {
      // White noise low-passed by a Gaussian and rescaled to the requested std.
      const std::size_t r = static_cast<std::size_t>(std::ceil(2.0 * spec.fluctuation_width));
      std::vector<double> p(2 * r + 1);
      double ps = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double x = static_cast<double>(i) - static_cast<double>(r);
        p[i] = std::exp(-x * x / (2.0 * spec.fluctuation_width * spec.fluctuation_width));
        ps += p[i];
      }
      for (auto& v : p) v /= ps;
      for (auto& f : fluct) {
        const Volume white = add_gaussian_noise(Volume(d, spec.voxel_size_mm), 1.0, master());
        Volume lp = white;
        // Separable low-pass with clamped (not zero) borders keeps the field stationary.
        for (int axis = 0; axis < 3; ++axis) {
          Volume next(d, spec.voxel_size_mm);
          const auto n = axis == 0 ? d.w : axis == 1 ? d.h : d.d;
          for (std::size_t z = 0; z < d.d; ++z)
            for (std::size_t y = 0; y < d.h; ++y)
              for (std::size_t x = 0; x < d.w; ++x) {
                const std::size_t pos = axis == 0 ? x : axis == 1 ? y : z;
                double acc = 0.0;
                for (std::size_t i = 0; i < p.size(); ++i) {
                  const auto q = static_cast<std::ptrdiff_t>(pos + i) - static_cast<std::ptrdiff_t>(r);
                  const auto c = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(q, 0, static_cast<std::ptrdiff_t>(n) - 1));
                  acc += p[i] * (axis == 0 ? lp(c, y, z) : axis == 1 ? lp(x, c, z) : lp(x, y, c));
                }
                next(x, y, z) = acc;
              }
          lp = std::move(next);
        }
        double ss = 0.0;
        for (double v : lp.data()) ss += v * v;
        const double scale = spec.fluctuation / std::sqrt(ss / static_cast<double>(lp.size()));
        for (auto& v : lp.data()) v *= scale;
        f = std::move(lp);
      }
    }

    // Noiseless masters: [class][k].
    std::vector<Volume> raw;
    raw.reserve(2 * spec.volumes_per_class);
    for (int label = 0; label < 2; ++label) {
      const detail::Point3& centre = label == 0 ? left : right;
      for (std::size_t k = 0; k < spec.volumes_per_class; ++k) {
        Volume v = anatomy;
        for (std::size_t z = 0; z < d.d; ++z)
          for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x) {
              const double d2 = detail::squared_distance(static_cast<double>(x), static_cast<double>(y),
                                                         static_cast<double>(z), centre);
              v(x, y, z) += spec.amplitude * detail::tapered_blob(d2, spec.blob_radius, spec.support_radius()) +
                            fluct[k](x, y, z);
            }
        raw.push_back(std::move(v));
      }
    }
    const std::vector<Volume> masters = normalize_subject(raw);

    // Brute-force separability check on the noiseless masters with +1 on the
    // right blob's support and -1 on the left blob's.
    if (spec.fluctuation == 0.0) {
      for (std::size_t i = 0; i < masters.size(); ++i) {
        const int label = i < spec.volumes_per_class ? 0 : 1;
        double score = 0.0;
        for (std::size_t z = 0; z < d.d; ++z)
          for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x) {
              const double px = static_cast<double>(x), py = static_cast<double>(y), pz = static_cast<double>(z);
              const double sr2 = spec.support_radius() * spec.support_radius();
              if (detail::squared_distance(px, py, pz, right) < sr2) score += masters[i](x, y, z);
              if (detail::squared_distance(px, py, pz, left) < sr2) score -= masters[i](x, y, z);
            }
        if ((score > 0.0) != (label == 1)) {
          throw DataError("phantom: hand-built blob classifier failed on noiseless " + subject);
        }
      }
    }

    {
      double lo = raw.front()[0], hi = lo;
      for (const auto& v : raw)
        for (double x : v.data()) {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
      normalized_amplitude += spec.amplitude / (hi - lo) / static_cast<double>(subjects);
    }
    for (std::size_t i = 0; i < masters.size(); ++i) {
      const int label = i < spec.volumes_per_class ? 0 : 1;
      const std::size_t k = i % spec.volumes_per_class;
      std::ostringstream stem;
      stem << subject << "_c" << label << "_k" << std::setw(3) << std::setfill('0') << k;
      out.volumes.push_back({stem.str() + "_n0", masters[i], label, subject, 0.0, split});
      for (double sigma : spec.noise_levels) {
        std::ostringstream name;
        name << stem.str() << "_n" << detail::shortest(sigma);
        out.volumes.push_back({name.str(), add_gaussian_noise(masters[i], sigma, master()), label, subject, sigma, split});
      }
    }
  }

  for (double sigma : spec.noise_levels) {
    const double ratio = normalized_amplitude / sigma;
    out.snr.emplace_back(sigma, ratio);
    log << "noise " << sigma << " blob amplitude / noise sigma " << ratio << '\n';
  }
  out.log = log.str();
  return out;
}

/// Writes every volume as VOL1 under `<dir>/volumes/` and the manifest as
/// `<dir>/manifest.csv`.
inline DatasetManifest write_phantom(const Phantom& ph, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "volumes", ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  DatasetManifest m;
  for (const auto& v : ph.volumes) {
    const std::string rel = "volumes/" + v.name + ".vol";
    write_volume(v.volume, dir / rel);
    m.entries.push_back({rel, v.label, v.subject, v.noise_level});
    m.assign(v.subject, v.split);
  }
  write_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace adasmooth
