#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "adasmooth/error.hpp"
#include "adasmooth/params_net.hpp"
#include "adasmooth/volume.hpp"
#include "adasmooth/volume_io.hpp"

namespace adasmooth {

/// One labeled volume with its precomputed noise feature. The feature depends
/// only on the input volume, so it is computed once at load time.
struct Sample {
  Volume volume;
  int label = 0;
  std::string subject;
  double noise_level = 0.0;
  Split split = Split::train;
  double feature = 0.0;
};

struct Dataset {
  std::vector<Sample> samples;

  Dims dims() const {
    if (samples.empty()) throw DataError("empty dataset");
    return samples.front().volume.dims();
  }
  double voxel_size_mm() const {
    if (samples.empty()) throw DataError("empty dataset");
    return samples.front().volume.voxel_size_mm();
  }

  void add(Volume v, int label, std::string subject, double noise, Split split) {
    if (label != 0 && label != 1) throw DataError("non-binary label");
    if (!samples.empty() && v.dims() != dims()) {
      throw DataError("dataset volume dims " + to_string(v.dims()) + " differ from " + to_string(dims()));
    }
    for (const auto& s : samples) {
      if (s.subject == subject && s.split != split) {
        throw DataError("subject " + subject + " appears in more than one split");
      }
    }
    const double f = noise_feature(v);
    samples.push_back({std::move(v), label, std::move(subject), noise, split, f});
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [s](const Sample& x) { return x.split == s; }));
  }
};

inline Dataset load_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir) {
  manifest.validate();
  Dataset ds;
  ds.samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    std::filesystem::path p(e.path);
    if (p.is_relative()) p = base_dir / p;
    ds.add(read_volume(p), e.label, e.subject_id, e.noise_level, manifest.split.at(e.subject_id));
  }
  return ds;
}

/// Loads `<dir>/manifest.csv`, or the manifest file itself when given one.
inline Dataset load_dataset(const std::filesystem::path& dir_or_manifest) {
  std::filesystem::path manifest = dir_or_manifest;
  if (std::filesystem::is_directory(manifest)) manifest /= "manifest.csv";
  return load_dataset(read_manifest(manifest), manifest.parent_path());
}

/// All volumes of one (subject, noise level) group.
struct MiniBatch {
  std::string subject;
  double noise_level = 0.0;
  std::vector<std::size_t> members;  // indices into Dataset::samples
};

/// Groups of a split in (subject, noise level) order. Membership is fixed.
inline std::vector<MiniBatch> group_batches(const Dataset& ds, Split split) {
  std::map<std::pair<std::string, double>, MiniBatch> groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.split != split) continue;
    auto& g = groups[{s.subject, s.noise_level}];
    g.subject = s.subject;
    g.noise_level = s.noise_level;
    g.members.push_back(i);
  }
  std::vector<MiniBatch> out;
  out.reserve(groups.size());
  for (auto& [key, g] : groups) {
    if (g.members.size() < 2) {
      throw DataError("group (subject " + g.subject + ", noise " + detail::shortest(g.noise_level) +
                      ") has fewer than 2 volumes");
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// group_batches in an order shuffled by `seed`.
inline std::vector<MiniBatch> make_batches(const Dataset& ds, Split split, std::uint64_t seed) {
  auto batches = group_batches(ds, split);
  std::mt19937_64 rng(seed);
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace adasmooth
