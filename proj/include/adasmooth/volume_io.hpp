#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adasmooth/error.hpp"
#include "adasmooth/volume.hpp"

namespace adasmooth {

static_assert(std::endian::native == std::endian::little,
              "file codecs assume a little-endian host");

namespace detail {

inline std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T load(const std::vector<char>& buf, std::size_t offset, bool swap = false) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  if (swap) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    std::reverse(bytes, bytes + sizeof(T));
  }
  return value;
}

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Shortest decimal text that parses back to the same double.
inline std::string shortest(double x) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) fields.push_back(trim(field));
  if (!line.empty() && line.back() == sep) fields.emplace_back();
  return fields;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// VOL1: "VOL1", u32 H, u32 W, u32 D, f32 voxel_size_mm, then H*W*D f32
// values, x fastest. All little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kVol1Magic{'V', 'O', 'L', '1'};
inline constexpr std::size_t kVol1HeaderBytes = 4 + 3 * 4 + 4;

inline void write_volume(const Volume& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kVol1Magic.data(), kVol1Magic.size());
  const std::array<std::uint32_t, 3> dims{
      static_cast<std::uint32_t>(v.dims().h), static_cast<std::uint32_t>(v.dims().w),
      static_cast<std::uint32_t>(v.dims().d)};
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  const float voxel = static_cast<float>(v.voxel_size_mm());
  out.write(reinterpret_cast<const char*>(&voxel), sizeof(voxel));
  std::vector<float> payload(v.data().begin(), v.data().end());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw DataError("write failed for " + path.string());
}

inline Volume parse_vol1(const std::vector<char>& buf, const std::string& name) {
  if (buf.size() < kVol1HeaderBytes) throw DataError(name + ": truncated VOL1 header");
  const Dims dims{detail::load<std::uint32_t>(buf, 4), detail::load<std::uint32_t>(buf, 8),
                  detail::load<std::uint32_t>(buf, 12)};
  const float voxel = detail::load<float>(buf, 16);
  if (dims.count() == 0) throw DataError(name + ": zero dimension in VOL1 header");
  if (!(voxel > 0.0f)) throw DataError(name + ": non-positive voxel size");
  const std::size_t expected = kVol1HeaderBytes + dims.count() * sizeof(float);
  if (buf.size() < expected) {
    throw DataError(name + ": truncated payload (" +
                    std::to_string((buf.size() - kVol1HeaderBytes) / sizeof(float)) +
                    " values, expected " + std::to_string(dims.count()) + ")");
  }
  if (buf.size() > expected) throw DataError(name + ": trailing bytes after payload");
  std::vector<double> data(dims.count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = detail::load<float>(buf, kVol1HeaderBytes + i * sizeof(float));
  }
  return Volume(dims, std::move(data), voxel);
}

// ---------------------------------------------------------------------------
// NIfTI-1 single-file reader. int16 and float32 only; a 4D file is returned
// as one 3D volume per frame.
// ---------------------------------------------------------------------------

inline std::vector<Volume> parse_nifti(const std::vector<char>& buf, const std::string& name) {
  constexpr std::size_t kHeader = 348;
  if (buf.size() < kHeader) throw DataError(name + ": truncated NIfTI header");
  bool swap = false;
  const auto sizeof_hdr = detail::load<std::int32_t>(buf, 0);
  if (sizeof_hdr != 348) {
    if (detail::load<std::int32_t>(buf, 0, true) != 348) {
      throw DataError(name + ": not a NIfTI-1 header");
    }
    swap = true;
  }
  if (std::memcmp(buf.data() + 344, "n+1", 4) != 0) {
    throw DataError(name + ": only single-file NIfTI-1 (magic n+1) is supported");
  }
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = detail::load<std::int16_t>(buf, 40 + 2 * i, swap);
  const int ndim = dim[0];
  if (ndim != 3 && ndim != 4) {
    throw DataError(name + ": NIfTI dim[0] = " + std::to_string(ndim) + ", expected 3 or 4");
  }
  for (int i = 1; i <= ndim; ++i) {
    if (dim[i] <= 0) throw DataError(name + ": non-positive NIfTI dimension");
  }
  const auto datatype = detail::load<std::int16_t>(buf, 70, swap);
  std::size_t bytes_per_voxel = 0;
  if (datatype == 4) {
    bytes_per_voxel = 2;
  } else if (datatype == 16) {
    bytes_per_voxel = 4;
  } else {
    throw DataError(name + ": unsupported NIfTI datatype " + std::to_string(datatype) +
                    " (only int16 and float32)");
  }
  const float pixdim1 = detail::load<float>(buf, 80, swap);
  const float vox_offset = detail::load<float>(buf, 108, swap);
  const float slope = detail::load<float>(buf, 112, swap);
  const float inter = detail::load<float>(buf, 116, swap);

  // NIfTI i (fastest) is our x (width), j is y (height), k is z (depth).
  const Dims dims{static_cast<std::size_t>(dim[2]), static_cast<std::size_t>(dim[1]),
                  static_cast<std::size_t>(dim[3])};
  const std::size_t frames = ndim == 4 ? static_cast<std::size_t>(dim[4]) : 1;
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (offset < kHeader) throw DataError(name + ": vox_offset inside header");
  const std::size_t needed = offset + frames * dims.count() * bytes_per_voxel;
  if (buf.size() < needed) throw DataError(name + ": truncated NIfTI payload");

  const bool scaled = slope != 0.0f && std::isfinite(slope);
  const double voxel_mm = pixdim1 > 0.0f ? pixdim1 : 3.0;
  std::vector<Volume> out;
  out.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> data(dims.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t at = offset + (f * dims.count() + i) * bytes_per_voxel;
      const double raw = datatype == 4 ? static_cast<double>(detail::load<std::int16_t>(buf, at, swap))
                                       : static_cast<double>(detail::load<float>(buf, at, swap));
      data[i] = scaled ? static_cast<double>(slope) * raw + static_cast<double>(inter) : raw;
    }
    out.emplace_back(dims, std::move(data), voxel_mm);
  }
  return out;
}

inline bool has_vol1_magic(const std::vector<char>& buf) {
  return buf.size() >= 4 && std::memcmp(buf.data(), kVol1Magic.data(), 4) == 0;
}

/// All 3D volumes in a file: one for VOL1 and 3D NIfTI, one per frame for 4D
/// NIfTI.
inline std::vector<Volume> read_volume_series(const std::filesystem::path& path) {
  const auto buf = detail::slurp(path);
  if (has_vol1_magic(buf)) return {parse_vol1(buf, path.string())};
  return parse_nifti(buf, path.string());
}

inline Volume read_volume(const std::filesystem::path& path) {
  const auto buf = detail::slurp(path);
  if (has_vol1_magic(buf)) return parse_vol1(buf, path.string());
  auto series = parse_nifti(buf, path.string());
  if (series.size() != 1) {
    throw DataError(path.string() + ": 4D NIfTI with " + std::to_string(series.size()) +
                    " frames; use read_volume_series");
  }
  return std::move(series.front());
}

// ---------------------------------------------------------------------------
// Dataset manifest: CSV with header path,label,subject_id,noise_level,split.
// Relative paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

struct ManifestEntry {
  std::string path;
  int label = 0;
  std::string subject_id;
  double noise_level = 0.0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::map<std::string, Split> split;

  /// Throws when a subject is missing from the split map or a label is not 0/1.
  void validate() const {
    for (const auto& e : entries) {
      if (e.label != 0 && e.label != 1) throw DataError("non-binary label for " + e.path);
      if (!(e.noise_level >= 0.0)) throw DataError("negative noise level for " + e.path);
      if (!split.contains(e.subject_id)) {
        throw DataError("subject " + e.subject_id + " has no split assignment");
      }
    }
  }

  void assign(const std::string& subject, Split s) {
    const auto [it, inserted] = split.emplace(subject, s);
    if (!inserted && it->second != s) {
      throw DataError("subject " + subject + " appears in both " + to_string(it->second) +
                      " and " + to_string(s));
    }
  }
};

inline const char* kManifestHeader = "path,label,subject_id,noise_level,split";

inline DatasetManifest parse_manifest(std::istream& in, const std::string& name = "manifest") {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kManifestHeader) {
    throw DataError(name + ": expected header '" + std::string(kManifestHeader) + "'");
  }
  DatasetManifest m;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 5) {
      throw DataError(name + ":" + std::to_string(lineno) + ": expected 5 fields");
    }
    ManifestEntry e;
    e.path = f[0];
    try {
      std::size_t used = 0;
      e.label = std::stoi(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("label");
      e.noise_level = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("noise");
    } catch (const std::logic_error&) {
      throw DataError(name + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    e.subject_id = f[2];
    if (e.subject_id.empty()) throw DataError(name + ":" + std::to_string(lineno) + ": empty subject");
    m.assign(e.subject_id, parse_split(f[4]));
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& e : m.entries) {
    out << e.path << ',' << e.label << ',' << e.subject_id << ',' << detail::shortest(e.noise_level) << ','
        << to_string(m.split.at(e.subject_id)) << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace adasmooth
