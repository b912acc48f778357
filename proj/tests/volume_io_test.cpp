#include <gtest/gtest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adasmooth/volume_io.hpp"

namespace adasmooth {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("adasmooth_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

/// Minimal single-file NIfTI-1 with the given dims (dim[1..]) and payload.
std::vector<char> make_nifti(std::vector<std::int16_t> dims, std::int16_t datatype, const std::vector<char>& payload,
                             float slope = 0.0f, float inter = 0.0f) {
  std::vector<char> buf(352, 0);
  put<std::int32_t>(buf, 0, 348);
  put<std::int16_t>(buf, 40, static_cast<std::int16_t>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) put<std::int16_t>(buf, 42 + 2 * i, dims[i]);
  put<std::int16_t>(buf, 70, datatype);
  put<float>(buf, 80, 2.0f);
  put<float>(buf, 108, 352.0f);
  put<float>(buf, 112, slope);
  put<float>(buf, 116, inter);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  buf.insert(buf.end(), payload.begin(), payload.end());
  return buf;
}

template <typename T>
std::vector<char> as_bytes(const std::vector<T>& xs) {
  std::vector<char> out(xs.size() * sizeof(T));
  std::memcpy(out.data(), xs.data(), out.size());
  return out;
}

using VolumeIo = TempDir;

TEST_F(VolumeIo, Vol1RoundTrip) {
  Volume v(Dims{2, 3, 4}, 2.5);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.25 * static_cast<double>(i) - 1.0;
  write_volume(v, dir_ / "v.vol");
  EXPECT_EQ(read_volume(dir_ / "v.vol"), v);
}

TEST_F(VolumeIo, Vol1HeaderLayout) {
  Volume v(Dims{2, 3, 4}, 3.0, 1.5);
  write_volume(v, dir_ / "v.vol");
  std::ifstream in(dir_ / "v.vol", std::ios::binary);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(buf.size(), 20u + 24u * 4u);
  EXPECT_EQ(std::string(buf.data(), 4), "VOL1");
  std::uint32_t h, w, d;
  float mm, first;
  std::memcpy(&h, buf.data() + 4, 4);
  std::memcpy(&w, buf.data() + 8, 4);
  std::memcpy(&d, buf.data() + 12, 4);
  std::memcpy(&mm, buf.data() + 16, 4);
  std::memcpy(&first, buf.data() + 20, 4);
  EXPECT_EQ(h, 2u);
  EXPECT_EQ(w, 3u);
  EXPECT_EQ(d, 4u);
  EXPECT_EQ(mm, 3.0f);
  EXPECT_EQ(first, 1.5f);
}

TEST_F(VolumeIo, Vol1TruncatedPayload) {
  std::vector<char> buf{'V', 'O', 'L', '1'};
  auto append = [&](auto x) {
    const auto* p = reinterpret_cast<const char*>(&x);
    buf.insert(buf.end(), p, p + sizeof(x));
  };
  append(std::uint32_t{2});
  append(std::uint32_t{2});
  append(std::uint32_t{2});
  append(3.0f);
  for (int i = 0; i < 7; ++i) append(static_cast<float>(i));
  write_bytes(dir_ / "short.vol", buf);
  EXPECT_THROW(read_volume(dir_ / "short.vol"), DataError);
  write_bytes(dir_ / "header.vol", {'V', 'O', 'L', '1', 0, 0});
  EXPECT_THROW(read_volume(dir_ / "header.vol"), DataError);
}

TEST_F(VolumeIo, NiftiInt16Scaling) {
  // slope * raw + inter = 0.5 * 4 + 1
  const std::vector<std::int16_t> raw{4, 0, -2, 10, 4, 4, 4, 4};
  write_bytes(dir_ / "a.nii", make_nifti({2, 2, 2}, 4, as_bytes(raw), 0.5f, 1.0f));
  const Volume v = read_volume(dir_ / "a.nii");
  EXPECT_EQ(v.dims(), (Dims{2, 2, 2}));
  EXPECT_DOUBLE_EQ(v[0], 3.0);
  EXPECT_DOUBLE_EQ(v[2], 0.0);
  EXPECT_DOUBLE_EQ(v.voxel_size_mm(), 2.0);
}

TEST_F(VolumeIo, NiftiFloatUnscaledAndAxisOrder) {
  // dim[1] = 3 (x), dim[2] = 2 (y), dim[3] = 1 (z)
  const std::vector<float> raw{0, 1, 2, 3, 4, 5};
  write_bytes(dir_ / "f.nii", make_nifti({3, 2, 1}, 16, as_bytes(raw)));
  const Volume v = read_volume(dir_ / "f.nii");
  EXPECT_EQ(v.dims(), (Dims{2, 3, 1}));
  EXPECT_DOUBLE_EQ(v(2, 0, 0), 2.0);
  EXPECT_DOUBLE_EQ(v(0, 1, 0), 3.0);
}

TEST_F(VolumeIo, Nifti4DIsASeries) {
  std::vector<float> raw(2 * 2 * 2 * 3);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(i);
  write_bytes(dir_ / "t.nii", make_nifti({2, 2, 2, 3}, 16, as_bytes(raw)));
  const auto series = read_volume_series(dir_ / "t.nii");
  ASSERT_EQ(series.size(), 3u);
  EXPECT_DOUBLE_EQ(series[2][0], 16.0);
  EXPECT_THROW(read_volume(dir_ / "t.nii"), DataError);
}

TEST_F(VolumeIo, NiftiErrors) {
  write_bytes(dir_ / "i32.nii", make_nifti({2, 2, 2}, 8, std::vector<char>(32, 0)));
  EXPECT_THROW(read_volume(dir_ / "i32.nii"), DataError);
  write_bytes(dir_ / "short.nii", make_nifti({2, 2, 2}, 16, std::vector<char>(8, 0)));
  EXPECT_THROW(read_volume(dir_ / "short.nii"), DataError);
  write_bytes(dir_ / "junk.nii", std::vector<char>(400, 1));
  EXPECT_THROW(read_volume(dir_ / "junk.nii"), DataError);
  EXPECT_THROW(read_volume(dir_ / "missing.vol"), DataError);
}

TEST(Manifest, ParsesAndValidates) {
  std::istringstream in(
      "path,label,subject_id,noise_level,split\n"
      "a.vol,0,s1,0,train\n"
      "b.vol,1,s1,0.2,train\n"
      "c.vol,1,s2,0.1,validation\n");
  const auto m = parse_manifest(in);
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[1].noise_level, 0.2);
  EXPECT_EQ(m.split.at("s2"), Split::validation);
}

TEST(Manifest, SubjectInTwoSplitsRejected) {
  std::istringstream in(
      "path,label,subject_id,noise_level,split\n"
      "a.vol,0,s1,0,train\n"
      "b.vol,1,s1,0,test\n");
  EXPECT_THROW(parse_manifest(in), DataError);
}

TEST(Manifest, MalformedRowsRejected) {
  for (const char* body : {"a.vol,2,s1,0,train\n", "a.vol,0,s1,x,train\n", "a.vol,0,s1,0\n",
                           "a.vol,0,s1,0,holdout\n", "a.vol,0,s1,-0.1,train\n"}) {
    std::istringstream in(std::string("path,label,subject_id,noise_level,split\n") + body);
    EXPECT_THROW(parse_manifest(in), DataError) << body;
  }
  std::istringstream bad_header("file,label\n");
  EXPECT_THROW(parse_manifest(bad_header), DataError);
}

TEST_F(VolumeIo, ManifestRoundTrip) {
  DatasetManifest m;
  m.entries = {{"x.vol", 0, "s1", 0.1}, {"y.vol", 1, "s2", 0.3}};
  m.assign("s1", Split::train);
  m.assign("s2", Split::test);
  write_manifest(m, dir_ / "manifest.csv");
  const auto back = read_manifest(dir_ / "manifest.csv");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[0].noise_level, 0.1);
  EXPECT_EQ(back.entries[1].subject_id, "s2");
  EXPECT_EQ(back.split, m.split);
}

}  // namespace
}  // namespace adasmooth
