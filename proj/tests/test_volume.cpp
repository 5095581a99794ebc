#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sctseg/volume.hpp"
#include "sctseg/volume_io.hpp"

using namespace sctseg;
namespace fs = std::filesystem;

namespace {

Volume make_volume(int d, int h, int w, float base = 0.0f) {
  Volume v;
  v.depth = d;
  v.height = h;
  v.width = w;
  v.data.resize(static_cast<size_t>(d) * h * w);
  for (size_t i = 0; i < v.data.size(); ++i)
    v.data[i] = base + static_cast<float>(i % 97) / 97.0f;
  v.update_range();
  return v;
}

fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "sctseg_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("percentile interpolates between closest ranks") {
  CHECK(percentile_value({1, 2, 3, 4, 5}, 50) == doctest::Approx(3.0));
  CHECK(percentile_value({1, 2, 3, 4, 5}, 25) == doctest::Approx(2.0));
  CHECK(percentile_value({10, 20}, 75) == doctest::Approx(17.5));
  CHECK(percentile_value({5, 1, 3}, 0) == doctest::Approx(1.0));
  CHECK(percentile_value({5, 1, 3}, 100) == doctest::Approx(5.0));
}

TEST_CASE("global minmax normalization maps the range onto [0,1]") {
  Volume v = make_volume(2, 4, 4, 3.0f);
  Volume n = normalize(v, NormalizeMode::global_minmax());
  CHECK(n.value_min == doctest::Approx(0.0));
  CHECK(n.value_max == doctest::Approx(1.0));
  // the mapping is affine: order is preserved
  CHECK(n.data[0] < n.data[1]);

  Volume c = make_volume(1, 2, 2);
  std::fill(c.data.begin(), c.data.end(), 2.5f);
  c.update_range();
  CHECK_THROWS_AS(normalize(c, NormalizeMode::global_minmax()), Error);
}

TEST_CASE("percentile normalization clips the tails") {
  Volume v;
  v.depth = 1;
  v.height = 1;
  v.width = 101;
  v.data.resize(101);
  for (int i = 0; i <= 100; ++i) v.data[i] = static_cast<float>(i);
  v.update_range();
  Volume n = normalize(v, NormalizeMode::percentile(10, 90));
  CHECK(n.data[0] == doctest::Approx(0.0));    // below p10 clamps
  CHECK(n.data[100] == doctest::Approx(1.0));  // above p90 clamps
  CHECK(n.data[50] == doctest::Approx((50.0 - 10.0) / 80.0));
  CHECK_THROWS_AS(normalize(v, NormalizeMode::percentile(90, 10)), Error);
}

TEST_CASE("extract_stack clamps at the volume boundary") {
  Volume v = make_volume(3, 4, 4);
  SliceStack s = extract_stack(v, 0, 5);
  CHECK(s.channels == 5);
  CHECK(s.rows == 4);
  CHECK(s.cols == 4);
  // slices (clamped): 0 0 0 1 2
  CHECK(s.channel(0)[0] == v.slice(0)[0]);
  CHECK(s.channel(1)[0] == v.slice(0)[0]);
  CHECK(s.channel(2)[0] == v.slice(0)[0]);
  CHECK(s.channel(3)[0] == v.slice(1)[0]);
  CHECK(s.channel(4)[0] == v.slice(2)[0]);

  CHECK_THROWS_AS(extract_stack(v, 0, 4), Error);   // even stack
  CHECK_THROWS_AS(extract_stack(v, 3, 3), Error);   // center out of range
  CHECK_THROWS_AS(extract_stack(v, -1, 3), Error);
}

TEST_CASE("crops track their origin and validate the window") {
  Volume v = make_volume(1, 8, 10);
  SliceStack s = extract_stack(v, 0, 1);
  SliceStack c = crop_at(s, 2, 3, 4, 4);
  CHECK(c.rows == 4);
  CHECK(c.cols == 4);
  CHECK(c.crop_row == 2);
  CHECK(c.crop_col == 3);
  CHECK(c.at(0, 0, 0) == s.at(0, 2, 3));
  SliceStack c2 = crop_at(c, 1, 1, 2, 2);
  CHECK(c2.crop_row == 3);  // origins accumulate
  CHECK(c2.crop_col == 4);
  CHECK_THROWS_AS(crop_at(s, 6, 0, 4, 4), Error);
  CHECK_THROWS_AS(crop_at(s, 0, 0, 9, 4), Error);
}

TEST_CASE("random_crop stays inside and covers the identity case") {
  Volume v = make_volume(1, 6, 6);
  SliceStack s = extract_stack(v, 0, 1);
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    SliceStack c = random_crop(s, 4, 4, rng);
    CHECK(c.crop_row >= 0);
    CHECK(c.crop_row <= 2);
    CHECK(c.crop_col >= 0);
    CHECK(c.crop_col <= 2);
  }
  SliceStack full = random_crop(s, 6, 6, rng);
  CHECK(full.crop_row == 0);
  CHECK(full.crop_col == 0);
}

TEST_CASE("label slice extraction copies one plane") {
  LabelVolume lv;
  lv.depth = 2;
  lv.height = 2;
  lv.width = 2;
  lv.num_classes = 4;
  lv.labels = {0, 1, 2, 3, 3, 2, 1, 0};
  LabelMap m = extract_label_slice(lv, 1);
  CHECK(m.rows == 2);
  CHECK(m.labels == std::vector<uint8_t>{3, 2, 1, 0});
  CHECK_THROWS_AS(extract_label_slice(lv, 2), Error);
}

TEST_CASE("raw volume round trip preserves voxels and metadata") {
  fs::path dir = temp_dir("raw_rt");
  Volume v = make_volume(3, 5, 7);
  v.voxel_size_um = 1.3;
  save_volume(v, dir / "vol.raw");
  REQUIRE(fs::exists(dir / "vol.json"));

  Volume r = load_volume(dir / "vol.raw", VolumeFormat::raw);
  CHECK(r.depth == 3);
  CHECK(r.height == 5);
  CHECK(r.width == 7);
  CHECK(r.data == v.data);
  REQUIRE(r.voxel_size_um.has_value());
  CHECK(*r.voxel_size_um == doctest::Approx(1.3));

  // the sidecar path works as the entry point too
  Volume r2 = load_volume(dir / "vol.json", VolumeFormat::raw);
  CHECK(r2.data == v.data);
}

TEST_CASE("raw loader validates payload size against the sidecar") {
  fs::path dir = temp_dir("raw_bad");
  Volume v = make_volume(2, 4, 4);
  save_volume(v, dir / "vol.raw");
  // truncate the payload
  fs::resize_file(dir / "vol.raw", 16);
  try {
    load_volume(dir / "vol.raw", VolumeFormat::raw);
    FAIL("expected a size mismatch error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("16") != std::string::npos);  // actual bytes named
  }
}

TEST_CASE("label volume round trip and range validation") {
  fs::path dir = temp_dir("lab_rt");
  LabelVolume lv;
  lv.depth = 2;
  lv.height = 3;
  lv.width = 3;
  lv.num_classes = 5;
  lv.provenance = LabelProvenance::pseudo;
  lv.labels.assign(18, 4);
  save_labels(lv, dir / "lab.raw");
  LabelVolume r = load_labels(dir / "lab.raw");
  CHECK(r.num_classes == 5);
  CHECK(r.labels == lv.labels);

  // out-of-range labels are rejected at load
  lv.num_classes = 4;
  save_labels(lv, dir / "bad.raw");
  CHECK_THROWS_AS(load_labels(dir / "bad.raw"), Error);
}

TEST_CASE("slice_dir loads 8 and 16 bit PGM stacks in name order") {
  fs::path dir = temp_dir("pgm_dir");
  // two 2x2 8-bit slices
  const uint8_t a[4] = {0, 64, 128, 255};
  const uint8_t b[4] = {255, 128, 64, 0};
  write_pgm(dir / "slice_000.pgm", a, 2, 2);
  write_pgm(dir / "slice_001.pgm", b, 2, 2);
  Volume v = load_volume(dir, VolumeFormat::slice_dir);
  CHECK(v.depth == 2);
  CHECK(v.slice(0)[1] == doctest::Approx(64.0f));
  CHECK(v.slice(1)[0] == doctest::Approx(255.0f));

  // 16-bit big-endian slice
  fs::path dir16 = temp_dir("pgm16");
  {
    std::ofstream out(dir16 / "s_000.pgm", std::ios::binary);
    out << "P5\n2 1\n65535\n";
    const uint8_t payload[4] = {0x01, 0x00, 0xff, 0xfe};  // 256, 65534
    out.write(reinterpret_cast<const char*>(payload), 4);
  }
  Volume v16 = load_volume(dir16, VolumeFormat::slice_dir);
  CHECK(v16.data[0] == doctest::Approx(256.0f));
  CHECK(v16.data[1] == doctest::Approx(65534.0f));
}

TEST_CASE("slice_dir rejects inconsistent shapes naming the slice") {
  fs::path dir = temp_dir("pgm_bad");
  const uint8_t a[4] = {1, 2, 3, 4};
  const uint8_t b[6] = {1, 2, 3, 4, 5, 6};
  write_pgm(dir / "s_000.pgm", a, 2, 2);
  write_pgm(dir / "s_001.pgm", b, 2, 3);
  try {
    load_volume(dir, VolumeFormat::slice_dir);
    FAIL("expected a shape mismatch error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("s_001") != std::string::npos);
  }
}

TEST_CASE("label ppm uses the class palette with black background") {
  fs::path dir = temp_dir("ppm");
  LabelMap m;
  m.rows = 1;
  m.cols = 2;
  m.labels = {0, 1};
  write_label_ppm(dir / "m.ppm", m);
  std::ifstream in(dir / "m.ppm", std::ios::binary);
  std::string magic, dims, maxv;
  std::getline(in, magic);
  std::getline(in, dims);
  std::getline(in, maxv);
  CHECK(magic == "P6");
  uint8_t rgb[6];
  in.read(reinterpret_cast<char*>(rgb), 6);
  CHECK(rgb[0] == 0);  // class 0 black
  CHECK(rgb[1] == 0);
  CHECK(rgb[2] == 0);
  uint8_t expect[3];
  class_color(1, expect);
  CHECK(rgb[3] == expect[0]);
  CHECK(rgb[4] == expect[1]);
  CHECK(rgb[5] == expect[2]);
}
