#include "sctseg/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sctseg {

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("malformed sidecar " + path.string() + ": " + e.what());
  }
  return j;
}

struct Sidecar {
  std::string dtype;
  int depth = 0, height = 0, width = 0;
  std::optional<double> voxel_size_um;
  std::optional<int> num_classes;
};

Sidecar parse_sidecar(const fs::path& path) {
  const json j = read_json_file(path);
  Sidecar sc;
  for (const auto& key : {"dtype", "depth", "height", "width"})
    if (!j.contains(key)) throw Error("sidecar " + path.string() + " missing key '" + key + "'");
  sc.dtype = j.at("dtype").get<std::string>();
  sc.depth = j.at("depth").get<int>();
  sc.height = j.at("height").get<int>();
  sc.width = j.at("width").get<int>();
  if (j.contains("voxel_size_um") && !j.at("voxel_size_um").is_null())
    sc.voxel_size_um = j.at("voxel_size_um").get<double>();
  if (j.contains("num_classes")) sc.num_classes = j.at("num_classes").get<int>();
  if (sc.depth < 1 || sc.height < 1 || sc.width < 1)
    throw Error("sidecar " + path.string() + " declares non-positive shape");
  return sc;
}

size_t dtype_size(const std::string& dtype) {
  if (dtype == "uint8") return 1;
  if (dtype == "uint16") return 2;
  if (dtype == "float32") return 4;
  if (dtype == "float64") return 8;
  throw Error("unsupported dtype '" + dtype + "'");
}

// Resolve the (payload, sidecar) pair from either half of it.
std::pair<fs::path, fs::path> raw_pair(const fs::path& path) {
  if (path.extension() == ".json") {
    fs::path payload = path;
    payload.replace_extension(".raw");
    return {payload, path};
  }
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  return {path, sidecar};
}

void check_finite(const Volume& v) {
  for (int d = 0; d < v.depth; ++d) {
    const float* s = v.slice(d);
    const size_t n = static_cast<size_t>(v.height) * v.width;
    for (size_t i = 0; i < n; ++i)
      if (!std::isfinite(s[i]))
        throw Error("volume contains a non-finite voxel in slice " + std::to_string(d));
  }
}

Volume load_raw(const fs::path& path) {
  const auto [payload, sidecar_path] = raw_pair(path);
  if (!fs::exists(sidecar_path)) throw Error("missing sidecar " + sidecar_path.string());
  if (!fs::exists(payload)) throw Error("missing raw payload " + payload.string());
  const Sidecar sc = parse_sidecar(sidecar_path);

  const size_t voxels = static_cast<size_t>(sc.depth) * sc.height * sc.width;
  const size_t expected_bytes = voxels * dtype_size(sc.dtype);
  const size_t actual_bytes = fs::file_size(payload);
  if (actual_bytes != expected_bytes)
    throw Error("shape mismatch: sidecar declares " + std::to_string(sc.depth) + "x" +
                std::to_string(sc.height) + "x" + std::to_string(sc.width) + " " + sc.dtype +
                " (" + std::to_string(expected_bytes) + " bytes) but " + payload.string() +
                " holds " + std::to_string(actual_bytes) + " bytes");

  std::ifstream in(payload, std::ios::binary);
  if (!in) throw Error("cannot open " + payload.string());
  Volume v(sc.depth, sc.height, sc.width);
  v.voxel_size_um = sc.voxel_size_um;

  if (sc.dtype == "float32") {
    in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(expected_bytes));
  } else {
    std::vector<char> buf(expected_bytes);
    in.read(buf.data(), static_cast<std::streamsize>(expected_bytes));
    if (sc.dtype == "uint8") {
      const auto* p = reinterpret_cast<const uint8_t*>(buf.data());
      for (size_t i = 0; i < voxels; ++i) v.data[i] = static_cast<float>(p[i]);
    } else if (sc.dtype == "uint16") {
      const auto* p = reinterpret_cast<const uint16_t*>(buf.data());
      for (size_t i = 0; i < voxels; ++i) v.data[i] = static_cast<float>(p[i]);
    } else {  // float64
      const auto* p = reinterpret_cast<const double*>(buf.data());
      for (size_t i = 0; i < voxels; ++i) v.data[i] = static_cast<float>(p[i]);
    }
  }
  if (!in) throw Error("short read from " + payload.string());
  check_finite(v);
  v.update_range();
  return v;
}

// Minimal binary PGM (P5) reader; 16-bit values are big-endian per the format.
void read_pgm(const fs::path& path, std::vector<float>& out, int& rows, int& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw Error(path.string() + ": expected binary PGM (P5), got '" + magic + "'");
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw Error(path.string() + ": truncated PGM header");
  };
  cols = std::stoi(next_token());
  rows = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  in.get();  // single whitespace after maxval
  const size_t n = static_cast<size_t>(rows) * cols;
  out.resize(n);
  if (maxval < 256) {
    std::vector<uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!in) throw Error(path.string() + ": truncated PGM payload");
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(buf[i]);
  } else {
    std::vector<uint8_t> buf(n * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
    if (!in) throw Error(path.string() + ": truncated PGM payload");
    for (size_t i = 0; i < n; ++i)
      out[i] = static_cast<float>((static_cast<uint16_t>(buf[2 * i]) << 8) | buf[2 * i + 1]);
  }
}

Volume load_slice_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  if (files.empty()) throw Error("no .pgm slices in " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  Volume v;
  v.depth = static_cast<int>(files.size());
  std::vector<float> slice;
  for (int d = 0; d < v.depth; ++d) {
    int rows = 0, cols = 0;
    read_pgm(files[d], slice, rows, cols);
    if (d == 0) {
      v.height = rows;
      v.width = cols;
      v.data.resize(static_cast<size_t>(v.depth) * rows * cols);
    } else if (rows != v.height || cols != v.width) {
      throw Error("shape mismatch: slice " + std::to_string(d) + " (" + files[d].filename().string() +
                  ") is " + std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                  std::to_string(v.height) + "x" + std::to_string(v.width));
    }
    std::copy(slice.begin(), slice.end(), v.data.begin() + static_cast<size_t>(d) * v.height * v.width);
  }
  check_finite(v);
  v.update_range();
  return v;
}

void write_sidecar(const fs::path& payload, const std::string& dtype, int d, int h, int w,
                   std::optional<double> voxel_size_um, std::optional<int> num_classes) {
  json j;
  j["dtype"] = dtype;
  j["depth"] = d;
  j["height"] = h;
  j["width"] = w;
  if (voxel_size_um) j["voxel_size_um"] = *voxel_size_um;
  if (num_classes) j["num_classes"] = *num_classes;
  fs::path sidecar = payload;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  if (!out) throw Error("cannot write " + sidecar.string());
  out << j.dump(2) << "\n";
}

}  // namespace

VolumeFormat volume_format_from_string(const std::string& s) {
  if (s == "slice_dir") return VolumeFormat::slice_dir;
  if (s == "raw") return VolumeFormat::raw;
  throw ConfigError("unknown volume format '" + s + "' (expected slice_dir or raw)");
}

std::string to_string(VolumeFormat f) {
  return f == VolumeFormat::slice_dir ? "slice_dir" : "raw";
}

Volume load_volume(const fs::path& path, VolumeFormat format) {
  if (!fs::exists(path)) throw Error("no such path: " + path.string());
  switch (format) {
    case VolumeFormat::slice_dir: return load_slice_dir(path);
    case VolumeFormat::raw: return load_raw(path);
  }
  throw Error("unreachable volume format");
}

void save_volume(const Volume& v, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (!out) throw Error("short write to " + path.string());
  write_sidecar(path, "float32", v.depth, v.height, v.width, v.voxel_size_um, std::nullopt);
}

void save_labels(const LabelVolume& lv, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(lv.labels.data()),
            static_cast<std::streamsize>(lv.labels.size()));
  if (!out) throw Error("short write to " + path.string());
  write_sidecar(path, "uint8", lv.depth, lv.height, lv.width, std::nullopt, lv.num_classes);
}

LabelVolume load_labels(const fs::path& path) {
  const auto [payload, sidecar_path] = raw_pair(path);
  if (!fs::exists(sidecar_path)) throw Error("missing sidecar " + sidecar_path.string());
  if (!fs::exists(payload)) throw Error("missing label payload " + payload.string());
  const Sidecar sc = parse_sidecar(sidecar_path);
  if (sc.dtype != "uint8") throw Error("label volume must be uint8, got " + sc.dtype);
  if (!sc.num_classes) throw Error("label sidecar " + sidecar_path.string() + " missing num_classes");

  const size_t voxels = static_cast<size_t>(sc.depth) * sc.height * sc.width;
  if (fs::file_size(payload) != voxels)
    throw Error("shape mismatch: label payload " + payload.string() + " holds " +
                std::to_string(fs::file_size(payload)) + " bytes, sidecar declares " +
                std::to_string(voxels));
  LabelVolume lv(sc.depth, sc.height, sc.width, *sc.num_classes, LabelProvenance::pseudo);
  std::ifstream in(payload, std::ios::binary);
  in.read(reinterpret_cast<char*>(lv.labels.data()), static_cast<std::streamsize>(voxels));
  if (!in) throw Error("short read from " + payload.string());
  for (size_t i = 0; i < voxels; ++i)
    if (lv.labels[i] >= lv.num_classes)
      throw Error("label " + std::to_string(lv.labels[i]) + " out of range for num_classes=" +
                  std::to_string(lv.num_classes));
  return lv;
}

void write_pgm(const fs::path& path, const uint8_t* data, int rows, int cols) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << cols << " " << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(rows) * cols);
}

void write_ppm(const fs::path& path, const uint8_t* rgb, int rows, int cols) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P6\n" << cols << " " << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb), static_cast<std::streamsize>(rows) * cols * 3);
}

void class_color(int class_index, uint8_t rgb[3]) {
  static const uint8_t palette[][3] = {
      {0, 0, 0},      {31, 119, 180}, {255, 215, 0},  {214, 39, 40},
      {44, 160, 44},  {148, 103, 189}, {140, 86, 75},  {227, 119, 194},
      {127, 127, 127}, {23, 190, 207},
  };
  const int n = static_cast<int>(sizeof(palette) / sizeof(palette[0]));
  const uint8_t* c = palette[class_index % n];
  rgb[0] = c[0];
  rgb[1] = c[1];
  rgb[2] = c[2];
}

void write_label_ppm(const fs::path& path, const LabelMap& m) {
  std::vector<uint8_t> rgb(static_cast<size_t>(m.rows) * m.cols * 3);
  for (size_t i = 0; i < m.labels.size(); ++i) class_color(m.labels[i], &rgb[i * 3]);
  write_ppm(path, rgb.data(), m.rows, m.cols);
}

}  // namespace sctseg
