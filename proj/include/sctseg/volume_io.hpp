#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sctseg/volume.hpp"

namespace sctseg {

enum class VolumeFormat { slice_dir, raw };

VolumeFormat volume_format_from_string(const std::string& s);
std::string to_string(VolumeFormat f);

/// Load a volume. `slice_dir`: a directory of binary PGM slices whose
/// zero-padded numeric filenames define the slice order. `raw`: a flat
/// binary file plus a JSON sidecar (keys dtype, depth, height, width,
/// voxel_size_um); `path` may point at either the payload or the sidecar.
/// Rejects NaN/Inf voxels naming the offending slice.
Volume load_volume(const std::filesystem::path& path, VolumeFormat format);

/// Write a volume as float32 raw payload + JSON sidecar. `path` is the
/// payload path; the sidecar lands next to it with a .json extension.
void save_volume(const Volume& v, const std::filesystem::path& path);

/// Labels persist as raw unsigned 8-bit plus the same sidecar schema with
/// an added num_classes key.
void save_labels(const LabelVolume& lv, const std::filesystem::path& path);
LabelVolume load_labels(const std::filesystem::path& path);

/// 8-bit binary PGM/PPM writers (overlays, heatmaps, phantom previews).
void write_pgm(const std::filesystem::path& path, const uint8_t* data, int rows, int cols);
void write_ppm(const std::filesystem::path& path, const uint8_t* rgb, int rows, int cols);

/// Fixed class -> color palette used by every overlay the toolkit emits.
/// Index 0 is black (background); the rest cycle through saturated hues.
void class_color(int class_index, uint8_t rgb[3]);

/// Render a label map with the class palette.
void write_label_ppm(const std::filesystem::path& path, const LabelMap& m);

}  // namespace sctseg
