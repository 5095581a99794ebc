#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sctseg/cluster.hpp"
#include "sctseg/model.hpp"
#include "sctseg/phantom.hpp"
#include "sctseg/train.hpp"
#include "sctseg/volume_io.hpp"

namespace sctseg {

/// Everything a run needs, resolved from JSON + --set overrides. K and
/// the stack size live in one place each (num_classes, train.num_slices)
/// and are copied into the model config during parsing.
struct RunConfig {
  std::string run_id = "run";
  std::string output_dir = "out";
  uint64_t seed = 1;
  int num_classes = 4;

  std::string input_path;  // empty when the phantom subcommand makes the data
  VolumeFormat input_format = VolumeFormat::raw;
  std::string labels_path;
  NormalizeMode normalize;

  PhantomSpec phantom;
  ClusterMethod cluster_method = ClusterMethod::kmeans;
  PseudoLabelOptions pseudo;
  ModelConfig model;
  TrainConfig train;

  std::vector<int> eval_ignore = {0};
  std::string gradcam_layer = "dec_l0";
  int gradcam_class = 1;
  int gradcam_slice = -1;  // -1 selects the middle slice

  std::filesystem::path run_dir() const {
    return std::filesystem::path(output_dir) / run_id;
  }
};

/// Parse, applying defaults for missing keys and rejecting unknown ones.
/// `overrides` are dotted assignments like "train.batch_size=8"; values
/// parse as JSON when possible, else as strings. SCTSEG_OUTPUT_DIR, when
/// set, wins over both the file and the overrides (output_dir only).
RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides = {});

/// The fully materialised form, defaults included, for config.resolved.json.
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace sctseg
