#pragma once

#include <filesystem>
#include <string>

#include "sctseg/config.hpp"

namespace sctseg {

/// Artifact layout under output_dir/run_id. Every subcommand reads and
/// writes through these paths so runs compose.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path resolved_config;
  std::filesystem::path volume;         // float32 raw + sidecar
  std::filesystem::path gt_labels;
  std::filesystem::path pseudo_labels;
  std::filesystem::path cluster_report;
  std::filesystem::path phantom_report;
  std::filesystem::path stage2_ckpt;
  std::filesystem::path stage3_ckpt;
  std::filesystem::path metrics;        // metrics.jsonl, one record per epoch
  std::filesystem::path pred_labels;
  std::filesystem::path eval_report;
};

RunPaths run_paths(const RunConfig& cfg);

void run_phantom(const RunConfig& cfg);
void run_pseudolabel(const RunConfig& cfg);
void run_train(const RunConfig& cfg, int stage);
void run_eval(const RunConfig& cfg, const std::string& checkpoint_override = "");
void run_gradcam(const RunConfig& cfg, const std::string& checkpoint_override = "");
void run_confusion(const RunConfig& cfg, const std::string& labels_a,
                   const std::string& labels_b);

}  // namespace sctseg
