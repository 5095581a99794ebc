#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sctseg/common.hpp"
#include "sctseg/volume.hpp"

namespace sctseg {

enum class ClusterMethod { kmeans, multi_otsu, gmm };

ClusterMethod cluster_method_from_string(const std::string& s);
std::string to_string(ClusterMethod m);

struct GmmComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

/// Fitted intensity-clustering model. Class order is canonical: index
/// increases with intensity (ascending centroids / thresholds / means), so
/// class 0 is always the lowest-intensity cluster.
struct ClusterModel {
  ClusterMethod method = ClusterMethod::kmeans;
  int num_classes = 2;
  std::vector<double> centroids;        // kmeans: K ascending
  std::vector<double> thresholds;       // multi_otsu: K-1 strictly ascending
  std::vector<GmmComponent> components; // gmm: K, means ascending
  double objective = 0.0;  // kmeans: within-cluster SS; otsu: between-class
                           // variance; gmm: total log-likelihood
  double fit_seconds = 0.0;
};

/// Lloyd's iteration on scalar data with k-means++ seeding. Centroids come
/// back ascending; the objective is non-increasing across iterations.
/// Requires at least K distinct values.
ClusterModel kmeans_fit(std::span<const float> pixels, int k, uint64_t seed,
                        int max_iter = 100, double tol = 1e-7);

/// Exhaustive threshold search (dynamic program over the histogram)
/// maximizing between-class variance.
ClusterModel multi_otsu_fit(std::span<const float> pixels, int k, int num_bins = 256);

/// EM for a 1D Gaussian mixture, initialized from kmeans_fit with the same
/// seed. Variances are floored at 1e-8 ([0,1]-scaled data).
ClusterModel gmm_fit(std::span<const float> pixels, int k, uint64_t seed,
                     int max_iter = 200, double tol = 1e-9);

/// Label one pixel: nearest centroid (ties to the lowest class index),
/// threshold interval, or maximum posterior responsibility.
int assign_label(float pixel, const ClusterModel& model);

/// Vectorized assign_label.
std::vector<uint8_t> assign_labels(std::span<const float> pixels, const ClusterModel& model);

struct PseudoLabelOptions {
  size_t fit_subsample = 1'000'000;  // fit on this many voxels, assign all
  int max_iter = 100;
  double tol = 1e-7;
  int histogram_bins = 256;
};

struct PseudoLabelResult {
  LabelVolume labels;
  ClusterModel model;
  double generate_seconds = 0.0;  // fit + full-volume assignment wall time
};

/// Stage 1: fit on a uniform random subsample of voxels, assign every voxel.
/// The volume must already be normalized to [0, 1].
PseudoLabelResult generate_pseudolabels(const Volume& v, ClusterMethod method, int k,
                                        uint64_t seed, const PseudoLabelOptions& opts = {});

}  // namespace sctseg
