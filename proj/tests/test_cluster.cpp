#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sctseg/cluster.hpp"
#include "sctseg/phantom.hpp"

using namespace sctseg;

namespace {

// Global 1D k-means optimum by brute force: optimal clusters of sorted
// scalars are contiguous runs, so enumerating cut positions is exhaustive.
double exhaustive_kmeans_sse(std::vector<float> data, int k,
                             std::vector<double>* best_centroids = nullptr) {
  std::sort(data.begin(), data.end());
  const int n = static_cast<int>(data.size());
  std::vector<int> cuts(k - 1);  // cut[i] = first index of cluster i+1
  for (int i = 0; i < k - 1; ++i) cuts[i] = i + 1;
  double best = 1e300;

  auto sse_of = [&](const std::vector<int>& c) {
    double total = 0.0;
    std::vector<double> cents;
    int start = 0;
    for (int j = 0; j <= k - 1; ++j) {
      const int end = j == k - 1 ? n : c[j];
      double mean = 0.0;
      for (int i = start; i < end; ++i) mean += data[i];
      mean /= (end - start);
      for (int i = start; i < end; ++i) total += (data[i] - mean) * (data[i] - mean);
      cents.push_back(mean);
      start = end;
    }
    if (total < best && best_centroids) *best_centroids = cents;
    return total;
  };

  // odometer over strictly increasing cut positions
  while (true) {
    best = std::min(best, sse_of(cuts));
    int i = k - 2;
    while (i >= 0) {
      ++cuts[i];
      const int limit = n - (k - 2 - i);
      if (cuts[i] < limit) {
        for (int j = i + 1; j < k - 1; ++j) cuts[j] = cuts[j - 1] + 1;
        break;
      }
      --i;
    }
    if (i < 0) break;
  }
  return best;
}

}  // namespace

TEST_CASE("kmeans on the 5-point instance matches the exhaustive optimum") {
  const std::vector<float> data = {0.1f, 0.15f, 0.8f, 0.85f, 0.9f};
  ClusterModel m = kmeans_fit(data, 2, 42);
  REQUIRE(m.centroids.size() == 2);
  // means of the float32 inputs, not of the decimal literals
  const double low = (static_cast<double>(0.1f) + static_cast<double>(0.15f)) / 2.0;
  const double high = (static_cast<double>(0.8f) + static_cast<double>(0.85f) +
                       static_cast<double>(0.9f)) / 3.0;
  CHECK(m.centroids[0] == doctest::Approx(low).epsilon(1e-12));
  CHECK(m.centroids[1] == doctest::Approx(high).epsilon(1e-12));

  std::vector<double> oracle_cents;
  const double oracle = exhaustive_kmeans_sse(data, 2, &oracle_cents);
  CHECK(m.objective == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(m.centroids[0] == doctest::Approx(oracle_cents[0]).epsilon(1e-9));
}

TEST_CASE("kmeans objective is never below the global optimum") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<float> data(12);
    for (float& v : data) v = static_cast<float>(rng.uniform());
    for (int k = 2; k <= 3; ++k) {
      ClusterModel m = kmeans_fit(data, k, 100 + trial);
      const double oracle = exhaustive_kmeans_sse(data, k);
      CHECK(m.objective >= oracle - 1e-9);
      // ascending canonical order
      for (size_t i = 1; i < m.centroids.size(); ++i)
        CHECK(m.centroids[i] > m.centroids[i - 1]);
    }
  }
}

TEST_CASE("kmeans requires K distinct values and K in range") {
  const std::vector<float> flat = {0.5f, 0.5f, 0.5f};
  CHECK_THROWS_AS(kmeans_fit(flat, 2, 1), Error);
  const std::vector<float> two = {0.1f, 0.9f, 0.1f, 0.9f};
  CHECK_THROWS_AS(kmeans_fit(two, 3, 1), Error);
  CHECK_NOTHROW(kmeans_fit(two, 2, 1));
}

TEST_CASE("assign_labels matches brute force nearest centroid") {
  Rng rng(31);
  std::vector<float> fit_data(500);
  for (float& v : fit_data) v = static_cast<float>(rng.uniform());
  ClusterModel m = kmeans_fit(fit_data, 4, 9);

  std::vector<float> pixels(10000);
  for (float& v : pixels) v = static_cast<float>(rng.uniform());
  std::vector<uint8_t> got = assign_labels(pixels, m);
  for (size_t i = 0; i < pixels.size(); ++i) {
    int best = 0;
    double bd = std::abs(pixels[i] - m.centroids[0]);
    for (size_t c = 1; c < m.centroids.size(); ++c) {
      const double d = std::abs(pixels[i] - m.centroids[c]);
      if (d < bd) {  // strict: ties keep the lower class
        bd = d;
        best = static_cast<int>(c);
      }
    }
    REQUIRE(got[i] == best);
  }
}

TEST_CASE("midpoint pixels go to the lower class") {
  ClusterModel m;
  m.method = ClusterMethod::kmeans;
  m.num_classes = 2;
  m.centroids = {0.25, 0.75};  // midpoint 0.5 is exact in binary
  CHECK(assign_label(0.5f, m) == 0);
  CHECK(assign_label(0.51f, m) == 1);
  CHECK(assign_label(0.49f, m) == 0);
}

TEST_CASE("multi_otsu K=2 matches an exhaustive threshold scan") {
  Rng rng(5);
  std::vector<float> data(4000);
  for (size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(i % 2 == 0 ? 0.25 + 0.08 * rng.normal()
                                            : 0.75 + 0.06 * rng.normal());
  const int bins = 128;
  ClusterModel m = multi_otsu_fit(data, 2, bins);
  REQUIRE(m.thresholds.size() == 1);

  // independent scan over the same binning
  const auto [mn_it, mx_it] = std::minmax_element(data.begin(), data.end());
  const double lo = *mn_it, hi = *mx_it;
  const double bw = (hi - lo) / bins;
  std::vector<double> hist(bins, 0.0), centers(bins);
  for (int b = 0; b < bins; ++b) centers[b] = lo + (b + 0.5) * bw;
  for (float v : data) {
    int b = static_cast<int>((v - lo) / bw);
    hist[std::clamp(b, 0, bins - 1)] += 1.0;
  }
  double best_sigma = -1.0, best_t = 0.0;
  for (int cut = 1; cut < bins; ++cut) {
    double w0 = 0, s0 = 0, w1 = 0, s1 = 0;
    for (int b = 0; b < cut; ++b) w0 += hist[b], s0 += hist[b] * centers[b];
    for (int b = cut; b < bins; ++b) w1 += hist[b], s1 += hist[b] * centers[b];
    if (w0 == 0 || w1 == 0) continue;
    const double n = w0 + w1, mu = (s0 + s1) / n;
    const double sigma =
        (w0 / n) * (s0 / w0 - mu) * (s0 / w0 - mu) + (w1 / n) * (s1 / w1 - mu) * (s1 / w1 - mu);
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_t = lo + cut * bw;
    }
  }
  CHECK(m.thresholds[0] == doctest::Approx(best_t).epsilon(1e-9));
}

TEST_CASE("multi_otsu thresholds ascend and label the intervals") {
  std::vector<float> data;
  Rng rng(3);
  for (int i = 0; i < 3000; ++i) {
    const double c = i % 3 == 0 ? 0.15 : (i % 3 == 1 ? 0.5 : 0.85);
    data.push_back(static_cast<float>(c + 0.04 * rng.normal()));
  }
  ClusterModel m = multi_otsu_fit(data, 3);
  REQUIRE(m.thresholds.size() == 2);
  CHECK(m.thresholds[0] < m.thresholds[1]);
  CHECK(assign_label(0.0f, m) == 0);
  CHECK(assign_label(0.5f, m) == 1);
  CHECK(assign_label(1.0f, m) == 2);
  CHECK(assign_label(static_cast<float>(m.thresholds[0]), m) == 0);  // boundary: lower class
}

TEST_CASE("gmm recovers two separated components") {
  Rng rng(17);
  std::vector<float> data;
  for (int i = 0; i < 3000; ++i) data.push_back(static_cast<float>(0.3 + 0.03 * rng.normal()));
  for (int i = 0; i < 1000; ++i) data.push_back(static_cast<float>(0.8 + 0.02 * rng.normal()));
  ClusterModel m = gmm_fit(data, 2, 4);
  REQUIRE(m.components.size() == 2);
  CHECK(m.components[0].mean == doctest::Approx(0.3).epsilon(0.05));
  CHECK(m.components[1].mean == doctest::Approx(0.8).epsilon(0.05));
  CHECK(m.components[0].weight + m.components[1].weight == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(m.components[0].weight == doctest::Approx(0.75).epsilon(0.05));
  for (const auto& c : m.components) CHECK(c.variance >= 1e-8);

  // posterior assignment matches an independent computation
  for (float x : {0.1f, 0.3f, 0.55f, 0.8f, 0.99f}) {
    double best_lp = -1e300;
    int best = 0;
    for (size_t c = 0; c < m.components.size(); ++c) {
      const auto& g = m.components[c];
      const double lp = std::log(g.weight) - 0.5 * std::log(2.0 * 3.14159265358979323846 * g.variance) -
                        (x - g.mean) * (x - g.mean) / (2.0 * g.variance);
      if (lp > best_lp) {
        best_lp = lp;
        best = static_cast<int>(c);
      }
    }
    CHECK(assign_label(x, m) == best);
  }
}

TEST_CASE("pseudo labels recover a noiseless phantom exactly") {
  PhantomSpec spec;
  spec.depth = 8;
  spec.height = 48;
  spec.width = 48;
  spec.num_classes = 3;
  spec.drift = DriftKind::none;
  spec.noise_sigma = 0.0;
  spec.streaks_per_slice = 0.0;
  spec.fringe_gain = 0.0;
  PhantomResult ph = generate_phantom(spec, 21);

  for (ClusterMethod method :
       {ClusterMethod::kmeans, ClusterMethod::multi_otsu, ClusterMethod::gmm}) {
    PseudoLabelResult res = generate_pseudolabels(ph.volume, method, 3, 77);
    REQUIRE(res.labels.labels.size() == ph.labels.labels.size());
    CHECK(res.labels.labels == ph.labels.labels);
    CHECK(res.labels.provenance == LabelProvenance::pseudo);
  }
}

TEST_CASE("pseudo label generation is deterministic and validates input") {
  PhantomSpec spec;
  spec.depth = 6;
  spec.height = 32;
  spec.width = 32;
  spec.noise_sigma = 0.05;
  PhantomResult ph = generate_phantom(spec, 5);

  PseudoLabelOptions opts;
  opts.fit_subsample = 1000;  // smaller than the volume: fit on a sample, assign all
  PseudoLabelResult a = generate_pseudolabels(ph.volume, ClusterMethod::kmeans, 3, 11, opts);
  PseudoLabelResult b = generate_pseudolabels(ph.volume, ClusterMethod::kmeans, 3, 11, opts);
  CHECK(a.labels.labels == b.labels.labels);
  CHECK(a.model.centroids == b.model.centroids);

  Volume raw = ph.volume;
  for (float& v : raw.data) v *= 255.0f;
  raw.update_range();
  CHECK_THROWS_AS(generate_pseudolabels(raw, ClusterMethod::kmeans, 3, 1), Error);
  CHECK_THROWS_AS(generate_pseudolabels(ph.volume, ClusterMethod::kmeans, 1, 1), Error);
  CHECK_THROWS_AS(generate_pseudolabels(ph.volume, ClusterMethod::kmeans, 256, 1), Error);
}
