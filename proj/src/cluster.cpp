#include "sctseg/cluster.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace sctseg {

namespace {

constexpr double kGmmVarianceFloor = 1e-8;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

size_t count_distinct_sorted(const std::vector<double>& sorted) {
  size_t n = sorted.empty() ? 0 : 1;
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) ++n;
  return n;
}

// Midpoints between adjacent ascending centroids. A pixel equal to a
// midpoint is equidistant from both centroids and goes to the lower index.
std::vector<double> centroid_midpoints(const std::vector<double>& c) {
  std::vector<double> mids(c.size() - 1);
  for (size_t j = 0; j + 1 < c.size(); ++j) mids[j] = 0.5 * (c[j] + c[j + 1]);
  return mids;
}

int interval_label(double p, const std::vector<double>& ascending_bounds) {
  return static_cast<int>(std::lower_bound(ascending_bounds.begin(), ascending_bounds.end(), p) -
                          ascending_bounds.begin());
}

std::vector<double> kmeans_pp_init(const std::vector<double>& values, int k, Rng& rng) {
  const size_t n = values.size();
  std::vector<double> centers;
  centers.reserve(k);
  centers.push_back(values[rng.uniform_index(n)]);
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (double mu : centers) {
        const double d = values[i] - mu;
        best = std::min(best, d * d);
      }
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All mass already covered; fall back to the next distinct value.
      for (size_t i = 0; i < n; ++i) {
        if (std::find(centers.begin(), centers.end(), values[i]) == centers.end()) {
          centers.push_back(values[i]);
          break;
        }
      }
      continue;
    }
    double target = rng.uniform() * total;
    size_t pick = n - 1;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= target) {
        pick = i;
        break;
      }
    }
    centers.push_back(values[pick]);
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

}  // namespace

ClusterMethod cluster_method_from_string(const std::string& s) {
  if (s == "kmeans") return ClusterMethod::kmeans;
  if (s == "multi_otsu") return ClusterMethod::multi_otsu;
  if (s == "gmm") return ClusterMethod::gmm;
  throw ConfigError("unknown clustering method '" + s + "'");
}

std::string to_string(ClusterMethod m) {
  switch (m) {
    case ClusterMethod::kmeans: return "kmeans";
    case ClusterMethod::multi_otsu: return "multi_otsu";
    case ClusterMethod::gmm: return "gmm";
  }
  return "?";
}

ClusterModel kmeans_fit(std::span<const float> pixels, int k, uint64_t seed, int max_iter,
                        double tol) {
  if (k < 1) throw Error("kmeans_fit: K must be >= 1");
  if (pixels.size() < static_cast<size_t>(k))
    throw Error("kmeans_fit: " + std::to_string(pixels.size()) + " pixels for K=" +
                std::to_string(k));
  const double t0 = now_seconds();

  std::vector<double> sorted(pixels.begin(), pixels.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t distinct = count_distinct_sorted(sorted);
  if (distinct < static_cast<size_t>(k))
    throw Error("kmeans_fit: only " + std::to_string(distinct) + " distinct values for K=" +
                std::to_string(k) + " (need " + std::to_string(k - distinct) + " more)");

  const size_t n = sorted.size();
  // Prefix sums over the sorted values make each Lloyd step O(K log n).
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + sorted[i];
    s2[i + 1] = s2[i] + sorted[i] * sorted[i];
  }

  Rng rng(derive_seed(seed, 0x6b6d65616e73ULL));
  std::vector<double> centers = kmeans_pp_init(sorted, k, rng);

  std::vector<size_t> bounds(k + 1);
  auto partition = [&]() {
    bounds[0] = 0;
    const std::vector<double> mids = centroid_midpoints(centers);
    for (int j = 0; j < k - 1; ++j)
      bounds[j + 1] = static_cast<size_t>(
          std::upper_bound(sorted.begin(), sorted.end(), mids[j]) - sorted.begin());
    bounds[k] = n;
  };
  auto objective = [&]() {
    double j_total = 0.0;
    for (int j = 0; j < k; ++j) {
      const size_t a = bounds[j], b = bounds[j + 1];
      const double cnt = static_cast<double>(b - a);
      j_total += (s2[b] - s2[a]) - 2.0 * centers[j] * (s1[b] - s1[a]) + cnt * centers[j] * centers[j];
    }
    return j_total;
  };

  double j_value = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    partition();
    double max_move = 0.0;
    for (int j = 0; j < k; ++j) {
      const size_t a = bounds[j], b = bounds[j + 1];
      if (b <= a) continue;  // empty cluster keeps its centroid
      const double mu = (s1[b] - s1[a]) / static_cast<double>(b - a);
      max_move = std::max(max_move, std::abs(mu - centers[j]));
      centers[j] = mu;
    }
    std::sort(centers.begin(), centers.end());
    if (max_move < tol) break;
  }
  partition();
  j_value = objective();

  ClusterModel model;
  model.method = ClusterMethod::kmeans;
  model.num_classes = k;
  model.centroids = centers;
  model.objective = j_value;
  model.fit_seconds = now_seconds() - t0;
  return model;
}

ClusterModel multi_otsu_fit(std::span<const float> pixels, int k, int num_bins) {
  if (k < 2) throw Error("multi_otsu_fit: K must be >= 2");
  if (num_bins < k) throw Error("multi_otsu_fit: need at least K histogram bins");
  if (pixels.empty()) throw Error("multi_otsu_fit: empty pixel set");
  const double t0 = now_seconds();

  const auto [lo_it, hi_it] = std::minmax_element(pixels.begin(), pixels.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw Error("multi_otsu_fit: degenerate histogram (constant data)");
  const double bin_width = (hi - lo) / num_bins;

  std::vector<double> count(num_bins, 0.0);
  for (float p : pixels) {
    int b = static_cast<int>((static_cast<double>(p) - lo) / bin_width);
    b = std::clamp(b, 0, num_bins - 1);
    count[b] += 1.0;
  }
  const int nonempty = static_cast<int>(std::count_if(count.begin(), count.end(),
                                                      [](double c) { return c > 0.0; }));
  if (nonempty < k)
    throw Error("multi_otsu_fit: degenerate histogram, " + std::to_string(nonempty) +
                " occupied bins for K=" + std::to_string(k));

  // Bin centers as representative values; prefix sums for segment stats.
  std::vector<double> w(num_bins + 1, 0.0), wx(num_bins + 1, 0.0);
  for (int b = 0; b < num_bins; ++b) {
    const double x = lo + (b + 0.5) * bin_width;
    w[b + 1] = w[b] + count[b];
    wx[b + 1] = wx[b] + count[b] * x;
  }
  const double total = w[num_bins];
  const double mean_total = wx[num_bins] / total;

  // seg(a, b]: contribution W * mu^2 of the class covering bins [a, b).
  auto seg = [&](int a, int b) {
    const double cw = w[b] - w[a];
    if (cw <= 0.0) return 0.0;
    const double cs = wx[b] - wx[a];
    return cs * cs / cw;
  };

  // DP over "class c ends at bin boundary b" maximizing sum of W*mu^2,
  // which maximizes between-class variance (mu_total is fixed).
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(k, std::vector<double>(num_bins + 1, neg_inf));
  std::vector<std::vector<int>> prev(k, std::vector<int>(num_bins + 1, -1));
  for (int b = 1; b <= num_bins; ++b) best[0][b] = seg(0, b);
  for (int c = 1; c < k; ++c) {
    for (int b = c + 1; b <= num_bins; ++b) {
      for (int t = c; t < b; ++t) {
        if (best[c - 1][t] == neg_inf) continue;
        const double cand = best[c - 1][t] + seg(t, b);
        if (cand > best[c][b]) {
          best[c][b] = cand;
          prev[c][b] = t;
        }
      }
    }
  }

  std::vector<int> cut(k - 1);  // cut[j] = first bin of class j+1
  int b = num_bins;
  for (int c = k - 1; c >= 1; --c) {
    cut[c - 1] = prev[c][b];
    b = prev[c][b];
  }

  ClusterModel model;
  model.method = ClusterMethod::multi_otsu;
  model.num_classes = k;
  model.thresholds.resize(k - 1);
  for (int j = 0; j < k - 1; ++j) model.thresholds[j] = lo + cut[j] * bin_width;
  model.objective = best[k - 1][num_bins] / total - mean_total * mean_total;
  model.fit_seconds = now_seconds() - t0;
  return model;
}

ClusterModel gmm_fit(std::span<const float> pixels, int k, uint64_t seed, int max_iter,
                     double tol) {
  if (k < 1) throw Error("gmm_fit: K must be >= 1");
  if (pixels.size() < static_cast<size_t>(k))
    throw Error("gmm_fit: too few pixels for K=" + std::to_string(k));
  const double t0 = now_seconds();
  const size_t n = pixels.size();

  // Initialize from kmeans with the same seed.
  ClusterModel init = kmeans_fit(pixels, k, seed, 50, 1e-6);
  const std::vector<double> mids =
      k > 1 ? centroid_midpoints(init.centroids) : std::vector<double>{};
  std::vector<GmmComponent> comp(k);
  {
    std::vector<double> sum(k, 0.0), sum2(k, 0.0), cnt(k, 0.0);
    for (float pf : pixels) {
      const double p = pf;
      const int j = interval_label(p, mids);
      sum[j] += p;
      sum2[j] += p * p;
      cnt[j] += 1.0;
    }
    for (int j = 0; j < k; ++j) {
      const double c = std::max(cnt[j], 1.0);
      comp[j].weight = cnt[j] / static_cast<double>(n);
      comp[j].mean = cnt[j] > 0 ? sum[j] / cnt[j] : init.centroids[j];
      const double var = sum2[j] / c - comp[j].mean * comp[j].mean;
      comp[j].variance = std::max(var, kGmmVarianceFloor);
      comp[j].weight = std::max(comp[j].weight, 1e-12);
    }
  }

  std::vector<double> resp(static_cast<size_t>(k));
  std::vector<double> nj(k), mu_acc(k), var_acc(k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  double ll = prev_ll;

  for (int iter = 0; iter < max_iter; ++iter) {
    std::fill(nj.begin(), nj.end(), 0.0);
    std::fill(mu_acc.begin(), mu_acc.end(), 0.0);
    std::fill(var_acc.begin(), var_acc.end(), 0.0);
    ll = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double x = pixels[i];
      double max_log = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = x - comp[j].mean;
        resp[j] = std::log(comp[j].weight) - 0.5 * std::log(2.0 * M_PI * comp[j].variance) -
                  d * d / (2.0 * comp[j].variance);
        max_log = std::max(max_log, resp[j]);
      }
      double denom = 0.0;
      for (int j = 0; j < k; ++j) denom += std::exp(resp[j] - max_log);
      ll += max_log + std::log(denom);
      for (int j = 0; j < k; ++j) {
        const double r = std::exp(resp[j] - max_log) / denom;
        nj[j] += r;
        mu_acc[j] += r * x;
      }
    }
    for (int j = 0; j < k; ++j) {
      if (nj[j] <= 1e-10)
        throw Error("gmm_fit: component " + std::to_string(j) +
                    " collapsed (no responsibility mass); try a smaller K");
    }
    // Second pass for variances against the updated means.
    std::vector<double> new_mean(k);
    for (int j = 0; j < k; ++j) new_mean[j] = mu_acc[j] / nj[j];
    for (size_t i = 0; i < n; ++i) {
      const double x = pixels[i];
      double max_log = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = x - comp[j].mean;
        resp[j] = std::log(comp[j].weight) - 0.5 * std::log(2.0 * M_PI * comp[j].variance) -
                  d * d / (2.0 * comp[j].variance);
        max_log = std::max(max_log, resp[j]);
      }
      double denom = 0.0;
      for (int j = 0; j < k; ++j) denom += std::exp(resp[j] - max_log);
      for (int j = 0; j < k; ++j) {
        const double r = std::exp(resp[j] - max_log) / denom;
        const double d = x - new_mean[j];
        var_acc[j] += r * d * d;
      }
    }
    for (int j = 0; j < k; ++j) {
      comp[j].weight = nj[j] / static_cast<double>(n);
      comp[j].mean = new_mean[j];
      comp[j].variance = std::max(var_acc[j] / nj[j], kGmmVarianceFloor);
    }
    if (iter > 0 && std::abs(ll - prev_ll) / static_cast<double>(n) < tol) break;
    prev_ll = ll;
  }

  std::sort(comp.begin(), comp.end(),
            [](const GmmComponent& a, const GmmComponent& b) { return a.mean < b.mean; });
  double wsum = 0.0;
  for (const auto& c : comp) wsum += c.weight;
  for (auto& c : comp) c.weight /= wsum;

  ClusterModel model;
  model.method = ClusterMethod::gmm;
  model.num_classes = k;
  model.components = comp;
  model.objective = ll;
  model.fit_seconds = now_seconds() - t0;
  return model;
}

int assign_label(float pixel, const ClusterModel& model) {
  switch (model.method) {
    case ClusterMethod::kmeans: {
      // Nearest centroid; midpoint ties resolve to the lower class index.
      const std::vector<double> mids = centroid_midpoints(model.centroids);
      return interval_label(pixel, mids);
    }
    case ClusterMethod::multi_otsu:
      return interval_label(pixel, model.thresholds);
    case ClusterMethod::gmm: {
      int best = 0;
      double best_log = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < model.num_classes; ++j) {
        const auto& c = model.components[j];
        const double d = pixel - c.mean;
        const double lg = std::log(c.weight) - 0.5 * std::log(2.0 * M_PI * c.variance) -
                          d * d / (2.0 * c.variance);
        if (lg > best_log) {
          best_log = lg;
          best = j;
        }
      }
      return best;
    }
  }
  return 0;
}

std::vector<uint8_t> assign_labels(std::span<const float> pixels, const ClusterModel& model) {
  std::vector<uint8_t> out(pixels.size());
  if (model.method == ClusterMethod::kmeans || model.method == ClusterMethod::multi_otsu) {
    const std::vector<double> bounds = model.method == ClusterMethod::kmeans
                                           ? centroid_midpoints(model.centroids)
                                           : model.thresholds;
    for (size_t i = 0; i < pixels.size(); ++i)
      out[i] = static_cast<uint8_t>(interval_label(pixels[i], bounds));
  } else {
    for (size_t i = 0; i < pixels.size(); ++i)
      out[i] = static_cast<uint8_t>(assign_label(pixels[i], model));
  }
  return out;
}

PseudoLabelResult generate_pseudolabels(const Volume& v, ClusterMethod method, int k,
                                        uint64_t seed, const PseudoLabelOptions& opts) {
  if (k < 2 || k > 255) throw Error("generate_pseudolabels: K must be in [2, 255]");
  if (v.value_min < 0.0f || v.value_max > 1.0f)
    throw Error("generate_pseudolabels: volume must be normalized to [0,1] first");
  const double t0 = now_seconds();

  // Uniform reservoir subsample for fitting; assignment stays exact on all voxels.
  std::span<const float> fit_data(v.data);
  std::vector<float> reservoir;
  if (v.data.size() > opts.fit_subsample) {
    Rng rng(derive_seed(seed, 0x737562ULL));
    reservoir.assign(v.data.begin(), v.data.begin() + opts.fit_subsample);
    for (size_t i = opts.fit_subsample; i < v.data.size(); ++i) {
      const uint64_t j = rng.uniform_index(i + 1);
      if (j < opts.fit_subsample) reservoir[j] = v.data[i];
    }
    fit_data = reservoir;
  }

  ClusterModel model;
  switch (method) {
    case ClusterMethod::kmeans:
      model = kmeans_fit(fit_data, k, seed, opts.max_iter, opts.tol);
      break;
    case ClusterMethod::multi_otsu:
      model = multi_otsu_fit(fit_data, k, opts.histogram_bins);
      break;
    case ClusterMethod::gmm:
      model = gmm_fit(fit_data, k, seed, opts.max_iter, opts.tol);
      break;
  }

  PseudoLabelResult res;
  res.model = model;
  res.labels = LabelVolume(v.depth, v.height, v.width, k, LabelProvenance::pseudo);
  // Sharded by slice; each slice is independent.
  for (int d = 0; d < v.depth; ++d) {
    const size_t plane = static_cast<size_t>(v.height) * v.width;
    const std::vector<uint8_t> lab =
        assign_labels(std::span<const float>(v.slice(d), plane), model);
    std::copy(lab.begin(), lab.end(), res.labels.labels.begin() + d * plane);
  }
  res.generate_seconds = now_seconds() - t0;
  return res;
}

}  // namespace sctseg
