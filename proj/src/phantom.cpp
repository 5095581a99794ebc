#include "sctseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sctseg/common.hpp"

namespace sctseg {

DriftKind drift_kind_from_string(const std::string& s) {
  if (s == "none") return DriftKind::none;
  if (s == "linear") return DriftKind::linear;
  if (s == "radial") return DriftKind::radial;
  throw ConfigError("phantom: unknown drift kind '" + s + "'");
}

std::string to_string(DriftKind k) {
  switch (k) {
    case DriftKind::none: return "none";
    case DriftKind::linear: return "linear";
    case DriftKind::radial: return "radial";
  }
  throw Error("phantom: bad drift kind value");
}

namespace {

struct Grid {
  int depth, height, width;
  size_t idx(int d, int y, int x) const {
    return (static_cast<size_t>(d) * height + y) * static_cast<size_t>(width) + x;
  }
};

size_t paint_blob(std::vector<uint8_t>& lab, const Grid& g, uint8_t cls, double cd, double cy,
                  double cx, double rz, double ry, double rx) {
  size_t painted = 0;
  const int d0 = std::max(0, static_cast<int>(std::floor(cd - rz)));
  const int d1 = std::min(g.depth - 1, static_cast<int>(std::ceil(cd + rz)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int y1 = std::min(g.height - 1, static_cast<int>(std::ceil(cy + ry)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
  const int x1 = std::min(g.width - 1, static_cast<int>(std::ceil(cx + rx)));
  for (int d = d0; d <= d1; ++d) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double nd = (d - cd) / rz, ny = (y - cy) / ry, nx = (x - cx) / rx;
        if (nd * nd + ny * ny + nx * nx > 1.0) continue;
        uint8_t& l = lab[g.idx(d, y, x)];
        if (l == 1) {  // inclusions only displace matrix, never each other
          l = cls;
          ++painted;
        }
      }
    }
  }
  return painted;
}

size_t paint_curve(std::vector<uint8_t>& lab, const Grid& g, uint8_t cls, Rng& rng,
                   int min_persist) {
  // Random-walk tube, mostly in-plane, with a slow z component sized so
  // the curve spans at least min_persist slices.
  const int steps = 30 + static_cast<int>(rng.uniform_index(51));
  const int z_span = min_persist + static_cast<int>(rng.uniform_index(
                                       std::max(1, std::min(6, g.depth - min_persist))));
  double d = 1.0 + rng.uniform() * (g.depth - 2.0 - z_span);
  double y = g.height * (0.25 + 0.5 * rng.uniform());
  double x = g.width * (0.25 + 0.5 * rng.uniform());
  double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double vz = static_cast<double>(z_span) / steps;

  size_t painted = 0;
  for (int s = 0; s < steps; ++s) {
    const int di = static_cast<int>(std::lround(d));
    const int yi = static_cast<int>(std::lround(y));
    const int xi = static_cast<int>(std::lround(x));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy * dy + dx * dx > 2) continue;  // radius-1 tube cross-section
        const int py = yi + dy, px = xi + dx;
        if (di < 0 || di >= g.depth || py < 0 || py >= g.height || px < 0 || px >= g.width)
          continue;
        uint8_t& l = lab[g.idx(di, py, px)];
        if (l == 1) {
          l = cls;
          ++painted;
        }
      }
    }
    theta += rng.normal(0.0, 0.18);
    y += std::sin(theta);
    x += std::cos(theta);
    d += vz;
  }
  return painted;
}

}  // namespace

void validate_phantom_spec(const PhantomSpec& spec) {
  if (spec.depth < 1 || spec.height < 4 || spec.width < 4)
    throw ConfigError("phantom: volume too small (" + std::to_string(spec.depth) + "x" +
                std::to_string(spec.height) + "x" + std::to_string(spec.width) + ")");
  if (spec.num_classes < 2 || spec.num_classes > 255)
    throw ConfigError("phantom: num_classes must be in [2, 255]");
  if (spec.cylinder_radius_frac <= 0.0 || spec.cylinder_radius_frac > 0.5)
    throw ConfigError("phantom: cylinder_radius_frac must be in (0, 0.5]");
  const int n_incl = spec.num_classes - 2;
  if (!spec.inclusion_fractions.empty() &&
      spec.inclusion_fractions.size() != static_cast<size_t>(n_incl))
    throw ConfigError("phantom: expected " + std::to_string(n_incl) +
                " inclusion fractions, got " + std::to_string(spec.inclusion_fractions.size()));
  double total = 0.0;
  for (double f : spec.inclusion_fractions) {
    if (f <= 0.0) throw ConfigError("phantom: inclusion fractions must be positive");
    total += f;
  }
  if (spec.inclusion_fractions.empty() && n_incl > 0) total = 0.12 * n_incl;
  if (total > 0.6)
    throw ConfigError("phantom: inclusion fractions sum to " + std::to_string(total) +
                "; the cylinder cannot hold more than 0.6");
  if (!spec.class_means.empty()) {
    if (spec.class_means.size() != static_cast<size_t>(spec.num_classes))
      throw ConfigError("phantom: expected " + std::to_string(spec.num_classes) +
                  " class means, got " + std::to_string(spec.class_means.size()));
    for (size_t i = 0; i < spec.class_means.size(); ++i) {
      if (spec.class_means[i] < 0.0 || spec.class_means[i] > 1.0)
        throw ConfigError("phantom: class means must lie in [0, 1]");
      if (i > 0 && spec.class_means[i] <= spec.class_means[i - 1])
        throw ConfigError("phantom: class means must be strictly ascending (class order is "
                    "canonical by intensity)");
    }
  }
  if (spec.fraction_tolerance <= 0.0 || spec.fraction_tolerance >= 1.0)
    throw ConfigError("phantom: fraction_tolerance must be in (0, 1)");
  if (spec.blob_share < 0.0 || spec.blob_share > 1.0)
    throw ConfigError("phantom: blob_share must be in [0, 1]");
  if (spec.curve_min_persist < 1 || spec.curve_min_persist > spec.depth)
    throw ConfigError("phantom: curve_min_persist must be in [1, depth]");
  if (spec.drift_strength < 0.0 || spec.drift_strength >= 1.0)
    throw ConfigError("phantom: drift_strength must be in [0, 1)");
  if (spec.noise_sigma < 0.0) throw ConfigError("phantom: noise_sigma must be non-negative");
  if (spec.streaks_per_slice < 0.0 || spec.streak_strength < 0.0)
    throw ConfigError("phantom: streak parameters must be non-negative");
  if (spec.fringe_gain < 0.0) throw ConfigError("phantom: fringe_gain must be non-negative");
}

PhantomResult generate_phantom(const PhantomSpec& spec, uint64_t seed) {
  validate_phantom_spec(spec);
  const Grid g{spec.depth, spec.height, spec.width};
  const size_t total = static_cast<size_t>(spec.depth) * spec.height * spec.width;
  const int K = spec.num_classes;

  std::vector<double> means = spec.class_means;
  if (means.empty()) {
    means.resize(K);
    for (int c = 0; c < K; ++c)
      means[c] = 0.1 + 0.8 * (K == 1 ? 0.0 : static_cast<double>(c) / (K - 1));
  }
  std::vector<double> fracs = spec.inclusion_fractions;
  if (fracs.empty() && K > 2) fracs.assign(K - 2, 0.12);

  // --- labels first ---
  LabelVolume labels;
  labels.depth = spec.depth;
  labels.height = spec.height;
  labels.width = spec.width;
  labels.num_classes = K;
  labels.provenance = LabelProvenance::ground_truth;
  labels.labels.assign(total, 0);

  const double cy = (spec.height - 1) / 2.0, cx = (spec.width - 1) / 2.0;
  const double radius = spec.cylinder_radius_frac * std::min(spec.height, spec.width);
  size_t cyl_count = 0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) > radius * radius) continue;
      for (int d = 0; d < spec.depth; ++d) labels.labels[g.idx(d, y, x)] = 1;
      ++cyl_count;
    }
  }
  cyl_count *= static_cast<size_t>(spec.depth);
  if (cyl_count == 0) throw Error("phantom: cylinder is empty; enlarge the volume or radius");

  Rng geo(derive_seed(seed, 0x67656f6d));
  std::vector<size_t> painted(K, 0);
  for (int c = 2; c < K; ++c) {
    const double target = fracs[c - 2] * static_cast<double>(cyl_count);
    size_t count = 0;
    int stall = 0;
    while (static_cast<double>(count) < target) {
      size_t got = 0;
      if (geo.uniform() < spec.blob_share) {
        const double rz = 2.0 + geo.uniform() * 3.0;
        const double ry = 3.0 + geo.uniform() * 5.0;
        const double rx = 3.0 + geo.uniform() * 5.0;
        const double bd = rz + geo.uniform() * std::max(1.0, spec.depth - 2.0 * rz);
        const double ang = geo.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double rad = radius * 0.85 * std::sqrt(geo.uniform());
        got = paint_blob(labels.labels, g, static_cast<uint8_t>(c), bd, cy + rad * std::sin(ang),
                         cx + rad * std::cos(ang), rz, ry, rx);
      } else {
        got = paint_curve(labels.labels, g, static_cast<uint8_t>(c), geo,
                          std::min(spec.curve_min_persist, spec.depth));
      }
      count += got;
      stall = got == 0 ? stall + 1 : 0;
      if (stall > 200)
        throw Error("phantom: cannot reach inclusion fraction for class " + std::to_string(c) +
                    "; matrix too crowded");
    }
    painted[c] = count;
  }

  // --- clean intensities from the label map ---
  std::vector<float> clean(total);
  for (size_t i = 0; i < total; ++i) clean[i] = static_cast<float>(means[labels.labels[i]]);

  Volume vol;
  vol.depth = spec.depth;
  vol.height = spec.height;
  vol.width = spec.width;
  vol.data.assign(clean.begin(), clean.end());

  // --- corruption, intensity only ---
  if (spec.drift != DriftKind::none && spec.drift_strength > 0.0) {
    Rng drng(derive_seed(seed, 0x64726966));
    const double phi = drng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double half_diag = 0.5 * std::hypot(spec.height - 1.0, spec.width - 1.0);
    for (int d = 0; d < spec.depth; ++d) {
      // the ramp slowly strengthens along z, like a source drifting in time
      const double s = spec.drift_strength *
                       (0.75 + 0.5 * (spec.depth == 1 ? 0.5 : double(d) / (spec.depth - 1)));
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          double u;
          if (spec.drift == DriftKind::linear) {
            u = ((y - cy) * sphi + (x - cx) * cphi) / half_diag;
          } else {
            const double r2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (half_diag * half_diag);
            u = 2.0 * r2 - 1.0;
          }
          vol.data[g.idx(d, y, x)] *= static_cast<float>(1.0 + s * u);
        }
      }
    }
  }

  if (spec.fringe_gain > 0.0) {
    // Unsharp residual of the clean image: nonzero only near label
    // boundaries, so it mimics phase-contrast fringes without moving them.
    for (int d = 0; d < spec.depth; ++d) {
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          double acc = 0.0;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int py = y + dy, px = x + dx;
              if (py < 0 || py >= spec.height || px < 0 || px >= spec.width) continue;
              acc += clean[g.idx(d, py, px)];
              ++cnt;
            }
          }
          const double resid = clean[g.idx(d, y, x)] - acc / cnt;
          vol.data[g.idx(d, y, x)] += static_cast<float>(spec.fringe_gain * resid);
        }
      }
    }
  }

  if (spec.streaks_per_slice > 0.0 && spec.streak_strength > 0.0) {
    Rng srng(derive_seed(seed, 0x73747265));
    const double half_diag = 0.5 * std::hypot(spec.height - 1.0, spec.width - 1.0);
    for (int d = 0; d < spec.depth; ++d) {
      int n = static_cast<int>(spec.streaks_per_slice);
      if (srng.uniform() < spec.streaks_per_slice - n) ++n;
      for (int k = 0; k < n; ++k) {
        const double theta = srng.uniform(0.0, 3.14159265358979323846);
        const double rho = srng.uniform(-0.9, 0.9) * half_diag;
        const double sign = srng.uniform() < 0.5 ? -1.0 : 1.0;
        const double amp = sign * spec.streak_strength;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int y = 0; y < spec.height; ++y) {
          for (int x = 0; x < spec.width; ++x) {
            const double dist = std::abs((x - cx) * ct + (y - cy) * st - rho);
            if (dist <= 1.0) vol.data[g.idx(d, y, x)] += static_cast<float>(amp * (1.0 - dist));
          }
        }
      }
    }
  }

  if (spec.noise_sigma > 0.0) {
    Rng nrng(derive_seed(seed, 0x6e6f6973));
    for (float& v : vol.data) v += static_cast<float>(nrng.normal(0.0, spec.noise_sigma));
  }

  for (float& v : vol.data) v = std::clamp(v, 0.0f, 1.0f);
  vol.update_range();

  PhantomResult res;
  res.volume = std::move(vol);
  res.labels = std::move(labels);
  res.class_fractions.assign(K, 0.0);
  for (uint8_t l : res.labels.labels) res.class_fractions[l] += 1.0;
  for (double& f : res.class_fractions) f /= static_cast<double>(total);
  for (int c = 2; c < K; ++c)
    res.inclusion_fractions_achieved.push_back(static_cast<double>(painted[c]) /
                                               static_cast<double>(cyl_count));
  return res;
}

}  // namespace sctseg
