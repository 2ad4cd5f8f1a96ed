#include "cpr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpr/rng.hpp"
#include "edt.hpp"

namespace cpr {

void ScenarioConfig::validate() const {
  if (height < 16 || width < 16) throw ConfigError("synth: height and width must be >= 16");
  if (depth < 3) throw ConfigError("synth.depth must be >= 3");
  if (!(separation > 0.0)) throw ConfigError("synth.separation must be positive");
  if (!(feature_noise >= 0.0)) throw ConfigError("synth.feature_noise must be >= 0");
  if (!(sharpness > 0.0)) throw ConfigError("synth.sharpness must be positive");
  if (!(saturation >= 0.5)) throw ConfigError("synth.saturation must be >= 0.5");
  if (protuberances < 0) throw ConfigError("synth.protuberances must be >= 0");
  if (!(protuberance_min_radius > 0.0 && protuberance_min_radius <= protuberance_max_radius)) {
    throw ConfigError("synth: require 0 < protuberance_min_radius <= protuberance_max_radius");
  }
  if (passes < 1) throw ConfigError("synth.passes must be >= 1");
  if (!(pass_jitter >= 0.0)) throw ConfigError("synth.pass_jitter must be >= 0");
}

ScenarioConfig ScenarioConfig::noiseless(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.feature_noise = 0.0;
  cfg.protuberances = 0;
  cfg.pass_jitter = 0.0;
  cfg.seed = seed;
  return cfg;
}

ScenarioConfig ScenarioConfig::under_confident(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.separation = 4.0;
  cfg.feature_noise = 1.0;
  cfg.sharpness = 1.0;
  cfg.saturation = 4.0;
  cfg.logit_shift = {-1.0, 0.5};
  cfg.protuberances = 3;
  cfg.protuberance_min_radius = 2.0;
  cfg.protuberance_max_radius = 4.0;
  cfg.protuberance_strength = 1.7;
  cfg.passes = 10;
  cfg.pass_jitter = 0.4;
  cfg.seed = seed;
  return cfg;
}

namespace {

struct Ellipse {
  double cy, cx, ay, ax, angle;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dy + s * dx;
    const double v = -s * dy + c * dx;
    return (u * u) / (ay * ay) + (v * v) / (ax * ax) <= 1.0;
  }
};

struct Geometry {
  std::vector<char> disc;
  std::vector<char> cup;
};

std::vector<char> rasterize(const Ellipse& e, std::size_t h, std::size_t w) {
  std::vector<char> mask(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) mask[y * w + x] = e.contains(static_cast<double>(y), static_cast<double>(x));
  }
  return mask;
}

bool nested_strictly(const Geometry& g, std::size_t h, std::size_t w) {
  bool any_cup = false;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t v = y * w + x;
      if (g.disc[v] && (y == 0 || x == 0 || y + 1 == h || x + 1 == w)) return false;
      if (!g.cup[v]) continue;
      any_cup = true;
      if (y == 0 || x == 0 || y + 1 == h || x + 1 == w) return false;
      if (!g.disc[v] || !g.disc[v - w] || !g.disc[v + w] || !g.disc[v - 1] || !g.disc[v + 1]) return false;
    }
  }
  return any_cup;
}

Geometry sample_geometry(const ScenarioConfig& cfg, Rng& rng) {
  const double h = static_cast<double>(cfg.height), w = static_cast<double>(cfg.width);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Ellipse disc{h / 2.0 + rng.uniform(-0.05, 0.05) * h, w / 2.0 + rng.uniform(-0.05, 0.05) * w,
                 rng.uniform(0.26, 0.34) * h, rng.uniform(0.26, 0.34) * w, rng.uniform(-0.4, 0.4)};
    const double scale = rng.uniform(0.42, 0.55);
    Ellipse cup{disc.cy + rng.uniform(-0.03, 0.03) * h, disc.cx + rng.uniform(-0.03, 0.03) * w,
                disc.ay * scale, disc.ax * scale * rng.uniform(0.9, 1.1), disc.angle + rng.uniform(-0.3, 0.3)};
    Geometry g{rasterize(disc, cfg.height, cfg.width), rasterize(cup, cfg.height, cfg.width)};
    if (nested_strictly(g, cfg.height, cfg.width)) return g;
  }
  throw DegenerateError("synth: could not place the cup strictly inside the disc after 100 attempts");
}

// >= 0.5 inside, <= -0.5 outside: distance between pixel centres to the
// nearest pixel of the other side, minus half a pixel.
std::vector<double> signed_distance(const std::vector<char>& mask, std::size_t h, std::size_t w) {
  std::vector<char> inside(mask.begin(), mask.end()), outside(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) outside[i] = !mask[i];
  const auto to_outside = detail::squared_edt(outside, h, w);
  const auto to_inside = detail::squared_edt(inside, h, w);
  std::vector<double> sd(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    sd[i] = mask[i] ? std::sqrt(to_outside[i]) - 0.5 : -(std::sqrt(to_inside[i]) - 0.5);
  }
  return sd;
}

std::array<std::vector<float>, 3> region_means(const ScenarioConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.depth;
  std::array<std::vector<double>, 3> basis;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> v(d);
    while (true) {
      for (double& x : v) x = rng.normal();
      for (std::size_t j = 0; j < k; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += v[i] * basis[j][i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= dot * basis[j][i];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (double& x : v) x /= norm;
        break;
      }
    }
    basis[k] = v;
  }
  // Orthonormal vectors scaled by s / sqrt(2) are pairwise s apart.
  const double scale = cfg.separation / std::sqrt(2.0);
  std::array<std::vector<float>, 3> means;
  for (std::size_t k = 0; k < 3; ++k) {
    means[k].resize(d);
    for (std::size_t i = 0; i < d; ++i) means[k][i] = static_cast<float>(scale * basis[k][i]);
  }
  return means;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Scenario generate(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width, n = h * w, classes = 2;
  Rng root(cfg.seed);
  Rng geometry_rng = root.substream("geometry");
  Rng feature_rng = root.substream("features");
  Rng blob_rng = root.substream("protuberances");
  Rng pass_rng = root.substream("passes");

  const Geometry geometry = sample_geometry(cfg, geometry_rng);
  const std::array<const std::vector<char>*, 2> masks{&geometry.cup, &geometry.disc};

  Scenario out;
  out.truth = LabelMask(h, w, classes);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < classes; ++c) out.truth.value(v, c) = (*masks[c])[v] ? 1.0f : 0.0f;
  }

  if (cfg.means_seed) {
    Rng means_rng(*cfg.means_seed);
    out.region_means = region_means(cfg, means_rng);
  } else {
    out.region_means = region_means(cfg, feature_rng);
  }
  out.features = FeatureMap(h, w, cfg.depth);
  const double per_dim = cfg.feature_noise / std::sqrt(static_cast<double>(cfg.depth));
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t region = geometry.cup[v] ? 2 : (geometry.disc[v] ? 1 : 0);
    auto f = out.features.pixel(v);
    for (std::size_t d = 0; d < cfg.depth; ++d) {
      f[d] = static_cast<float>(out.region_means[region][d] + per_dim * feature_rng.normal());
    }
  }

  std::vector<double> logits(n * classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto sd = signed_distance(*masks[c], h, w);
    for (std::size_t v = 0; v < n; ++v) {
      const double clipped = std::clamp(sd[v], -cfg.saturation, cfg.saturation);
      logits[v * classes + c] = cfg.sharpness * clipped + cfg.logit_shift[c];
    }
  }

  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> boundary;
    for (std::size_t y = 1; y + 1 < h; ++y) {
      for (std::size_t x = 1; x + 1 < w; ++x) {
        const std::size_t v = y * w + x;
        const auto& m = *masks[c];
        if (m[v] && (!m[v - 1] || !m[v + 1] || !m[v - w] || !m[v + w])) boundary.push_back(v);
      }
    }
    for (int b = 0; b < cfg.protuberances && !boundary.empty(); ++b) {
      const std::size_t centre = boundary[blob_rng.below(boundary.size())];
      Protuberance p{c, centre / w, centre % w,
                     blob_rng.uniform(cfg.protuberance_min_radius, cfg.protuberance_max_radius),
                     blob_rng.uniform() < 0.5};
      const auto reach = static_cast<std::ptrdiff_t>(std::ceil(p.radius));
      for (std::ptrdiff_t dy = -reach; dy <= reach; ++dy) {
        for (std::ptrdiff_t dx = -reach; dx <= reach; ++dx) {
          const auto y = static_cast<std::ptrdiff_t>(p.y) + dy, x = static_cast<std::ptrdiff_t>(p.x) + dx;
          if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) continue;
          if (static_cast<double>(dy * dy + dx * dx) > p.radius * p.radius) continue;
          const std::size_t v = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          const bool inside = (*masks[c])[v];
          if (p.bulge && !inside) logits[v * classes + c] = cfg.protuberance_strength;
          if (!p.bulge && inside) logits[v * classes + c] = -cfg.protuberance_strength;
        }
      }
      out.protuberances.push_back(p);
    }
  }

  const auto k = static_cast<std::size_t>(cfg.passes);
  Tensor stack(Shape{k, h, w, classes});
  for (std::size_t pass = 0; pass < k; ++pass) {
    for (std::size_t i = 0; i < n * classes; ++i) {
      double z = logits[i];
      if (cfg.pass_jitter > 0.0) z += cfg.pass_jitter * pass_rng.normal();
      stack[pass * n * classes + i] = static_cast<float>(std::clamp(sigmoid(z), 0.005, 0.995));
    }
  }
  out.stack = ProbStack(std::move(stack));
  return out;
}

}  // namespace cpr
