#include "cpr/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cpr/log.hpp"

namespace cpr {

void LabelConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("labeling.gamma must lie in (0, 1)");
  if (!(eta > 0.0)) throw ConfigError("labeling.eta must be positive");
  if (passes < 1) throw ConfigError("labeling.passes must be at least 1");
}

const char* to_string(Region r) noexcept {
  return r == Region::kForeground ? "foreground" : "background";
}

PassAggregate aggregate_passes(const ProbStack& stack, const LabelConfig& cfg) {
  cfg.validate();
  const std::size_t k = stack.passes();
  if (k == 0) throw ShapeError("probability stack: pass count K is 0");
  const std::size_t h = stack.height(), w = stack.width(), c = stack.channels();

  PassAggregate out{ProbMap(h, w, c), UncertaintyMap(h, w, c), LabelMask(h, w, c)};
  std::vector<double> values(k);
  for (std::size_t v = 0; v < h * w; ++v) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < k; ++i) values[i] = stack(i, v, ch);
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double x : values) sum += x;
      const double mean = sum / static_cast<double>(k);
      double sq = 0.0;
      for (double x : values) sq += (x - mean) * (x - mean);
      const float p = static_cast<float>(mean);
      out.prob.value(v, ch) = p;
      out.uncertainty.value(v, ch) = static_cast<float>(std::sqrt(sq / static_cast<double>(k)));
      out.labels.value(v, ch) = p >= cfg.gamma ? 1.0f : 0.0f;
    }
  }
  return out;
}

namespace {

struct Accumulator {
  std::vector<double> sum;
  double weight = 0.0;
};

void check_inputs(const FeatureMap& feat, const ProbMap& prob, const UncertaintyMap& u,
                  const LabelMask& labels) {
  require_same_grid(feat, prob, "prototypes: features vs probabilities");
  require_same_grid(feat, u, "prototypes: features vs uncertainty");
  require_same_grid(feat, labels, "prototypes: features vs labels");
  if (prob.channels() != u.channels() || prob.channels() != labels.channels()) {
    throw ShapeError("prototypes: class channel counts differ between probabilities, "
                     "uncertainty and labels");
  }
}

// Returns fg/bg prototypes per class; nullopt where the selection is empty.
std::vector<std::optional<std::vector<float>>> weighted_means(const FeatureMap& feat,
                                                              const ProbMap& prob,
                                                              const UncertaintyMap& u,
                                                              const LabelMask& labels,
                                                              const LabelConfig& cfg) {
  cfg.validate();
  check_inputs(feat, prob, u, labels);
  const std::size_t classes = prob.channels(), depth = feat.depth();

  // Slot 2c is class c foreground, 2c + 1 its background.
  std::vector<Accumulator> acc(2 * classes, Accumulator{std::vector<double>(depth, 0.0)});
  for (std::size_t v = 0; v < feat.pixels(); ++v) {
    auto f = feat.pixel(v);
    for (std::size_t c = 0; c < classes; ++c) {
      if (!(u.value(v, c) < cfg.eta)) continue;
      const bool fg = labels.value(v, c) == 1.0f;
      const double weight = fg ? prob.value(v, c) : 1.0 - prob.value(v, c);
      if (weight == 0.0) continue;
      Accumulator& a = acc[2 * c + (fg ? 0 : 1)];
      for (std::size_t d = 0; d < depth; ++d) a.sum[d] += weight * f[d];
      a.weight += weight;
    }
  }

  std::vector<std::optional<std::vector<float>>> out(2 * classes);
  for (std::size_t slot = 0; slot < acc.size(); ++slot) {
    if (acc[slot].weight <= 0.0) continue;
    std::vector<float> z(depth);
    for (std::size_t d = 0; d < depth; ++d) z[d] = static_cast<float>(acc[slot].sum[d] / acc[slot].weight);
    out[slot] = std::move(z);
  }
  return out;
}

std::string slot_name(std::size_t slot) {
  return "class " + std::to_string(slot / 2) + " " +
         to_string(slot % 2 == 0 ? Region::kForeground : Region::kBackground);
}

PrototypeSet assemble(std::vector<std::optional<std::vector<float>>> slots, std::size_t depth,
                      const PrototypeSet* fallback) {
  const std::size_t classes = slots.size() / 2;
  PrototypeSet out{Tensor(Shape{classes, depth}), Tensor(Shape{classes, depth})};
  for (std::size_t slot = 0; slot < slots.size(); ++slot) {
    const std::size_t c = slot / 2;
    const Region region = slot % 2 == 0 ? Region::kForeground : Region::kBackground;
    Tensor& dst = region == Region::kForeground ? out.fg : out.bg;
    std::span<const float> src;
    if (slots[slot]) {
      src = *slots[slot];
    } else if (fallback) {
      log().warn("prototype for {} has no reliable pixels; reusing the fallback prototype",
                 slot_name(slot));
      src = fallback->get(region, c);
    } else {
      throw DegenerateError("degenerate prototype: no reliable pixels for " + slot_name(slot));
    }
    std::copy(src.begin(), src.end(), dst.data().begin() + static_cast<std::ptrdiff_t>(c * depth));
  }
  return out;
}

}  // namespace

PrototypeSet compute_prototypes(const FeatureMap& feat, const ProbMap& prob, const UncertaintyMap& u,
                                const LabelMask& labels, const LabelConfig& cfg) {
  return assemble(weighted_means(feat, prob, u, labels, cfg), feat.depth(), nullptr);
}

PrototypeSet compute_prototypes_or(const FeatureMap& feat, const ProbMap& prob,
                                   const UncertaintyMap& u, const LabelMask& labels,
                                   const LabelConfig& cfg, const PrototypeSet& fallback) {
  if (fallback.classes() != prob.channels() || fallback.depth() != feat.depth()) {
    throw ShapeError("prototypes: fallback set has shape " + to_string(fallback.fg.shape()));
  }
  return assemble(weighted_means(feat, prob, u, labels, cfg), feat.depth(), &fallback);
}

DistanceMaps prototype_distances(const FeatureMap& feat, const PrototypeSet& protos) {
  if (protos.depth() != feat.depth()) {
    throw ShapeError("prototype depth " + std::to_string(protos.depth()) +
                     " does not match feature depth " + std::to_string(feat.depth()));
  }
  const std::size_t classes = protos.classes();
  DistanceMaps out{DistanceMap(feat.height(), feat.width(), classes),
                   DistanceMap(feat.height(), feat.width(), classes)};
  for (std::size_t v = 0; v < feat.pixels(); ++v) {
    auto f = feat.pixel(v);
    for (std::size_t c = 0; c < classes; ++c) {
      auto zf = protos.get(Region::kForeground, c);
      auto zb = protos.get(Region::kBackground, c);
      double sf = 0.0, sb = 0.0;
      for (std::size_t d = 0; d < f.size(); ++d) {
        const double df = static_cast<double>(f[d]) - zf[d];
        const double db = static_cast<double>(f[d]) - zb[d];
        sf += df * df;
        sb += db * db;
      }
      out.fg.value(v, c) = static_cast<float>(std::sqrt(sf));
      out.bg.value(v, c) = static_cast<float>(std::sqrt(sb));
    }
  }
  return out;
}

ReliabilityResult reliability_mask(const FeatureMap& feat, const PrototypeSet& protos,
                                   const UncertaintyMap& u, const LabelMask& labels,
                                   const LabelConfig& cfg) {
  cfg.validate();
  require_same_grid(feat, u, "reliability: features vs uncertainty");
  require_same_grid(feat, labels, "reliability: features vs labels");
  if (labels.channels() != protos.classes() || u.channels() != protos.classes()) {
    throw ShapeError("reliability: class channel count does not match the prototype set");
  }
  DistanceMaps d = prototype_distances(feat, protos);
  ReliabilityMask mask(feat.height(), feat.width(), protos.classes());
  for (std::size_t v = 0; v < feat.pixels(); ++v) {
    for (std::size_t c = 0; c < protos.classes(); ++c) {
      const bool certain = u.value(v, c) < cfg.eta;
      const bool agrees = agrees_with_prototypes(labels.value(v, c), d.fg.value(v, c), d.bg.value(v, c));
      mask.value(v, c) = certain && agrees ? 1.0f : 0.0f;
    }
  }
  return {std::move(mask), std::move(d)};
}

}  // namespace cpr
