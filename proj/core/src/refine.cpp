#include "cpr/refine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpr/log.hpp"

namespace cpr {

void RefineConfig::validate() const {
  if (!(beta >= 1.0) || !std::isfinite(beta)) throw ConfigError("refine.beta must be a finite value >= 1");
  if (rounds < 0) throw ConfigError("refine.rounds must be >= 0");
  if (!(epsilon_max > 0.0)) throw ConfigError("refine.epsilon_max must be positive");
}

namespace {

void check_field(const ProbMap& prob, const SimilarityField& field, std::size_t c) {
  require_same_grid(prob, field, "revise: probabilities vs similarities");
  if (c >= prob.channels() || c >= field.channels()) {
    throw ShapeError("revise: class " + std::to_string(c) + " out of range");
  }
}

// Per-pixel weight rows in CSR layout.
struct WeightTable {
  std::vector<std::size_t> row_start;
  std::vector<NeighborWeight> entries;
};

void append_row(const SimilarityField& field, const RefineConfig& cfg, std::size_t v, std::size_t c,
                std::vector<NeighborWeight>& out) {
  const std::size_t first = out.size();
  double total = 0.0;
  if (cfg.include_self) {
    out.push_back({v, 1.0});
    total += 1.0;
  }
  for (std::size_t o = 0; o < field.spec().size(); ++o) {
    const std::ptrdiff_t j = field.neighbor(v, o);
    if (j < 0) continue;
    const double w = std::pow(static_cast<double>(field(v, o, c)), cfg.beta);
    out.push_back({static_cast<std::size_t>(j), w});
    total += w;
  }
  if (out.size() == first || !(total > 0.0)) {
    throw DegenerateError("revise: pixel " + std::to_string(v) + " has an empty neighbourhood");
  }
  for (std::size_t k = first; k < out.size(); ++k) out[k].weight /= total;
}

WeightTable build_table(const SimilarityField& field, const RefineConfig& cfg, std::size_t c) {
  const std::size_t n = field.height() * field.width();
  WeightTable table;
  table.row_start.reserve(n + 1);
  table.entries.reserve(n * (field.spec().size() + 1));
  for (std::size_t v = 0; v < n; ++v) {
    table.row_start.push_back(table.entries.size());
    append_row(field, cfg, v, c, table.entries);
  }
  table.row_start.push_back(table.entries.size());
  return table;
}

}  // namespace

std::vector<NeighborWeight> revision_weights(const SimilarityField& field, const RefineConfig& cfg,
                                             std::size_t pixel, std::size_t c) {
  cfg.validate();
  if (c >= field.channels()) throw ShapeError("revise: class " + std::to_string(c) + " out of range");
  std::vector<NeighborWeight> row;
  append_row(field, cfg, pixel, c, row);
  return row;
}

ProbMap revise(const ProbMap& prob, const SimilarityField& field, const RefineConfig& cfg, std::size_t c) {
  cfg.validate();
  check_field(prob, field, c);
  ProbMap out = prob;
  if (cfg.rounds == 0) return out;

  const WeightTable table = build_table(field, cfg, c);
  const std::size_t n = prob.pixels();
  std::vector<float> current(n), next(n);
  for (std::size_t v = 0; v < n; ++v) current[v] = prob.value(v, c);
  for (int round = 0; round < cfg.rounds; ++round) {
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (std::size_t k = table.row_start[v]; k < table.row_start[v + 1]; ++k) {
        acc += table.entries[k].weight * current[table.entries[k].pixel];
      }
      next[v] = static_cast<float>(acc);
    }
    current.swap(next);
  }
  for (std::size_t v = 0; v < n; ++v) out.value(v, c) = current[v];
  return out;
}

Calibration calibrate(const ProbMap& prob, const RefineConfig& cfg, std::size_t c) {
  cfg.validate();
  if (c >= prob.channels()) throw ShapeError("calibrate: class " + std::to_string(c) + " out of range");
  Calibration out{prob, 0.0f, false};
  for (std::size_t v = 0; v < prob.pixels(); ++v) out.channel_max = std::max(out.channel_max, prob.value(v, c));
  if (out.channel_max < cfg.epsilon_max) {
    out.degenerate = true;
    log().warn("calibrate: class {} has maximum {} below {}; channel left unchanged", c, out.channel_max,
               cfg.epsilon_max);
    return out;
  }
  for (std::size_t v = 0; v < prob.pixels(); ++v) out.prob.value(v, c) = prob.value(v, c) / out.channel_max;
  return out;
}

RefineResult refine(const ProbMap& prob, const SimilarityField& field, const RefineConfig& cfg) {
  RefineResult out{prob, prob, std::vector<bool>(prob.channels(), false)};
  for (std::size_t c = 0; c < prob.channels(); ++c) out.revised = revise(out.revised, field, cfg, c);
  out.calibrated = out.revised;
  if (cfg.calibrate) {
    for (std::size_t c = 0; c < prob.channels(); ++c) {
      Calibration cal = calibrate(out.calibrated, cfg, c);
      out.calibrated = std::move(cal.prob);
      out.degenerate[c] = cal.degenerate;
    }
  }
  return out;
}

}  // namespace cpr
