#include "cpr/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cpr/log.hpp"
#include "cpr/parallel.hpp"

namespace cpr {

void DenoiseConfig::validate() const {
  if (!(gamma_low > 0.0 && gamma_low < gamma_high && gamma_high < 1.0)) {
    throw ConfigError("denoise: require 0 < gamma_low < gamma_high < 1");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("denoise.gamma must lie in (0, 1)");
}

LabelMask refined_labels(const ProbMap& refined, const DenoiseConfig& cfg) {
  cfg.validate();
  LabelMask out(refined.height(), refined.width(), refined.channels());
  for (std::size_t v = 0; v < refined.pixels(); ++v) {
    for (std::size_t c = 0; c < refined.channels(); ++c) {
      out.value(v, c) = refined.value(v, c) >= cfg.gamma ? 1.0f : 0.0f;
    }
  }
  return out;
}

SelectionResult selection_mask(const ProbMap& refined, const LabelMask& labels, const DistanceMaps& distances,
                               const DenoiseConfig& cfg) {
  cfg.validate();
  require_same_grid(refined, labels, "selection: probabilities vs labels");
  require_same_grid(refined, distances.fg, "selection: probabilities vs distances");
  require_same_grid(refined, distances.bg, "selection: probabilities vs distances");
  const std::size_t classes = refined.channels();
  if (labels.channels() != classes || distances.fg.channels() != classes || distances.bg.channels() != classes) {
    throw ShapeError("selection: class channel counts differ");
  }
  const std::size_t h = refined.height(), w = refined.width();
  SelectionResult out{SelectionMask(h, w, classes), SelectionMask(h, w, classes), SelectionMask(h, w, classes)};
  for (std::size_t v = 0; v < refined.pixels(); ++v) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = refined.value(v, c);
      const bool confident = p < cfg.gamma_low || p > cfg.gamma_high;
      const bool agrees = agrees_with_prototypes(labels.value(v, c), distances.fg.value(v, c), distances.bg.value(v, c));
      out.pixel_level.value(v, c) = confident ? 1.0f : 0.0f;
      out.class_level.value(v, c) = agrees ? 1.0f : 0.0f;
      out.mask.value(v, c) = confident && agrees ? 1.0f : 0.0f;
    }
  }
  return out;
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kBceClamp, 1.0 - kBceClamp); }

double pixel_bce(double pred, float label) {
  const double p = clamp_prob(pred);
  return label == 1.0f ? -std::log(p) : -std::log(1.0 - p);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

BceLoss masked_bce(const ProbMap& pred, const LabelMask& labels, const SelectionMask& selected) {
  require_same_grid(pred, labels, "masked bce: predictions vs labels");
  require_same_grid(pred, selected, "masked bce: predictions vs selection");
  if (labels.channels() != pred.channels() || selected.channels() != pred.channels()) {
    throw ShapeError("masked bce: class channel counts differ");
  }
  BceLoss out;
  for (std::size_t v = 0; v < pred.pixels(); ++v) {
    for (std::size_t c = 0; c < pred.channels(); ++c) {
      if (selected.value(v, c) != 1.0f) continue;
      out.sum += pixel_bce(pred.value(v, c), labels.value(v, c));
      ++out.selected;
    }
  }
  out.mean = out.selected ? out.sum / static_cast<double>(out.selected) : 0.0;
  return out;
}

ToySegmentor::ToySegmentor(std::size_t classes, std::size_t depth)
    : classes_(classes), depth_(depth), values_(classes * (depth + 1), 0.0) {}

double ToySegmentor::logit(std::span<const float> f, std::size_t c) const noexcept {
  double z = bias(c);
  for (std::size_t d = 0; d < depth_; ++d) z += weight(c, d) * f[d];
  return z;
}

ProbMap ToySegmentor::predict(const FeatureMap& feat) const {
  if (feat.depth() != depth_) {
    throw ShapeError("toy segmentor: feature depth " + std::to_string(feat.depth()) + " != " + std::to_string(depth_));
  }
  ProbMap out(feat.height(), feat.width(), classes_);
  for (std::size_t v = 0; v < feat.pixels(); ++v) {
    auto f = feat.pixel(v);
    for (std::size_t c = 0; c < classes_; ++c) out.value(v, c) = static_cast<float>(sigmoid(logit(f, c)));
  }
  return out;
}

namespace {

void check_sample(const FeatureMap& feat, const ToySegmentor& model, const LabelMask& labels,
                  const SelectionMask& selected) {
  require_same_grid(feat, labels, "toy segmentor: features vs labels");
  require_same_grid(feat, selected, "toy segmentor: features vs selection");
  if (feat.depth() != model.depth() || labels.channels() != model.classes() ||
      selected.channels() != model.classes()) {
    throw ShapeError("toy segmentor: feature depth or class count does not match the model");
  }
}

}  // namespace

BceGradient bce_gradient(const FeatureMap& feat, const ToySegmentor& model, const LabelMask& labels,
                         const SelectionMask& selected) {
  check_sample(feat, model, labels, selected);
  const std::size_t depth = model.depth();
  BceGradient out{{}, std::vector<double>(model.values().size(), 0.0)};
  for (std::size_t v = 0; v < feat.pixels(); ++v) {
    auto f = feat.pixel(v);
    for (std::size_t c = 0; c < model.classes(); ++c) {
      if (selected.value(v, c) != 1.0f) continue;
      const double pred = sigmoid(model.logit(f, c));
      const float y = labels.value(v, c);
      out.loss.sum += pixel_bce(pred, y);
      ++out.loss.selected;
      if (pred < kBceClamp || pred > 1.0 - kBceClamp) continue;
      const double dz = pred - static_cast<double>(y);
      double* g = out.gradient.data() + c * (depth + 1);
      for (std::size_t d = 0; d < depth; ++d) g[d] += dz * f[d];
      g[depth] += dz;
    }
  }
  out.loss.mean = out.loss.selected ? out.loss.sum / static_cast<double>(out.loss.selected) : 0.0;
  return out;
}

void AdaptConfig::validate() const {
  if (epochs < 1) throw ConfigError("adapt.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("adapt.batch must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("adapt.threshold must lie in (0, 1)");
  adam.validate();
}

ToySegmentor centroid_init(std::span<const AdaptSample> samples) {
  if (samples.empty()) throw DegenerateError("adapt: training set is empty");
  const std::size_t classes = samples.front().labels.channels();
  const std::size_t depth = samples.front().features.depth();
  ToySegmentor model(classes, depth);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> sum_fg(depth, 0.0), sum_bg(depth, 0.0);
    std::size_t n_fg = 0, n_bg = 0;
    for (const AdaptSample& s : samples) {
      for (std::size_t v = 0; v < s.features.pixels(); ++v) {
        if (s.selected.value(v, c) != 1.0f) continue;
        auto f = s.features.pixel(v);
        const bool fg = s.labels.value(v, c) == 1.0f;
        auto& sum = fg ? sum_fg : sum_bg;
        for (std::size_t d = 0; d < depth; ++d) sum[d] += f[d];
        ++(fg ? n_fg : n_bg);
      }
    }
    if (n_fg == 0 || n_bg == 0) {
      log().warn("adapt: class {} lacks selected {} pixels; starting from zero", c,
                 n_fg == 0 ? "foreground" : "background");
      continue;
    }
    double norm_fg = 0.0, norm_bg = 0.0;
    for (std::size_t d = 0; d < depth; ++d) {
      const double mf = sum_fg[d] / static_cast<double>(n_fg);
      const double mb = sum_bg[d] / static_cast<double>(n_bg);
      model.weight(c, d) = mf - mb;
      norm_fg += mf * mf;
      norm_bg += mb * mb;
    }
    model.bias(c) = 0.5 * (norm_bg - norm_fg);
  }
  return model;
}

AdaptResult adapt_toy(std::span<const AdaptSample> samples, const AdaptConfig& cfg, Rng& rng) {
  cfg.validate();
  if (samples.empty()) throw DegenerateError("adapt: training set is empty");
  const std::size_t classes = samples.front().labels.channels();
  const std::size_t depth = samples.front().features.depth();
  std::size_t selected = 0;
  for (const AdaptSample& s : samples) {
    if (s.labels.channels() != classes || s.features.depth() != depth) {
      throw ShapeError("adapt: images disagree on feature depth or class count");
    }
    for (float m : s.selected.tensor().data()) selected += m == 1.0f;
  }
  if (selected == 0) throw DegenerateError("adapt: no pixel is selected in the training corpus");

  AdaptResult result{cfg.init == ToyInit::kCentroid ? centroid_init(samples) : ToySegmentor(classes, depth), {}};
  AdamState state(cfg.adam, result.model.values().size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<BceGradient> work;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      work.assign(count, BceGradient{});
      parallel_for(count, cfg.threads, [&](std::size_t k) {
        const AdaptSample& s = samples[order[start + k]];
        work[k] = bce_gradient(s.features, result.model, s.labels, s.selected);
      });
      std::vector<double> grad(result.model.values().size(), 0.0);
      for (const BceGradient& g : work) {
        loss_sum += g.loss.sum;
        loss_count += g.loss.selected;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g.gradient[i];
      }
      for (double& x : grad) x /= static_cast<double>(count);
      adam_step(result.model.values(), grad, state);
    }
    result.epoch_loss.push_back(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0);
    log().info("adapt epoch {}/{}: loss {:.6f}", epoch + 1, cfg.epochs, result.epoch_loss.back());
  }
  return result;
}

}  // namespace cpr
