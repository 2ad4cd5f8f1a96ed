#include "cpr/simhead.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "cpr/log.hpp"
#include "cpr/npy.hpp"
#include "cpr/parallel.hpp"

namespace cpr {

NeighborhoodSpec::NeighborhoodSpec(double radius) : radius_(radius) {
  if (!(radius >= 1.0) || !std::isfinite(radius)) {
    throw ConfigError("neighborhood.radius must be a finite value >= 1");
  }
  const int reach = static_cast<int>(std::floor(radius));
  const double limit = radius * radius;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      if ((dy != 0 || dx != 0) && dy * dy + dx * dx <= limit) offsets_.push_back({dy, dx});
    }
  }
}

SimilarityField::SimilarityField(NeighborhoodSpec spec, Tensor values)
    : spec_(std::move(spec)), values_(std::move(values)) {
  require_rank(values_, 4, "similarity field");
  require_finite(values_, "similarity field");
  if (values_.shape()[2] != spec_.size()) {
    throw ShapeError("similarity field: offset axis has " + std::to_string(values_.shape()[2]) +
                     " entries, neighborhood of radius " + std::to_string(spec_.radius()) + " has " +
                     std::to_string(spec_.size()));
  }
  for (float v : values_.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ShapeError("similarity field: value outside [0, 1]");
  }
}

SimilarityField similarity_field(std::span<const FeatureMap> per_class, const NeighborhoodSpec& spec) {
  if (per_class.empty()) throw ShapeError("similarity field: no class feature maps given");
  const FeatureMap& first = per_class.front();
  for (const FeatureMap& f : per_class) {
    require_same_grid(first, f, "similarity field");
    if (f.depth() != first.depth()) throw ShapeError("similarity field: class feature depths differ");
  }
  const std::size_t h = first.height(), w = first.width(), n = h * w;
  const std::size_t classes = per_class.size(), offsets = spec.size();
  Tensor values(Shape{h, w, offsets, classes});
  constexpr float kTiny = std::numeric_limits<float>::min();

  for (std::size_t c = 0; c < classes; ++c) {
    const FeatureMap& f = per_class[c];
    for (std::size_t v = 0; v < n; ++v) {
      auto fi = f.pixel(v);
      for (std::size_t o = 0; o < offsets; ++o) {
        if (!spec.is_forward(o)) continue;
        const std::ptrdiff_t j = spec.neighbor(v, o, h, w);
        if (j < 0) continue;
        auto fj = f.pixel(static_cast<std::size_t>(j));
        double l1 = 0.0;
        for (std::size_t d = 0; d < fi.size(); ++d) l1 += std::abs(static_cast<double>(fi[d]) - fj[d]);
        const float s = std::max(static_cast<float>(std::exp(-l1)), kTiny);
        values[(v * offsets + o) * classes + c] = s;
        values[(static_cast<std::size_t>(j) * offsets + spec.opposite(o)) * classes + c] = s;
      }
    }
  }
  return SimilarityField(spec, std::move(values));
}

ClassHead::ClassHead(std::size_t d_in, std::size_t d_sim, bool bias)
    : d_in_(d_in), d_sim_(d_sim), bias_(bias), values_(d_in * d_sim + d_sim, 0.0) {
  if (d_in == 0 || d_sim == 0) throw ConfigError("similarity head: d_in and d_sim must be >= 1");
}

SimHeadParams SimHeadParams::random(std::size_t classes, std::size_t d_in, std::size_t d_sim, bool bias,
                                    Rng& rng) {
  SimHeadParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (std::size_t c = 0; c < classes; ++c) {
    ClassHead head(d_in, d_sim, bias);
    for (std::size_t i = 0; i < d_in; ++i) {
      for (std::size_t j = 0; j < d_sim; ++j) head.weight(i, j) = rng.uniform(-bound, bound);
    }
    p.heads.push_back(std::move(head));
  }
  p.round_to_f32();
  return p;
}

void SimHeadParams::round_to_f32() {
  for (ClassHead& h : heads) {
    for (double& x : h.values()) x = static_cast<double>(static_cast<float>(x));
  }
}

namespace {

const ClassHead& branch(const SimHeadParams& params, std::size_t c, std::size_t depth) {
  if (c >= params.heads.size()) {
    throw ShapeError("similarity head: no branch for class " + std::to_string(c));
  }
  const ClassHead& head = params.heads[c];
  if (head.d_in() != depth) {
    throw ShapeError("similarity head: feature depth " + std::to_string(depth) +
                     " does not match branch input width " + std::to_string(head.d_in()));
  }
  return head;
}

// f_sim for every pixel in f64, [pixels, d_sim].
std::vector<double> project_f64(const FeatureMap& feat, const ClassHead& head) {
  const std::size_t n = feat.pixels(), d_in = head.d_in(), d_sim = head.d_sim();
  std::vector<double> out(n * d_sim);
  for (std::size_t v = 0; v < n; ++v) {
    auto f = feat.pixel(v);
    double* dst = out.data() + v * d_sim;
    for (std::size_t j = 0; j < d_sim; ++j) dst[j] = head.bias(j);
    for (std::size_t i = 0; i < d_in; ++i) {
      const double fi = f[i];
      for (std::size_t j = 0; j < d_sim; ++j) dst[j] += fi * head.weight(i, j);
    }
  }
  return out;
}

double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

FeatureMap project_features(const FeatureMap& feat, const SimHeadParams& params, std::size_t c) {
  const ClassHead& head = branch(params, c, feat.depth());
  std::vector<double> proj = project_f64(feat, head);
  std::vector<float> data(proj.begin(), proj.end());
  return FeatureMap(Tensor(Shape{feat.height(), feat.width(), head.d_sim()}, std::move(data)));
}

SimilarityField compute_similarities(const FeatureMap& feat, const SimHeadParams& params,
                                     const NeighborhoodSpec& spec) {
  std::vector<FeatureMap> projected;
  projected.reserve(params.heads.size());
  for (std::size_t c = 0; c < params.heads.size(); ++c) projected.push_back(project_features(feat, params, c));
  return similarity_field(projected, spec);
}

PairPartition pair_labels(const LabelMask& labels, const ReliabilityMask& reliable,
                          const NeighborhoodSpec& spec, std::size_t c) {
  require_same_grid(labels, reliable, "pair labels");
  if (c >= labels.channels() || c >= reliable.channels()) {
    throw ShapeError("pair labels: class " + std::to_string(c) + " out of range");
  }
  const std::size_t h = labels.height(), w = labels.width();
  PairPartition out;
  for (std::size_t v = 0; v < h * w; ++v) {
    if (reliable.value(v, c) != 1.0f) continue;
    const bool fg_i = labels.value(v, c) == 1.0f;
    for (std::size_t o = 0; o < spec.size(); ++o) {
      if (!spec.is_forward(o)) continue;
      const std::ptrdiff_t j = spec.neighbor(v, o, h, w);
      if (j < 0 || reliable.value(static_cast<std::size_t>(j), c) != 1.0f) continue;
      const bool fg_j = labels.value(static_cast<std::size_t>(j), c) == 1.0f;
      PixelPair pair{static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(o)};
      if (fg_i && fg_j) {
        out.fg_fg.push_back(pair);
      } else if (!fg_i && !fg_j) {
        out.bg_bg.push_back(pair);
      } else {
        out.fg_bg.push_back(pair);
      }
    }
  }
  return out;
}

double similarity_loss(const SimilarityField& field, const PairPartition& pairs, std::size_t c) {
  if (c >= field.channels()) throw ShapeError("similarity loss: class " + std::to_string(c) + " out of range");
  auto avg = [&](const std::vector<PixelPair>& set, bool same) {
    if (set.empty()) return 0.0;
    double sum = 0.0;
    for (const PixelPair& p : set) {
      const double s = field(p.pixel, p.offset, c);
      sum += std::log(std::max(same ? s : 1.0 - s, kLogFloor));
    }
    return sum / static_cast<double>(set.size());
  };
  return -0.25 * avg(pairs.fg_fg, true) - 0.25 * avg(pairs.bg_bg, true) - 0.5 * avg(pairs.fg_bg, false);
}

LossGradient loss_gradient(const FeatureMap& feat, const ClassHead& head, const PairPartition& pairs,
                           const NeighborhoodSpec& spec) {
  if (feat.depth() != head.d_in()) {
    throw ShapeError("loss gradient: feature depth " + std::to_string(feat.depth()) +
                     " does not match branch input width " + std::to_string(head.d_in()));
  }
  const std::size_t h = feat.height(), w = feat.width(), n = h * w, d_sim = head.d_sim();
  LossGradient out{0.0, ClassHead(head.d_in(), d_sim, head.has_bias())};
  if (pairs.total() == 0) return out;

  const std::vector<double> fs = project_f64(feat, head);
  std::vector<double> g(n * d_sim, 0.0);  // dL / d f_sim
  std::vector<char> touched(n, 0);
  const double log_floor = std::log(kLogFloor);

  auto accumulate = [&](const std::vector<PixelPair>& set, double weight, bool same) {
    if (set.empty()) return;
    const double scale = weight / static_cast<double>(set.size());
    for (const PixelPair& p : set) {
      const std::size_t i = p.pixel;
      const std::ptrdiff_t jj = spec.neighbor(i, p.offset, h, w);
      if (jj < 0) throw ShapeError("loss gradient: pair references a pixel outside the grid");
      const std::size_t j = static_cast<std::size_t>(jj);
      const double* fi = fs.data() + i * d_sim;
      const double* fj = fs.data() + j * d_sim;
      double a = 0.0;
      for (std::size_t d = 0; d < d_sim; ++d) a += std::abs(fi[d] - fj[d]);

      double dl_da = 0.0;
      if (same) {
        // -log S = a, unless S falls under the floor.
        if (std::exp(-a) >= kLogFloor) {
          out.loss += scale * a;
          dl_da = scale;
        } else {
          out.loss -= scale * log_floor;
        }
      } else {
        const double one_minus_s = -std::expm1(-a);
        if (one_minus_s >= kLogFloor) {
          out.loss -= scale * std::log(one_minus_s);
          dl_da = -scale / std::expm1(a);
        } else {
          out.loss -= scale * log_floor;
        }
      }
      if (dl_da == 0.0) continue;
      touched[i] = touched[j] = 1;
      double* gi = g.data() + i * d_sim;
      double* gj = g.data() + j * d_sim;
      for (std::size_t d = 0; d < d_sim; ++d) {
        const double step = dl_da * sign(fi[d] - fj[d]);
        gi[d] += step;
        gj[d] -= step;
      }
    }
  };
  accumulate(pairs.fg_fg, 0.25, true);
  accumulate(pairs.bg_bg, 0.25, true);
  accumulate(pairs.fg_bg, 0.5, false);

  ClassHead& grad = out.gradient;
  for (std::size_t v = 0; v < n; ++v) {
    if (!touched[v]) continue;
    auto f = feat.pixel(v);
    const double* gv = g.data() + v * d_sim;
    for (std::size_t i = 0; i < head.d_in(); ++i) {
      const double fi = f[i];
      for (std::size_t j = 0; j < d_sim; ++j) grad.weight(i, j) += fi * gv[j];
    }
    if (head.has_bias()) {
      for (std::size_t j = 0; j < d_sim; ++j) grad.bias(j) += gv[j];
    }
  }
  return out;
}

void HeadTrainConfig::validate() const {
  if (d_sim == 0) throw ConfigError("head.d_sim must be >= 1");
  if (epochs < 1) throw ConfigError("head.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("head.batch must be >= 1");
  adam.validate();
}

double HeadTrainResult::epoch_total(std::size_t e) const {
  return std::accumulate(epoch_loss.at(e).begin(), epoch_loss.at(e).end(), 0.0);
}

HeadTrainResult train_head(std::span<const HeadSample> samples, const NeighborhoodSpec& spec,
                           const HeadTrainConfig& cfg, Rng& rng, const SimHeadParams* init) {
  cfg.validate();
  if (samples.empty()) throw DegenerateError("train head: training set is empty");
  const std::size_t classes = samples.front().labels.channels();
  const std::size_t d_in = samples.front().features.depth();
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const HeadSample& sample = samples[s];
    require_same_grid(sample.features, sample.labels, "train head: features vs labels");
    require_same_grid(sample.features, sample.reliable, "train head: features vs reliability");
    if (sample.features.depth() != d_in || sample.labels.channels() != classes ||
        sample.reliable.channels() != classes) {
      throw ShapeError("train head: image " + std::to_string(s) +
                       " has a different feature depth or class count");
    }
  }

  HeadTrainResult result;
  if (init) {
    result.params = *init;
    if (result.params.heads.size() != classes) throw ShapeError("train head: initial parameters have wrong class count");
    for (const ClassHead& head : result.params.heads) {
      if (head.d_in() != d_in) throw ShapeError("train head: initial parameters have wrong input width");
    }
  } else {
    result.params = SimHeadParams::random(classes, d_in, cfg.d_sim, cfg.bias, rng);
  }

  std::vector<std::vector<PairPartition>> pairs(samples.size());
  parallel_for(samples.size(), cfg.threads, [&](std::size_t s) {
    for (std::size_t c = 0; c < classes; ++c) {
      pairs[s].push_back(pair_labels(samples[s].labels, samples[s].reliable, spec, c));
    }
  });

  std::vector<AdamState> states;
  for (const ClassHead& head : result.params.heads) states.emplace_back(cfg.adam, head.values().size());

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LossGradient> work;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<double> loss_sum(classes, 0.0);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      work.assign(count * classes, LossGradient{});
      parallel_for(count * classes, cfg.threads, [&](std::size_t job) {
        const std::size_t k = job / classes, c = job % classes;
        const std::size_t s = order[start + k];
        work[job] = loss_gradient(samples[s].features, result.params.heads[c], pairs[s][c], spec);
      });
      for (std::size_t c = 0; c < classes; ++c) {
        ClassHead& head = result.params.heads[c];
        std::vector<double> grad(head.values().size(), 0.0);
        for (std::size_t k = 0; k < count; ++k) {
          const LossGradient& lg = work[k * classes + c];
          loss_sum[c] += lg.loss;
          auto gk = lg.gradient.values();
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gk[i];
        }
        for (double& x : grad) x /= static_cast<double>(count);
        adam_step(head.values(), grad, states[c]);
      }
    }
    std::vector<double> mean(classes);
    for (std::size_t c = 0; c < classes; ++c) mean[c] = loss_sum[c] / static_cast<double>(samples.size());
    result.epoch_loss.push_back(mean);
    log().info("train-head epoch {}/{}: loss {:.6f}", epoch + 1, cfg.epochs, result.epoch_total(result.epoch_loss.size() - 1));
  }
  result.params.round_to_f32();
  return result;
}

std::vector<std::filesystem::path> save_head(const SimHeadParams& params, const HeadMetadata& meta,
                                             const std::filesystem::path& dir) {
  if (params.heads.empty()) throw ShapeError("save head: no branches");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const ClassHead& first = params.heads.front();
  for (std::size_t c = 0; c < params.heads.size(); ++c) {
    const ClassHead& head = params.heads[c];
    if (head.d_in() != first.d_in() || head.d_sim() != first.d_sim() || head.has_bias() != first.has_bias()) {
      throw ShapeError("save head: branches differ in shape");
    }
    Tensor wt(Shape{head.d_in(), head.d_sim()});
    Tensor bt(Shape{head.d_sim()});
    for (std::size_t i = 0; i < head.d_in(); ++i) {
      for (std::size_t j = 0; j < head.d_sim(); ++j) wt[i * head.d_sim() + j] = static_cast<float>(head.weight(i, j));
    }
    for (std::size_t j = 0; j < head.d_sim(); ++j) bt[j] = static_cast<float>(head.bias(j));
    auto wp = dir / ("head_W_c" + std::to_string(c) + ".npy");
    auto bp = dir / ("head_b_c" + std::to_string(c) + ".npy");
    save_tensor(wt, wp);
    save_tensor(bt, bp);
    written.push_back(wp);
    written.push_back(bp);
  }
  nlohmann::json sidecar = {
      {"classes", params.heads.size()}, {"d_in", first.d_in()},   {"d_sim", first.d_sim()},
      {"bias", first.has_bias()},       {"radius", meta.radius}, {"seed", meta.seed},
      {"epochs", meta.epochs},
  };
  auto jp = dir / "head.json";
  std::ofstream out(jp);
  if (!out) throw IoError(jp.string() + ": cannot open for writing");
  out << sidecar.dump(2) << '\n';
  written.push_back(jp);
  return written;
}

SimHeadParams load_head(const std::filesystem::path& dir, HeadMetadata* meta) {
  auto jp = dir / "head.json";
  std::ifstream in(jp);
  if (!in) throw IoError(jp.string() + ": cannot open for reading");
  nlohmann::json sidecar;
  try {
    in >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(jp.string() + ": " + e.what());
  }
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!sidecar.contains(key)) throw FormatError(jp.string() + ": missing field '" + key + "'");
    return sidecar.at(key);
  };
  const auto classes = field("classes").get<std::size_t>();
  const auto d_in = field("d_in").get<std::size_t>();
  const auto d_sim = field("d_sim").get<std::size_t>();
  const bool bias = field("bias").get<bool>();
  if (meta) {
    meta->radius = field("radius").get<double>();
    meta->seed = field("seed").get<std::uint64_t>();
    meta->epochs = field("epochs").get<int>();
  }
  SimHeadParams params;
  for (std::size_t c = 0; c < classes; ++c) {
    auto wp = dir / ("head_W_c" + std::to_string(c) + ".npy");
    auto bp = dir / ("head_b_c" + std::to_string(c) + ".npy");
    Tensor wt = load_tensor(wp);
    Tensor bt = load_tensor(bp);
    if (wt.shape() != Shape{d_in, d_sim}) throw FormatError(wp.string() + ": shape " + to_string(wt.shape()) + " disagrees with head.json");
    if (bt.shape() != Shape{d_sim}) throw FormatError(bp.string() + ": shape " + to_string(bt.shape()) + " disagrees with head.json");
    ClassHead head(d_in, d_sim, bias);
    for (std::size_t i = 0; i < d_in; ++i) {
      for (std::size_t j = 0; j < d_sim; ++j) head.weight(i, j) = wt[i * d_sim + j];
    }
    for (std::size_t j = 0; j < d_sim; ++j) head.bias(j) = bias ? bt[j] : 0.0;
    params.heads.push_back(std::move(head));
  }
  return params;
}

}  // namespace cpr
