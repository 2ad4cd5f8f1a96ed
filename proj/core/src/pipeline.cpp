#include "cpr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <utility>

#include "cpr/log.hpp"
#include "cpr/npy.hpp"
#include "cpr/parallel.hpp"
#include "cpr/rng.hpp"

namespace cpr {

namespace fs = std::filesystem;

namespace {

std::string image_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%03zu", index);
  return buf;
}

HeadTrainResult train_head_seeded(const PipelineConfig& cfg, std::span<const HeadSample> samples) {
  HeadTrainConfig head_cfg = cfg.head;
  head_cfg.threads = cfg.threads;
  Rng rng(derive_seed(cfg.seed, "train-head"));
  return train_head(samples, NeighborhoodSpec(cfg.radius), head_cfg, rng);
}

AdaptResult adapt_seeded(const PipelineConfig& cfg, std::span<const AdaptSample> samples) {
  AdaptConfig adapt_cfg = cfg.adapt;
  adapt_cfg.threads = cfg.threads;
  Rng rng(derive_seed(cfg.seed, "adapt"));
  AdaptResult result = adapt_toy(samples, adapt_cfg, rng);
  // The model is persisted as f32; keep the in-memory copy identical.
  for (double& v : result.model.values()) v = static_cast<float>(v);
  return result;
}

struct LabelSets {
  std::vector<std::string> ids;
  std::vector<const LabelMask*> truth;
  std::vector<const LabelMask*> initial;
  std::vector<const LabelMask*> refined;
  std::vector<LabelMask> adapted;
};

nlohmann::json build_report(const LabelSets& sets) {
  if (sets.ids.empty()) throw DegenerateError("evaluate: no image has ground truth");
  const auto names = default_class_names(sets.truth.front()->channels());
  std::vector<MetricReport> initial, refined, adapted;
  nlohmann::json images = nlohmann::json::object();
  for (std::size_t i = 0; i < sets.ids.size(); ++i) {
    initial.push_back(evaluate(*sets.initial[i], *sets.truth[i], names));
    refined.push_back(evaluate(*sets.refined[i], *sets.truth[i], names));
    adapted.push_back(evaluate(sets.adapted[i], *sets.truth[i], names));
    images[sets.ids[i]] = {{"initial", initial.back().to_json()},
                           {"refined", refined.back().to_json()},
                           {"adapted", adapted.back().to_json()}};
  }
  return {
      {"image_count", sets.ids.size()},
      {"mean",
       {{"initial", average_reports(initial).to_json()},
        {"refined", average_reports(refined).to_json()},
        {"adapted", average_reports(adapted).to_json()}}},
      {"images", images},
  };
}

// ---------------------------------------------------------------------------
// File helpers

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path.string() + ": write failed");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void check_shape(const Tensor& t, const Shape& expected, const fs::path& path) {
  if (t.shape() != expected) {
    throw ShapeError(path.string() + ": field 'shape' is " + to_string(t.shape()) + ", expected " + to_string(expected));
  }
}

/// Inputs and outputs of one stage run. Files are recorded relative to the
/// corpus or work root; hashes are taken when the manifest is written.
class Manifest {
 public:
  Manifest(std::string stage, const PipelineConfig& cfg, fs::path corpus, fs::path work)
      : stage_(std::move(stage)), cfg_(cfg), corpus_(std::move(corpus)), work_(std::move(work)) {}

  const fs::path& corpus() const { return corpus_; }
  const fs::path& work() const { return work_; }

  fs::path in(const fs::path& rel) {
    inputs_.push_back({"in", rel});
    return corpus_ / rel;
  }
  fs::path from_work(const fs::path& rel) {
    inputs_.push_back({"out", rel});
    return work_ / rel;
  }
  fs::path out(const fs::path& rel) {
    outputs_.push_back({"out", rel});
    const fs::path full = work_ / rel;
    fs::create_directories(full.parent_path());
    return full;
  }

  Tensor load_in(const fs::path& rel) { return load_tensor(in(rel)); }
  Tensor load_work(const fs::path& rel) { return load_tensor(from_work(rel)); }
  void save(const Tensor& t, const fs::path& rel) { save_tensor(t, out(rel)); }
  void save(const nlohmann::json& j, const fs::path& rel) { write_json(j, out(rel)); }

  void merge(const Manifest& other) {
    inputs_.insert(inputs_.end(), other.inputs_.begin(), other.inputs_.end());
    outputs_.insert(outputs_.end(), other.outputs_.begin(), other.outputs_.end());
  }

  void write(nlohmann::json extra = nlohmann::json::object()) const {
    auto entries = [&](const std::vector<Entry>& list) {
      nlohmann::json arr = nlohmann::json::array();
      for (const Entry& e : list) {
        const fs::path full = (e.root == "in" ? corpus_ : work_) / e.rel;
        arr.push_back({{"root", e.root}, {"path", e.rel.generic_string()}, {"fnv1a64", hex64(fnv1a64(read_bytes(full)))}});
      }
      return arr;
    };
    nlohmann::json j = {
        {"stage", stage_},
        {"seed", cfg_.seed},
        {"stage_seed", derive_seed(cfg_.seed, stage_)},
        {"config", cfg_.to_json()},
        {"inputs", entries(inputs_)},
        {"outputs", entries(outputs_)},
    };
    if (!extra.empty()) j["summary"] = std::move(extra);
    write_json(j, work_ / "manifests" / (stage_ + ".json"));
  }

 private:
  struct Entry {
    std::string root;
    fs::path rel;
  };
  std::string stage_;
  const PipelineConfig& cfg_;
  fs::path corpus_;
  fs::path work_;
  std::vector<Entry> inputs_;
  std::vector<Entry> outputs_;
};

/// Per-image loads run in parallel; each image records its files into its own
/// manifest slot and the slots are merged in image order.
template <class Fn>
void for_each_image(const PipelineConfig& cfg, Manifest& manifest, const std::vector<std::string>& ids, Fn&& fn) {
  std::vector<Manifest> slots;
  slots.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) slots.emplace_back("", cfg, manifest.corpus(), manifest.work());
  parallel_for(ids.size(), cfg.threads, [&](std::size_t i) { fn(i, slots[i]); });
  for (Manifest& s : slots) manifest.merge(s);
}

std::vector<std::string> require_images(const fs::path& corpus) {
  auto ids = list_corpus(corpus);
  if (ids.empty()) throw IoError(corpus.string() + ": no images (expected <id>/probs.npy sub-directories)");
  return ids;
}

PrototypeSet load_prototypes(Manifest& m, const fs::path& fg_rel, const fs::path& bg_rel) {
  PrototypeSet p{m.load_work(fg_rel), m.load_work(bg_rel)};
  require_rank(p.fg, 2, fg_rel.string().c_str());
  check_shape(p.bg, p.fg.shape(), m.work() / bg_rel);
  return p;
}

fs::path img(const std::string& id, const char* stage_dir, const char* file) {
  return fs::path(stage_dir) / id / file;
}

}  // namespace

// ---------------------------------------------------------------------------
// In-memory pipeline

ImageData image_from_scenario(Scenario scenario, std::string id) {
  ImageData image;
  image.id = std::move(id);
  image.stack = std::move(scenario.stack);
  image.feat_in = scenario.features;
  image.feat_l = std::move(scenario.features);
  image.truth = std::move(scenario.truth);
  return image;
}

ImageData synthesize_image(const PipelineConfig& cfg, std::size_t index) {
  return image_from_scenario(generate(cfg.scenario(index)), image_id(index));
}

PseudoLabels pseudo_label(const ImageData& image, const LabelConfig& cfg) {
  PseudoLabels out;
  out.aggregate = aggregate_passes(image.stack, cfg);
  try {
    out.prototypes = compute_prototypes(image.feat_l, out.aggregate.prob, out.aggregate.uncertainty,
                                        out.aggregate.labels, cfg);
  } catch (const DegenerateError& e) {
    throw DegenerateError("image " + image.id + ": " + e.what());
  }
  out.reliability = reliability_mask(image.feat_l, out.prototypes, out.aggregate.uncertainty, out.aggregate.labels, cfg);
  return out;
}

Denoised denoise(const FeatureMap& feat_l, const ProbMap& refined, const UncertaintyMap& uncertainty,
                 const PrototypeSet& stage1, const LabelConfig& label_cfg, const DenoiseConfig& cfg) {
  Denoised out;
  out.labels = refined_labels(refined, cfg);
  out.prototypes = cfg.refresh_prototypes
                       ? compute_prototypes_or(feat_l, refined, uncertainty, out.labels, label_cfg, stage1)
                       : stage1;
  out.distances = prototype_distances(feat_l, out.prototypes);
  out.selection = selection_mask(refined, out.labels, out.distances, cfg);
  return out;
}

CorpusRun run_pipeline(const PipelineConfig& cfg, std::span<const ImageData> images) {
  cfg.validate();
  const std::size_t n = images.size();
  const NeighborhoodSpec spec(cfg.radius);
  CorpusRun run;

  run.pseudo.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) { run.pseudo[i] = pseudo_label(images[i], cfg.labeling); });

  std::vector<HeadSample> head_samples;
  for (std::size_t i = 0; i < n; ++i) {
    head_samples.push_back({images[i].feat_in, run.pseudo[i].aggregate.labels, run.pseudo[i].reliability.mask});
  }
  run.head = train_head_seeded(cfg, head_samples);
  head_samples.clear();

  run.refined.resize(n);
  run.denoised.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const SimilarityField field = compute_similarities(images[i].feat_in, run.head.params, spec);
    run.refined[i] = refine(run.pseudo[i].aggregate.prob, field, cfg.refine);
    run.denoised[i] = denoise(images[i].feat_l, run.refined[i].calibrated, run.pseudo[i].aggregate.uncertainty,
                              run.pseudo[i].prototypes, cfg.labeling, cfg.denoise);
  });

  std::vector<AdaptSample> adapt_samples;
  for (std::size_t i = 0; i < n; ++i) {
    adapt_samples.push_back({images[i].feat_l, run.denoised[i].labels, run.denoised[i].selection.mask});
  }
  run.adapt = adapt_seeded(cfg, adapt_samples);

  run.predictions.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) { run.predictions[i] = run.adapt.model.predict(images[i].feat_l); });
  return run;
}

nlohmann::json evaluation_report(const PipelineConfig& cfg, std::span<const ImageData> images, const CorpusRun& run) {
  LabelSets sets;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].truth) throw DegenerateError("evaluate: image " + images[i].id + " has no ground truth");
    sets.ids.push_back(images[i].id);
    sets.truth.push_back(&*images[i].truth);
    sets.initial.push_back(&run.pseudo[i].aggregate.labels);
    sets.refined.push_back(&run.denoised[i].labels);
    sets.adapted.push_back(threshold_map(run.predictions[i], cfg.adapt.threshold));
  }
  return build_report(sets);
}

// ---------------------------------------------------------------------------
// Corpus access

std::vector<std::string> list_corpus(const fs::path& corpus) {
  if (!fs::is_directory(corpus)) throw IoError(corpus.string() + ": not a directory");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    if (entry.is_directory() && fs::exists(entry.path() / "probs.npy")) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

ImageData load_image(const fs::path& corpus, const std::string& id) {
  const fs::path dir = corpus / id;
  ImageData image;
  image.id = id;
  const fs::path probs_path = dir / "probs.npy";
  Tensor probs = load_tensor(probs_path);
  require_rank(probs, 4, probs_path.string().c_str());
  image.stack = ProbStack(std::move(probs));
  const std::size_t h = image.stack.height(), w = image.stack.width(), c = image.stack.channels();

  auto load_features = [&](const char* name) {
    const fs::path p = dir / name;
    Tensor t = load_tensor(p);
    require_rank(t, 3, p.string().c_str());
    if (t.shape()[0] != h || t.shape()[1] != w) {
      throw ShapeError(p.string() + ": field 'shape' is " + to_string(t.shape()) + ", grid disagrees with probs.npy");
    }
    return FeatureMap(std::move(t));
  };
  image.feat_l = load_features("feat_l.npy");
  image.feat_in = load_features("feat_in.npy");

  if (const fs::path gt = dir / "gt.npy"; fs::exists(gt)) {
    Tensor t = load_tensor(gt);
    check_shape(t, Shape{h, w, c}, gt);
    image.truth = LabelMask(std::move(t));
  }
  if (const fs::path meta = dir / "meta.json"; fs::exists(meta)) {
    const nlohmann::json j = read_json(meta);
    if (j.contains("passes") && j["passes"].get<std::size_t>() != image.stack.passes()) {
      throw ShapeError(meta.string() + ": field 'passes' disagrees with probs.npy");
    }
    if (j.contains("classes") && j["classes"].size() != c) {
      throw ShapeError(meta.string() + ": field 'classes' disagrees with probs.npy");
    }
  }
  return image;
}

nlohmann::json evaluate_files(const fs::path& pred, const fs::path& truth) {
  Tensor p = load_tensor(pred);
  Tensor t = load_tensor(truth);
  require_rank(p, 3, pred.string().c_str());
  check_shape(t, p.shape(), truth);
  const LabelMask pm(std::move(p));
  const LabelMask tm(std::move(t));
  return evaluate(pm, tm, default_class_names(pm.channels())).to_json();
}

// ---------------------------------------------------------------------------
// File stages

namespace stage {

void synth(const PipelineConfig& cfg, const fs::path& corpus) {
  cfg.validate();
  Manifest manifest("synth", cfg, corpus, corpus);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < cfg.synth.count; ++i) ids.push_back(image_id(i));
  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const ScenarioConfig sc = cfg.scenario(i);
    ImageData image = image_from_scenario(generate(sc), ids[i]);
    const fs::path dir = ids[i];
    m.save(image.stack.tensor(), dir / "probs.npy");
    m.save(image.feat_l.tensor(), dir / "feat_l.npy");
    m.save(image.feat_in.tensor(), dir / "feat_in.npy");
    m.save(image.truth->tensor(), dir / "gt.npy");
    m.save(nlohmann::json{{"id", ids[i]},
                          {"passes", sc.passes},
                          {"classes", default_class_names(2)},
                          {"layers", {{"feat_l", "synthetic"}, {"feat_in", "synthetic"}}},
                          {"preset", cfg.synth.preset},
                          {"seed", sc.seed}},
           dir / "meta.json");
  });
  manifest.write();
}

void pseudo_label(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& work) {
  cfg.validate();
  const auto ids = require_images(corpus);
  Manifest manifest("pseudo-label", cfg, corpus, work);
  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const std::string& id = ids[i];
    m.in(fs::path(id) / "probs.npy");
    m.in(fs::path(id) / "feat_l.npy");
    m.in(fs::path(id) / "feat_in.npy");
    const ImageData image = load_image(corpus, id);
    const PseudoLabels pl = cpr::pseudo_label(image, cfg.labeling);
    m.save(pl.aggregate.prob.tensor(), img(id, "pseudo", "prob.npy"));
    m.save(pl.aggregate.uncertainty.tensor(), img(id, "pseudo", "uncertainty.npy"));
    m.save(pl.aggregate.labels.tensor(), img(id, "pseudo", "labels.npy"));
    m.save(pl.reliability.mask.tensor(), img(id, "pseudo", "reliable.npy"));
    m.save(pl.reliability.distances.fg.tensor(), img(id, "pseudo", "dist_fg.npy"));
    m.save(pl.reliability.distances.bg.tensor(), img(id, "pseudo", "dist_bg.npy"));
    m.save(pl.prototypes.fg, img(id, "pseudo", "proto_fg.npy"));
    m.save(pl.prototypes.bg, img(id, "pseudo", "proto_bg.npy"));
  });
  manifest.write();
}

void train_head(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& work) {
  cfg.validate();
  const auto ids = require_images(corpus);
  const NeighborhoodSpec spec(cfg.radius);
  Manifest manifest("train-head", cfg, corpus, work);

  std::vector<HeadSample> samples(ids.size());
  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const std::string& id = ids[i];
    const fs::path feat_path = m.in(fs::path(id) / "feat_in.npy");
    Tensor feat = load_tensor(feat_path);
    require_rank(feat, 3, feat_path.string().c_str());
    samples[i].features = FeatureMap(std::move(feat));
    samples[i].labels = LabelMask(m.load_work(img(id, "pseudo", "labels.npy")));
    samples[i].reliable = ReliabilityMask(m.load_work(img(id, "pseudo", "reliable.npy")));
    require_same_grid(samples[i].features, samples[i].labels, feat_path.string().c_str());
  });

  const HeadTrainResult result = train_head_seeded(cfg, samples);
  const HeadMetadata meta{cfg.radius, derive_seed(cfg.seed, "train-head"), cfg.head.epochs};
  fs::create_directories(work / "head");
  for (const fs::path& p : save_head(result.params, meta, work / "head")) manifest.out(fs::relative(p, work));

  nlohmann::json losses = nlohmann::json::array();
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    losses.push_back({{"epoch", e}, {"per_class", result.epoch_loss[e]}, {"total", result.epoch_total(e)}});
  }
  manifest.save(nlohmann::json{{"epochs", losses}}, "head/loss.json");

  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const SimilarityField field = compute_similarities(samples[i].features, result.params, spec);
    m.save(field.tensor(), img(ids[i], "head", "similarity.npy"));
  });
  manifest.write({{"first_epoch_loss", result.epoch_total(0)},
                  {"last_epoch_loss", result.epoch_total(result.epoch_loss.size() - 1)}});
}

void refine(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& work) {
  cfg.validate();
  const auto ids = require_images(corpus);
  const NeighborhoodSpec spec(cfg.radius);
  Manifest manifest("refine", cfg, corpus, work);
  std::vector<nlohmann::json> degenerate(ids.size());
  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const std::string& id = ids[i];
    const ProbMap prob(m.load_work(img(id, "pseudo", "prob.npy")));
    const SimilarityField field(spec, m.load_work(img(id, "head", "similarity.npy")));
    require_same_grid(prob, field, (work / img(id, "head", "similarity.npy")).string().c_str());
    const RefineResult r = cpr::refine(prob, field, cfg.refine);
    m.save(r.revised.tensor(), img(id, "refine", "revised.npy"));
    m.save(r.calibrated.tensor(), img(id, "refine", "prob.npy"));
    degenerate[i] = r.degenerate;
  });
  nlohmann::json summary = nlohmann::json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) summary[ids[i]] = {{"degenerate_channels", degenerate[i]}};
  manifest.write(summary);
}

void denoise(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& work) {
  cfg.validate();
  const auto ids = require_images(corpus);
  Manifest manifest("denoise", cfg, corpus, work);
  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const std::string& id = ids[i];
    const fs::path feat_path = m.in(fs::path(id) / "feat_l.npy");
    const FeatureMap feat(load_tensor(feat_path));
    const ProbMap refined(m.load_work(img(id, "refine", "prob.npy")));
    const UncertaintyMap u(m.load_work(img(id, "pseudo", "uncertainty.npy")));
    const PrototypeSet stage1 = load_prototypes(m, img(id, "pseudo", "proto_fg.npy"), img(id, "pseudo", "proto_bg.npy"));
    require_same_grid(feat, refined, feat_path.string().c_str());
    const Denoised d = cpr::denoise(feat, refined, u, stage1, cfg.labeling, cfg.denoise);
    m.save(d.labels.tensor(), img(id, "denoise", "labels.npy"));
    m.save(d.selection.mask.tensor(), img(id, "denoise", "selection.npy"));
    m.save(d.selection.pixel_level.tensor(), img(id, "denoise", "pixel_level.npy"));
    m.save(d.selection.class_level.tensor(), img(id, "denoise", "class_level.npy"));
    m.save(d.prototypes.fg, img(id, "denoise", "proto_fg.npy"));
    m.save(d.prototypes.bg, img(id, "denoise", "proto_bg.npy"));
  });
  manifest.write();
}

void adapt(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& work) {
  cfg.validate();
  const auto ids = require_images(corpus);
  Manifest manifest("adapt", cfg, corpus, work);
  std::vector<AdaptSample> samples(ids.size());
  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    const std::string& id = ids[i];
    const fs::path feat_path = m.in(fs::path(id) / "feat_l.npy");
    samples[i].features = FeatureMap(load_tensor(feat_path));
    samples[i].labels = LabelMask(m.load_work(img(id, "denoise", "labels.npy")));
    samples[i].selected = SelectionMask(m.load_work(img(id, "denoise", "selection.npy")));
    require_same_grid(samples[i].features, samples[i].labels, feat_path.string().c_str());
  });

  const AdaptResult result = adapt_seeded(cfg, samples);
  const ToySegmentor& model = result.model;
  Tensor params(Shape{model.classes(), model.depth() + 1});
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = static_cast<float>(model.values()[i]);
  manifest.save(params, "adapt/model.npy");
  manifest.save(nlohmann::json{{"epoch_loss", result.epoch_loss}}, "adapt/loss.json");

  for_each_image(cfg, manifest, ids, [&](std::size_t i, Manifest& m) {
    m.save(model.predict(samples[i].features).tensor(), img(ids[i], "adapt", "pred.npy"));
  });
  manifest.write();
}

nlohmann::json evaluate(const PipelineConfig& cfg, const fs::path& corpus, const fs::path& work) {
  cfg.validate();
  const auto ids = require_images(corpus);
  Manifest manifest("evaluate", cfg, corpus, work);
  std::vector<std::string> with_truth;
  for (const std::string& id : ids) {
    if (fs::exists(corpus / id / "gt.npy")) {
      with_truth.push_back(id);
    } else {
      log().warn("evaluate: {} has no gt.npy, skipped", id);
    }
  }
  std::vector<LabelMask> truth(with_truth.size()), initial(with_truth.size()), refined(with_truth.size());
  LabelSets sets;
  sets.ids = with_truth;
  sets.adapted.resize(with_truth.size());
  for_each_image(cfg, manifest, with_truth, [&](std::size_t i, Manifest& m) {
    const std::string& id = with_truth[i];
    truth[i] = LabelMask(m.load_in(fs::path(id) / "gt.npy"));
    initial[i] = LabelMask(m.load_work(img(id, "pseudo", "labels.npy")));
    refined[i] = LabelMask(m.load_work(img(id, "denoise", "labels.npy")));
    const ProbMap pred(m.load_work(img(id, "adapt", "pred.npy")));
    sets.adapted[i] = threshold_map(pred, cfg.adapt.threshold);
    for (const LabelMask* other : {&initial[i], &refined[i], &sets.adapted[i]}) {
      if (other->tensor().shape() != truth[i].tensor().shape()) {
        throw ShapeError("evaluate: " + id + ": prediction shape disagrees with gt.npy");
      }
    }
  });
  for (std::size_t i = 0; i < with_truth.size(); ++i) {
    sets.truth.push_back(&truth[i]);
    sets.initial.push_back(&initial[i]);
    sets.refined.push_back(&refined[i]);
  }
  const nlohmann::json report = build_report(sets);
  manifest.save(report, "evaluate/report.json");
  manifest.write();
  return report;
}

nlohmann::json run_all(const PipelineConfig& cfg, const std::optional<fs::path>& corpus, const fs::path& work) {
  fs::path in;
  if (corpus) {
    in = *corpus;
  } else {
    in = work / "corpus";
    synth(cfg, in);
  }
  pseudo_label(cfg, in, work);
  train_head(cfg, in, work);
  refine(cfg, in, work);
  denoise(cfg, in, work);
  adapt(cfg, in, work);
  return evaluate(cfg, in, work);
}

}  // namespace stage

}  // namespace cpr
