#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpr/adapt.hpp"
#include "cpr/config.hpp"
#include "cpr/labeling.hpp"
#include "cpr/metrics.hpp"
#include "cpr/refine.hpp"
#include "cpr/simhead.hpp"
#include "cpr/synthgen.hpp"

namespace cpr {

/// One target image as exported by a source model.
struct ImageData {
  std::string id;
  ProbStack stack;     ///< [K, H, W, C]
  FeatureMap feat_l;   ///< features used for prototypes and the toy segmentor
  FeatureMap feat_in;  ///< input of the similarity head
  std::optional<LabelMask> truth;
};

/// Wraps a synthetic scenario; both feature maps are the scenario features.
ImageData image_from_scenario(Scenario scenario, std::string id);

/// Synthetic image `index` of the corpus described by `cfg`, id "img_<index>".
ImageData synthesize_image(const PipelineConfig& cfg, std::size_t index);

/// Stage 1: aggregated passes, prototypes and the reliability mask.
struct PseudoLabels {
  PassAggregate aggregate;
  PrototypeSet prototypes;
  ReliabilityResult reliability;
};

PseudoLabels pseudo_label(const ImageData& image, const LabelConfig& cfg);

/// Stage 2 output for one image: refined labels and their selection mask.
struct Denoised {
  LabelMask labels;
  SelectionResult selection;
  PrototypeSet prototypes;  ///< prototypes the class-level factor was measured against
  DistanceMaps distances;
};

/// Refined labels y' = [p' >= gamma] and the selection mask m'. With
/// `refresh_prototypes` the prototypes are recomputed from (p', y') under the
/// stage-1 uncertainty gate, falling back per slot to `stage1`.
Denoised denoise(const FeatureMap& feat_l, const ProbMap& refined, const UncertaintyMap& uncertainty,
                 const PrototypeSet& stage1, const LabelConfig& label_cfg, const DenoiseConfig& cfg);

/// Every intermediate of a whole-corpus run.
struct CorpusRun {
  std::vector<PseudoLabels> pseudo;
  HeadTrainResult head;
  std::vector<RefineResult> refined;
  std::vector<Denoised> denoised;
  AdaptResult adapt;
  std::vector<ProbMap> predictions;
};

/// Runs both stages in memory with the seeds the file stages use.
CorpusRun run_pipeline(const PipelineConfig& cfg, std::span<const ImageData> images);

/// Mean metrics of the initial, refined and adapted labels against ground
/// truth, plus per-image entries. Requires truth on every image.
nlohmann::json evaluation_report(const PipelineConfig& cfg, std::span<const ImageData> images, const CorpusRun& run);

// File-based stages. A corpus directory holds one sub-directory per image with
// probs.npy, feat_l.npy, feat_in.npy, meta.json and optionally gt.npy. A work
// directory collects stage outputs under pseudo/, head/, refine/, denoise/,
// adapt/ and evaluate/, and one manifest per stage under manifests/. Manifests
// list every input and output with an FNV-1a 64 content hash, the echoed
// config and the stage seed; paths are relative to the corpus ("in") or work
// ("out") root so runs in different directories compare equal.

namespace stage {

void synth(const PipelineConfig& cfg, const std::filesystem::path& corpus);
void pseudo_label(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& work);
void train_head(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& work);
void refine(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& work);
void denoise(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& work);
void adapt(const PipelineConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& work);
/// Writes evaluate/report.json and returns it.
nlohmann::json evaluate(const PipelineConfig& cfg, const std::filesystem::path& corpus,
                        const std::filesystem::path& work);
/// Every stage in order. Without a corpus a synthetic one is generated under
/// <work>/corpus first.
nlohmann::json run_all(const PipelineConfig& cfg, const std::optional<std::filesystem::path>& corpus,
                       const std::filesystem::path& work);

}  // namespace stage

/// Image ids of a corpus directory, sorted.
std::vector<std::string> list_corpus(const std::filesystem::path& corpus);

/// Loads one image of a corpus directory and checks the shapes agree.
ImageData load_image(const std::filesystem::path& corpus, const std::string& id);

/// Dice/ASD report of a label mask file against a truth file.
nlohmann::json evaluate_files(const std::filesystem::path& pred, const std::filesystem::path& truth);

}  // namespace cpr
