#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cpr/adapt.hpp"
#include "cpr/labeling.hpp"
#include "cpr/refine.hpp"
#include "cpr/simhead.hpp"
#include "cpr/synthgen.hpp"

namespace cpr {

struct SynthSettings {
  std::size_t count = 20;
  std::string preset = "under-confident";  ///< "under-confident" or "noiseless"
  // Overrides applied on top of the preset.
  std::optional<std::size_t> height, width, depth;
  std::optional<double> separation, feature_noise, pass_jitter;
  std::optional<int> protuberances;
};

/// Every tunable of the pipeline. Defaults are the reference settings where
/// they exist (gamma 0.75, r 4, beta 2, t 4, gamma_low 0.4, gamma_high 0.85,
/// Adam 3e-2 / 3e-4 with betas 0.9 / 0.99, batch 8, 16 and 10 epochs).
///
/// The file format is INI: `[section]` headers followed by `key = value`
/// lines; `#` and `;` start comments. Every key is optional; unknown sections
/// or keys are rejected.
///
///   [pipeline]     seed, threads
///   [labeling]     gamma, eta, passes
///   [neighborhood] radius
///   [head]         d_sim, bias, epochs, batch, lr, beta1, beta2, epsilon
///   [refine]       beta, rounds, include_self, calibrate, epsilon_max
///   [denoise]      gamma_low, gamma_high, gamma, refresh_prototypes
///   [adapt]        epochs, batch, lr, beta1, beta2, epsilon, init, threshold
///   [synth]        count, preset, height, width, depth, separation,
///                  feature_noise, protuberances, pass_jitter
struct PipelineConfig {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  LabelConfig labeling{};
  double radius = 4.0;
  HeadTrainConfig head{};
  RefineConfig refine{};
  DenoiseConfig denoise{};
  AdaptConfig adapt{};
  SynthSettings synth{};

  /// Throws ConfigError naming the offending key (and `source:line`).
  static PipelineConfig parse(std::string_view text, std::string_view source = "<config>");
  static PipelineConfig load(const std::filesystem::path& path);

  void validate() const;
  nlohmann::json to_json() const;

  /// The scenario used for synthetic image `index`, seeded from the root seed.
  /// All images of a corpus share their region feature means.
  ScenarioConfig scenario(std::size_t index) const;
};

}  // namespace cpr
