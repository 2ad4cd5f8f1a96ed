#include "cpr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cpr/rng.hpp"

namespace cpr {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Parser {
  std::string key;
  std::string where;

  [[noreturn]] void bad(const std::string& expectation, std::string_view value) const {
    throw ConfigError(where + ": value '" + std::string(value) + "' for key '" + key + "' is not " + expectation);
  }

  double real(std::string_view v) const {
    std::string s(v);
    try {
      std::size_t used = 0;
      double x = std::stod(s, &used);
      if (used != s.size()) bad("a number", v);
      return x;
    } catch (const std::logic_error&) {
      bad("a number", v);
    }
  }

  template <class Int>
  Int integer(std::string_view v) const {
    Int x{};
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || end != v.data() + v.size()) bad("an integer", v);
    return x;
  }

  bool boolean(std::string_view v) const {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad("a boolean", v);
  }
};

using Setter = std::function<void(PipelineConfig&, const Parser&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"pipeline.seed", [](auto& c, auto& p, auto v) { c.seed = p.template integer<std::uint64_t>(v); }},
      {"pipeline.threads", [](auto& c, auto& p, auto v) { c.threads = p.template integer<unsigned>(v); }},

      {"labeling.gamma", [](auto& c, auto& p, auto v) { c.labeling.gamma = p.real(v); }},
      {"labeling.eta", [](auto& c, auto& p, auto v) { c.labeling.eta = p.real(v); }},
      {"labeling.passes", [](auto& c, auto& p, auto v) { c.labeling.passes = p.template integer<int>(v); }},

      {"neighborhood.radius", [](auto& c, auto& p, auto v) { c.radius = p.real(v); }},

      {"head.d_sim", [](auto& c, auto& p, auto v) { c.head.d_sim = p.template integer<std::size_t>(v); }},
      {"head.bias", [](auto& c, auto& p, auto v) { c.head.bias = p.boolean(v); }},
      {"head.epochs", [](auto& c, auto& p, auto v) { c.head.epochs = p.template integer<int>(v); }},
      {"head.batch", [](auto& c, auto& p, auto v) { c.head.batch_size = p.template integer<std::size_t>(v); }},
      {"head.lr", [](auto& c, auto& p, auto v) { c.head.adam.lr = p.real(v); }},
      {"head.beta1", [](auto& c, auto& p, auto v) { c.head.adam.beta1 = p.real(v); }},
      {"head.beta2", [](auto& c, auto& p, auto v) { c.head.adam.beta2 = p.real(v); }},
      {"head.epsilon", [](auto& c, auto& p, auto v) { c.head.adam.epsilon = p.real(v); }},

      {"refine.beta", [](auto& c, auto& p, auto v) { c.refine.beta = p.real(v); }},
      {"refine.rounds", [](auto& c, auto& p, auto v) { c.refine.rounds = p.template integer<int>(v); }},
      {"refine.include_self", [](auto& c, auto& p, auto v) { c.refine.include_self = p.boolean(v); }},
      {"refine.calibrate", [](auto& c, auto& p, auto v) { c.refine.calibrate = p.boolean(v); }},
      {"refine.epsilon_max", [](auto& c, auto& p, auto v) { c.refine.epsilon_max = p.real(v); }},

      {"denoise.gamma_low", [](auto& c, auto& p, auto v) { c.denoise.gamma_low = p.real(v); }},
      {"denoise.gamma_high", [](auto& c, auto& p, auto v) { c.denoise.gamma_high = p.real(v); }},
      {"denoise.gamma", [](auto& c, auto& p, auto v) { c.denoise.gamma = p.real(v); }},
      {"denoise.refresh_prototypes", [](auto& c, auto& p, auto v) { c.denoise.refresh_prototypes = p.boolean(v); }},

      {"adapt.epochs", [](auto& c, auto& p, auto v) { c.adapt.epochs = p.template integer<int>(v); }},
      {"adapt.batch", [](auto& c, auto& p, auto v) { c.adapt.batch_size = p.template integer<std::size_t>(v); }},
      {"adapt.lr", [](auto& c, auto& p, auto v) { c.adapt.adam.lr = p.real(v); }},
      {"adapt.beta1", [](auto& c, auto& p, auto v) { c.adapt.adam.beta1 = p.real(v); }},
      {"adapt.beta2", [](auto& c, auto& p, auto v) { c.adapt.adam.beta2 = p.real(v); }},
      {"adapt.epsilon", [](auto& c, auto& p, auto v) { c.adapt.adam.epsilon = p.real(v); }},
      {"adapt.threshold", [](auto& c, auto& p, auto v) { c.adapt.threshold = p.real(v); }},
      {"adapt.init",
       [](auto& c, auto& p, auto v) {
         if (v == "centroid") {
           c.adapt.init = ToyInit::kCentroid;
         } else if (v == "zero") {
           c.adapt.init = ToyInit::kZero;
         } else {
           p.bad("'centroid' or 'zero'", v);
         }
       }},

      {"synth.count", [](auto& c, auto& p, auto v) { c.synth.count = p.template integer<std::size_t>(v); }},
      {"synth.preset",
       [](auto& c, auto& p, auto v) {
         if (v != "under-confident" && v != "noiseless") p.bad("'under-confident' or 'noiseless'", v);
         c.synth.preset = std::string(v);
       }},
      {"synth.height", [](auto& c, auto& p, auto v) { c.synth.height = p.template integer<std::size_t>(v); }},
      {"synth.width", [](auto& c, auto& p, auto v) { c.synth.width = p.template integer<std::size_t>(v); }},
      {"synth.depth", [](auto& c, auto& p, auto v) { c.synth.depth = p.template integer<std::size_t>(v); }},
      {"synth.separation", [](auto& c, auto& p, auto v) { c.synth.separation = p.real(v); }},
      {"synth.feature_noise", [](auto& c, auto& p, auto v) { c.synth.feature_noise = p.real(v); }},
      {"synth.protuberances", [](auto& c, auto& p, auto v) { c.synth.protuberances = p.template integer<int>(v); }},
      {"synth.pass_jitter", [](auto& c, auto& p, auto v) { c.synth.pass_jitter = p.real(v); }},
  };
  return table;
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::string_view text, std::string_view source) {
  PipelineConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    std::string_view line = raw;
    if (auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + std::string(line) + "'");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value', got '" + std::string(line) + "'");
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any [section]");
    const std::string full = section + "." + key;
    auto it = setters().find(full);
    if (it == setters().end()) throw ConfigError(where + ": unknown config key '" + full + "'");
    it->second(cfg, Parser{full, where}, value);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void PipelineConfig::validate() const {
  if (threads == 0) throw ConfigError("pipeline.threads must be >= 1");
  labeling.validate();
  NeighborhoodSpec check(radius);
  head.validate();
  refine.validate();
  denoise.validate();
  adapt.validate();
  if (synth.count == 0) throw ConfigError("synth.count must be >= 1");
  scenario(0).validate();
}

ScenarioConfig PipelineConfig::scenario(std::size_t index) const {
  const std::uint64_t image_seed = derive_seed(seed, "synth/" + std::to_string(index));
  ScenarioConfig s = synth.preset == "noiseless" ? ScenarioConfig::noiseless(image_seed)
                                                 : ScenarioConfig::under_confident(image_seed);
  s.passes = labeling.passes;
  s.means_seed = derive_seed(seed, "synth/means");
  if (synth.height) s.height = *synth.height;
  if (synth.width) s.width = *synth.width;
  if (synth.depth) s.depth = *synth.depth;
  if (synth.separation) s.separation = *synth.separation;
  if (synth.feature_noise) s.feature_noise = *synth.feature_noise;
  if (synth.protuberances) s.protuberances = *synth.protuberances;
  if (synth.pass_jitter) s.pass_jitter = *synth.pass_jitter;
  return s;
}

nlohmann::json PipelineConfig::to_json() const {
  using nlohmann::json;
  json synth_json = {{"count", synth.count}, {"preset", synth.preset}};
  auto put = [&](const char* key, const auto& opt) {
    if (opt) synth_json[key] = *opt;
  };
  put("height", synth.height);
  put("width", synth.width);
  put("depth", synth.depth);
  put("separation", synth.separation);
  put("feature_noise", synth.feature_noise);
  put("protuberances", synth.protuberances);
  put("pass_jitter", synth.pass_jitter);
  return {
      {"pipeline", {{"seed", seed}, {"threads", threads}}},
      {"labeling", {{"gamma", labeling.gamma}, {"eta", labeling.eta}, {"passes", labeling.passes}}},
      {"neighborhood", {{"radius", radius}}},
      {"head",
       {{"d_sim", head.d_sim}, {"bias", head.bias}, {"epochs", head.epochs}, {"batch", head.batch_size},
        {"lr", head.adam.lr}, {"beta1", head.adam.beta1}, {"beta2", head.adam.beta2}, {"epsilon", head.adam.epsilon}}},
      {"refine",
       {{"beta", refine.beta}, {"rounds", refine.rounds}, {"include_self", refine.include_self},
        {"calibrate", refine.calibrate}, {"epsilon_max", refine.epsilon_max}}},
      {"denoise",
       {{"gamma_low", denoise.gamma_low}, {"gamma_high", denoise.gamma_high}, {"gamma", denoise.gamma},
        {"refresh_prototypes", denoise.refresh_prototypes}}},
      {"adapt",
       {{"epochs", adapt.epochs}, {"batch", adapt.batch_size}, {"lr", adapt.adam.lr}, {"beta1", adapt.adam.beta1},
        {"beta2", adapt.adam.beta2}, {"epsilon", adapt.adam.epsilon},
        {"init", adapt.init == ToyInit::kCentroid ? "centroid" : "zero"}, {"threshold", adapt.threshold}}},
      {"synth", synth_json},
  };
}

}  // namespace cpr
