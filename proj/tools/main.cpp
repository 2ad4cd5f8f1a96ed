// cpr: command-line driver for the pseudo-label refinement pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpr/config.hpp"
#include "cpr/error.hpp"
#include "cpr/log.hpp"
#include "cpr/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string in;
  std::string out;
  std::string pred;
  std::string truth;
};

int exit_code(const std::exception& e) {
  if (dynamic_cast<const cpr::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const cpr::IoError*>(&e)) return 3;
  if (dynamic_cast<const cpr::FormatError*>(&e)) return 4;
  if (dynamic_cast<const cpr::ShapeError*>(&e)) return 5;
  if (dynamic_cast<const cpr::DegenerateError*>(&e)) return 6;
  return 1;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const cpr::ConfigError*>(&e)) return "config";
  if (dynamic_cast<const cpr::IoError*>(&e)) return "io";
  if (dynamic_cast<const cpr::FormatError*>(&e)) return "format";
  if (dynamic_cast<const cpr::ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const cpr::DegenerateError*>(&e)) return "degenerate";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "io";
  return "internal";
}

void report_error(const std::string& command, const std::exception& e) {
  const nlohmann::json err = {{"error", {{"kind", error_kind(e)}, {"command", command}, {"message", e.what()}}}};
  std::cerr << err.dump() << '\n';
}

cpr::PipelineConfig load_config(const Options& opt) {
  cpr::PipelineConfig cfg = opt.config.empty() ? cpr::PipelineConfig{} : cpr::PipelineConfig::load(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.threads) cfg.threads = *opt.threads;
  cfg.validate();
  return cfg;
}

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty()) throw cpr::ConfigError(std::string("missing required flag ") + flag);
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-label refinement pipeline"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "root seed (overrides the config)");
    sub->add_option("--threads", opt.threads, "worker threads for image-level parallelism")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth);
  synth->add_option("--out", opt.out, "corpus directory")->required();

  struct Staged {
    const char* name;
    const char* help;
    void (*run)(const cpr::PipelineConfig&, const fs::path&, const fs::path&);
  };
  const Staged staged[] = {
      {"pseudo-label", "aggregate passes, prototypes and reliability masks", cpr::stage::pseudo_label},
      {"train-head", "train the similarity head and emit similarity tensors", cpr::stage::train_head},
      {"refine", "revise and calibrate probabilities", cpr::stage::refine},
      {"denoise", "refined labels and selection masks", cpr::stage::denoise},
      {"adapt", "train the toy segmentor on selected refined labels", cpr::stage::adapt},
  };
  std::vector<std::pair<CLI::App*, const Staged*>> stage_commands;
  for (const Staged& s : staged) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    sub->add_option("--in", opt.in, "corpus directory")->required();
    sub->add_option("--out", opt.out, "work directory")->required();
    stage_commands.emplace_back(sub, &s);
  }

  auto* evaluate = app.add_subcommand("evaluate", "score labels against ground truth");
  add_common(evaluate);
  evaluate->add_option("--in", opt.in, "corpus directory");
  evaluate->add_option("--out", opt.out, "work directory");
  auto* pred_opt = evaluate->add_option("--pred", opt.pred, "label mask .npy (single-pair mode)");
  auto* truth_opt = evaluate->add_option("--truth", opt.truth, "truth mask .npy (single-pair mode)");
  pred_opt->needs(truth_opt);
  truth_opt->needs(pred_opt);

  auto* run_all = app.add_subcommand("run-all", "run every stage in order");
  add_common(run_all);
  run_all->add_option("--in", opt.in, "corpus directory (synthesized under <out>/corpus when omitted)");
  run_all->add_option("--out", opt.out, "work directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  try {
    if (chosen == synth) {
      cpr::stage::synth(load_config(opt), opt.out);
    } else if (chosen == evaluate) {
      if (!opt.pred.empty()) {
        std::cout << cpr::evaluate_files(opt.pred, opt.truth).dump(2) << '\n';
      } else {
        const auto report =
            cpr::stage::evaluate(load_config(opt), require_dir(opt.in, "--in"), require_dir(opt.out, "--out"));
        std::cout << report["mean"].dump(2) << '\n';
      }
    } else if (chosen == run_all) {
      std::optional<fs::path> corpus;
      if (!opt.in.empty()) corpus = fs::path(opt.in);
      const auto report = cpr::stage::run_all(load_config(opt), corpus, opt.out);
      std::cout << report["mean"].dump(2) << '\n';
    } else {
      for (const auto& [sub, s] : stage_commands) {
        if (sub == chosen) s->run(load_config(opt), opt.in, opt.out);
      }
    }
  } catch (const std::exception& e) {
    report_error(command, e);
    return exit_code(e);
  }
  return 0;
}
