// dyngrasp: synth | preprocess | segment | eval | report
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 invariant violation.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dyngrasp/dyngrasp.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> strategies;
  std::optional<double> lambda;
  std::optional<double> window_ms;
  std::optional<double> step_ms;
  std::optional<std::string> out;
  std::optional<std::string> data;
  std::vector<std::string> subjects;
  std::optional<bool> ramp;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Seed for synthesis and training");
  cmd->add_option("--strategy", f.strategies, "reach | grasp | all3 (repeatable; default all three)");
  cmd->add_option("--lambda", f.lambda, "GGS covariance regularizer");
  cmd->add_option("--window-ms", f.window_ms, "Window length in ms");
  cmd->add_option("--step-ms", f.step_ms, "Window step in ms");
  cmd->add_option("--out", f.out, "Work directory for stage outputs");
  cmd->add_option("--data", f.data, "Directory holding session folders");
  cmd->add_option("--subject", f.subjects, "Restrict evaluation to these subjects (repeatable)");
}

dyngrasp::RunConfig resolve(const Flags& f) {
  dyngrasp::RunConfig cfg;
  if (!f.config.empty()) cfg = dyngrasp::load_config(f.config, cfg);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : f.strategies) cfg.strategies.push_back(dyngrasp::parse_strategy(s));
  }
  if (f.lambda) cfg.ggs.lambda = *f.lambda;
  if (f.window_ms) cfg.pipeline.window_ms = *f.window_ms;
  if (f.step_ms) cfg.pipeline.step_ms = *f.step_ms;
  if (f.out) cfg.out_dir = *f.out;
  if (f.data) cfg.data_dir = *f.data;
  if (!f.subjects.empty()) cfg.subjects = f.subjects;
  if (f.ramp) cfg.synth.pre_shape_ramp = *f.ramp;
  return cfg;
}

int exit_code(dyngrasp::ErrorKind k) {
  switch (k) {
    case dyngrasp::ErrorKind::Config: return 2;
    case dyngrasp::ErrorKind::Data: return 3;
    case dyngrasp::ErrorKind::Invariant: return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grasp-intent decoding from pre-shape EMG: synthesis, segmentation and evaluation"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic session");
  auto* pre = app.add_subcommand("preprocess", "Band-pass, envelope and MVC-normalize every trial");
  auto* seg = app.add_subcommand("segment", "Segment every trial into reach/grasp/return/rest");
  auto* eval = app.add_subcommand("eval", "Cross-validate the three training strategies");
  auto* report = app.add_subcommand("report", "Render report.md from metrics.json");
  for (auto* c : {synth, pre, seg, eval, report}) add_common(c, f);
  bool no_ramp = false;
  synth->add_flag("--no-ramp", no_ramp, "Hold the reach phase at a constant blend (no pre-shaping)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (no_ramp) f.ramp = false;

  try {
    const dyngrasp::RunConfig cfg = resolve(f);
    if (*synth) {
      dyngrasp::cmd_synth(cfg);
    } else if (*pre) {
      dyngrasp::cmd_preprocess(cfg);
    } else if (*seg) {
      dyngrasp::cmd_segment(cfg);
    } else if (*eval) {
      dyngrasp::cmd_eval(cfg);
    } else if (*report) {
      dyngrasp::cmd_report(cfg);
    }
  } catch (const dyngrasp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
