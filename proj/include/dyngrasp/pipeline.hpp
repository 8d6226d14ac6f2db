#pragma once

// Stage commands behind the `dyngrasp` tool:
//   synth -> <data>/<subject>_<session>/{trial CSVs, mvc.csv, lead_in.csv,
//            manifest.json, ground_truth.json}
//   preprocess -> <out>/envelopes/...      (versioned cache)
//   segment    -> <out>/segments/<session>/segments.json
//   eval       -> <out>/eval/{curves_*.csv, confusion_*.csv, metrics.json}
//   report     -> <out>/report.md
//
// Later stages refuse to run when an earlier artifact is missing and rebuild
// it when its recorded hash no longer matches the inputs or configuration.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "annotation.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "extra_trees.hpp"
#include "ggs.hpp"
#include "io.hpp"
#include "signal_pipeline.hpp"
#include "synth.hpp"

namespace dyngrasp {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunConfig {
  fs::path data_dir = "data";
  fs::path out_dir = "out";
  PipelineConfig pipeline;
  GgsConfig ggs;
  TrainConfig train;
  SynthConfig synth;
  std::vector<TrainingStrategy> strategies{TrainingStrategy::ReachRest, TrainingStrategy::GraspRest,
                                           TrainingStrategy::ReachGraspRest};
  std::optional<std::uint64_t> seed;
  std::vector<std::string> subjects;  // empty = all
  double context_ms = 700.0;
  double return_early_ms = 200.0;
};

inline constexpr int kPipelineVersion = 1;

// ------------------------------------------------------------- config ----

inline json pipeline_json(const PipelineConfig& p) {
  return {{"band_low_hz", p.band_low_hz},         {"band_high_hz", p.band_high_hz},
          {"band_order", p.band_order},           {"envelope_cutoff_hz", p.envelope_cutoff_hz},
          {"envelope_order", p.envelope_order},   {"window_ms", p.window_ms},
          {"step_ms", p.step_ms}};
}

inline json ggs_json(const GgsConfig& g) {
  return {{"n_breakpoints", g.n_breakpoints},         {"lambda", g.lambda},
          {"downsample_factor", g.downsample_factor}, {"min_segment_len", g.min_segment_len},
          {"max_adjust_passes", g.max_adjust_passes}, {"search_stride", g.search_stride}};
}

inline json train_json(const TrainConfig& t) {
  return {{"n_trees", t.n_trees},
          {"k_features", t.k_features},
          {"min_samples_split", t.min_samples_split},
          {"max_depth", t.max_depth}};
}

inline json synth_json(const SynthConfig& s) {
  return {{"n_gestures", s.n_gestures},
          {"objects_per_gesture", s.objects_per_gesture},
          {"trials_per_object", s.trials_per_object},
          {"trial_length_s", s.trial_length_s},
          {"noise_sigma", s.noise_sigma},
          {"pre_shape_ramp", s.pre_shape_ramp},
          {"reach_s", {s.reach_s.first, s.reach_s.second}},
          {"grasp_s", {s.grasp_s.first, s.grasp_s.second}},
          {"return_s", {s.return_s.first, s.return_s.second}},
          {"min_rest_s", s.min_rest_s},
          {"crossfade_ms", s.crossfade_ms},
          {"rest_level", s.rest_level},
          {"template_low", s.template_low},
          {"template_high", s.template_high},
          {"mvc_factor", s.mvc_factor},
          {"mvc_s", s.mvc_s},
          {"lead_in_s", s.lead_in_s},
          {"subject_id", s.subject_id},
          {"session_id", s.session_id}};
}

/// Everything that influences results. Paths are excluded so that the same
/// run in two output directories hashes identically.
inline json to_json(const RunConfig& c) {
  json j;
  j["pipeline"] = pipeline_json(c.pipeline);
  j["ggs"] = ggs_json(c.ggs);
  j["train"] = train_json(c.train);
  j["synth"] = synth_json(c.synth);
  std::vector<std::string> s;
  for (auto st : c.strategies) s.emplace_back(strategy_name(st));
  j["strategies"] = s;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["subjects"] = c.subjects;
  j["context_ms"] = c.context_ms;
  j["return_early_ms"] = c.return_early_ms;
  return j;
}

namespace detail {

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + section + key + "'");
  }
}

inline void reject_unknown(const json& obj, const json& known, const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!known.contains(k)) throw ConfigError("config: unknown key '" + section + k + "'");
  }
}

inline void read_range(const json& obj, const char* key, std::pair<double, double>& out,
                       const std::string& section) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError("config: '" + section + key + "' must be [min, max]");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace detail

/// Overlays a JSON config onto `base`. Unknown keys are errors.
inline RunConfig apply_config_json(RunConfig c, const json& j) {
  using detail::read_field;
  const RunConfig defaults;
  json known = to_json(defaults);
  known["data_dir"] = "";
  known["out_dir"] = "";
  detail::reject_unknown(j, known, "");
  if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    detail::reject_unknown(p, known["pipeline"], "pipeline.");
    read_field(p, "band_low_hz", c.pipeline.band_low_hz, "pipeline.");
    read_field(p, "band_high_hz", c.pipeline.band_high_hz, "pipeline.");
    read_field(p, "band_order", c.pipeline.band_order, "pipeline.");
    read_field(p, "envelope_cutoff_hz", c.pipeline.envelope_cutoff_hz, "pipeline.");
    read_field(p, "envelope_order", c.pipeline.envelope_order, "pipeline.");
    read_field(p, "window_ms", c.pipeline.window_ms, "pipeline.");
    read_field(p, "step_ms", c.pipeline.step_ms, "pipeline.");
  }
  if (j.contains("ggs")) {
    const auto& g = j.at("ggs");
    detail::reject_unknown(g, known["ggs"], "ggs.");
    read_field(g, "n_breakpoints", c.ggs.n_breakpoints, "ggs.");
    read_field(g, "lambda", c.ggs.lambda, "ggs.");
    read_field(g, "downsample_factor", c.ggs.downsample_factor, "ggs.");
    read_field(g, "min_segment_len", c.ggs.min_segment_len, "ggs.");
    read_field(g, "max_adjust_passes", c.ggs.max_adjust_passes, "ggs.");
    read_field(g, "search_stride", c.ggs.search_stride, "ggs.");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(t, known["train"], "train.");
    read_field(t, "n_trees", c.train.n_trees, "train.");
    read_field(t, "k_features", c.train.k_features, "train.");
    read_field(t, "min_samples_split", c.train.min_samples_split, "train.");
    read_field(t, "max_depth", c.train.max_depth, "train.");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    detail::reject_unknown(s, known["synth"], "synth.");
    read_field(s, "n_gestures", c.synth.n_gestures, "synth.");
    read_field(s, "objects_per_gesture", c.synth.objects_per_gesture, "synth.");
    read_field(s, "trials_per_object", c.synth.trials_per_object, "synth.");
    read_field(s, "trial_length_s", c.synth.trial_length_s, "synth.");
    read_field(s, "noise_sigma", c.synth.noise_sigma, "synth.");
    read_field(s, "pre_shape_ramp", c.synth.pre_shape_ramp, "synth.");
    detail::read_range(s, "reach_s", c.synth.reach_s, "synth.");
    detail::read_range(s, "grasp_s", c.synth.grasp_s, "synth.");
    detail::read_range(s, "return_s", c.synth.return_s, "synth.");
    read_field(s, "min_rest_s", c.synth.min_rest_s, "synth.");
    read_field(s, "crossfade_ms", c.synth.crossfade_ms, "synth.");
    read_field(s, "rest_level", c.synth.rest_level, "synth.");
    read_field(s, "template_low", c.synth.template_low, "synth.");
    read_field(s, "template_high", c.synth.template_high, "synth.");
    read_field(s, "mvc_factor", c.synth.mvc_factor, "synth.");
    read_field(s, "mvc_s", c.synth.mvc_s, "synth.");
    read_field(s, "lead_in_s", c.synth.lead_in_s, "synth.");
    read_field(s, "subject_id", c.synth.subject_id, "synth.");
    read_field(s, "session_id", c.synth.session_id, "synth.");
  }
  if (j.contains("strategies")) {
    std::vector<std::string> names;
    detail::read_field(j, "strategies", names, "");
    c.strategies.clear();
    for (const auto& n : names) c.strategies.push_back(parse_strategy(n));
  }
  if (j.contains("seed") && !j.at("seed").is_null()) {
    std::uint64_t s = 0;
    read_field(j, "seed", s, "");
    c.seed = s;
  }
  read_field(j, "subjects", c.subjects, "");
  read_field(j, "context_ms", c.context_ms, "");
  read_field(j, "return_early_ms", c.return_early_ms, "");
  return c;
}

inline RunConfig load_config(const fs::path& p, RunConfig base = {}) {
  if (!fs::exists(p)) throw ConfigError("config file not found: " + p.string());
  json j;
  try {
    j = json::parse(io::read_text(p));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + p.string() + ": " + e.what());
  }
  return apply_config_json(std::move(base), j);
}

/// Range checks that every module would otherwise only hit mid-run.
inline void validate(const RunConfig& c) {
  const auto& p = c.pipeline;
  if (!(p.window_ms > 0.0) || !(p.step_ms > 0.0)) throw ConfigError("window_ms and step_ms must be > 0");
  if (!(p.envelope_cutoff_hz > 0.0) || p.envelope_order < 1) {
    throw ConfigError("envelope cutoff and order must be positive");
  }
  // Design once to surface band-edge or order errors as config errors.
  design_bandpass(p.band_low_hz, p.band_high_hz, p.band_order, kSampleRateHz);
  design_lowpass(p.envelope_cutoff_hz, p.envelope_order, kSampleRateHz);
  validate(c.ggs, kChannels);
  if (c.ggs.n_breakpoints != 3) throw ConfigError("ggs.n_breakpoints must be 3 (four phases)");
  validate(c.train);
  if (c.strategies.empty()) throw ConfigError("at least one strategy is required");
  if (!(c.context_ms >= 0.0) || !(c.return_early_ms > 0.0)) {
    throw ConfigError("context_ms must be >= 0 and return_early_ms > 0");
  }
}

inline std::string config_hash(const RunConfig& c) {
  return io::hex64(io::fnv1a(to_json(c).dump()));
}

inline std::uint64_t require_seed(const RunConfig& c, const char* command) {
  if (!c.seed) throw ConfigError(std::string(command) + ": --seed (or \"seed\" in the config) is required");
  return *c.seed;
}

// ------------------------------------------------------------ sessions ----

/// Session directories under `data_dir` (those holding a manifest.json).
inline std::vector<fs::path> discover_sessions(const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw DataError("data directory not found: " + data_dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(data_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no session (manifest.json) under " + data_dir.string());
  return out;
}

/// Rejects duplicate ids and objects whose trials disagree on gesture.
inline void check_manifest(const io::SessionManifest& m, const std::string& name) {
  std::map<std::string, int> gesture_of;
  std::map<std::string, std::vector<int>> indices;
  std::set<std::string> ids;
  for (const auto& t : m.trials) {
    if (!ids.insert(io::trial_id_from_file(t.trial_file)).second) {
      throw SchemaError(name, "trials.trial_file", "duplicate trial '" + t.trial_file + "'");
    }
    auto [it, fresh] = gesture_of.emplace(t.object_id, t.gesture_label);
    if (!fresh && it->second != t.gesture_label) {
      throw SchemaError(name, "trials.gesture_label",
                        "object '" + t.object_id + "' has trials with different gestures");
    }
    auto& idx = indices[t.object_id];
    if (std::find(idx.begin(), idx.end(), t.trial_index) != idx.end()) {
      throw SchemaError(name, "trials.trial_index",
                        "object '" + t.object_id + "' repeats trial_index " +
                            std::to_string(t.trial_index));
    }
    idx.push_back(t.trial_index);
  }
}

// --------------------------------------------------------------- synth ----

inline fs::path cmd_synth(const RunConfig& cfg, std::ostream& log = std::cout) {
  SynthConfig sc = cfg.synth;
  sc.seed = require_seed(cfg, "synth");
  const std::string hash = config_hash(cfg);
  const std::string prov = io::provenance_line(hash, sc.seed);
  const SynthSession session = gen_session(sc);
  const fs::path dir = cfg.data_dir / (sc.subject_id + "_" + sc.session_id);
  fs::create_directories(dir);

  io::SessionManifest m;
  m.subject_id = sc.subject_id;
  m.session_id = sc.session_id;
  m.direction = sc.session_id == "ccw" ? "ccw" : "cw";
  m.lead_in_file = "lead_in.csv";
  json truth;
  truth["config_hash"] = hash;
  truth["seed"] = sc.seed;
  truth["pre_shape_ramp"] = sc.pre_shape_ramp;
  truth["noise_sigma"] = sc.noise_sigma;
  for (const auto& t : session.trials) {
    const std::string file = t.info.trial_id + ".csv";
    io::write_text(dir / file, io::format_channels_csv(t.raw.samples, sc.sample_rate, prov));
    m.trials.push_back({file, t.info.object_id, t.info.gesture, t.info.trial_index});
    json tj;
    tj["gesture"] = t.info.gesture;
    tj["object_id"] = t.info.object_id;
    tj["breakpoints"] = t.breakpoints;
    tj["durations_s"] = {io::num9(t.durations_s[0]), io::num9(t.durations_s[1]),
                         io::num9(t.durations_s[2]), io::num9(t.durations_s[3])};
    truth["trials"][t.info.trial_id] = tj;
  }
  for (std::size_t g = 0; g < session.templates.grasp.size(); ++g) {
    json row = json::array();
    for (double v : session.templates.grasp[g]) row.push_back(io::num9(v));
    truth["templates"]["grasp"][std::to_string(g + 1)] = row;
  }
  json rest = json::array();
  for (double v : session.templates.rest) rest.push_back(io::num9(v));
  truth["templates"]["rest"] = rest;

  io::write_text(dir / "mvc.csv", io::format_channels_csv(session.mvc.samples, sc.sample_rate, prov));
  io::write_text(dir / "lead_in.csv", io::format_channels_csv(session.lead_in, sc.sample_rate, prov));
  json mj = io::to_json(m);
  mj["config_hash"] = hash;
  mj["seed"] = sc.seed;
  io::write_text(dir / "manifest.json", mj.dump(2) + "\n");
  io::write_text(dir / "ground_truth.json", truth.dump(2) + "\n");
  log << "synth: wrote " << session.trials.size() << " trials to " << dir.string() << "\n";
  return dir;
}

// ---------------------------------------------------------- preprocess ----

namespace detail {

inline fs::path envelope_dir(const RunConfig& c) { return c.out_dir / "envelopes"; }
inline fs::path segments_dir(const RunConfig& c) { return c.out_dir / "segments"; }
inline fs::path eval_dir(const RunConfig& c) { return c.out_dir / "eval"; }

inline std::string preprocess_stage_hash(const RunConfig& c) {
  json j = {{"version", kPipelineVersion}, {"pipeline", pipeline_json(c.pipeline)}};
  return io::hex64(io::fnv1a(j.dump()));
}

inline std::string segment_stage_hash(const RunConfig& c, const std::string& envelope_hash) {
  json j = {{"version", kPipelineVersion}, {"ggs", ggs_json(c.ggs)}, {"envelopes", envelope_hash}};
  return io::hex64(io::fnv1a(j.dump()));
}

inline std::string input_hash(const std::vector<fs::path>& sessions) {
  std::uint64_t h = io::fnv1a("dyngrasp-inputs");
  for (const auto& dir : sessions) {
    h = io::hash_file(dir / "manifest.json", h);
    const auto m = io::read_manifest(dir / "manifest.json");
    h = io::hash_file(dir / m.mvc_file, h);
    if (m.lead_in_file) h = io::hash_file(dir / *m.lead_in_file, h);
    for (const auto& t : m.trials) h = io::hash_file(dir / t.trial_file, h);
  }
  return io::hex64(h);
}

/// Runs fn(i) for i in [0, n) on up to `max_threads` threads (0 = hardware
/// concurrency). Each index is handled by exactly one thread; the first
/// exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn, unsigned max_threads = 0) {
  const unsigned cap = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  const auto threads = std::min<std::size_t>(n, cap);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::optional<json> read_index(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(io::read_text(p));
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

struct PreprocessResult {
  fs::path index;
  bool rebuilt = false;
};

inline PreprocessResult cmd_preprocess(const RunConfig& cfg, std::ostream& log = std::cout) {
  validate(cfg);
  const auto sessions = discover_sessions(cfg.data_dir);
  const fs::path root = detail::envelope_dir(cfg);
  const fs::path index_path = root / "index.json";
  const std::string stage = detail::preprocess_stage_hash(cfg);
  const std::string inputs = detail::input_hash(sessions);

  if (auto idx = detail::read_index(index_path)) {
    if (idx->value("version", 0) == static_cast<int>(io::kEnvelopeCacheVersion) &&
        idx->value("stage_hash", "") == stage && idx->value("input_hash", "") == inputs) {
      log << "preprocess: cache up to date (" << index_path.string() << ")\n";
      return {index_path, false};
    }
    log << "preprocess: cache stale, rebuilding\n";
  }

  json index;
  index["version"] = io::kEnvelopeCacheVersion;
  index["stage_hash"] = stage;
  index["input_hash"] = inputs;
  index["config_hash"] = config_hash(cfg);
  index["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  index["sessions"] = json::array();
  std::size_t n_trials = 0;
  for (const auto& dir : sessions) {
    const auto manifest_path = dir / "manifest.json";
    const auto m = io::read_manifest(manifest_path);
    check_manifest(m, manifest_path.string());
    MvcRecording mvc;
    mvc.samples = io::read_channels_csv(dir / m.mvc_file);
    const auto mvc_max = mvc_envelope_max(mvc, cfg.pipeline);
    for (std::size_t c = 0; c < mvc_max.size(); ++c) {
      if (!(mvc_max[c] > 0.0)) throw DegenerateMvcError(c);
    }
    const fs::path out = root / dir.filename();
    fs::create_directories(out);
    detail::parallel_for(m.trials.size(), [&](std::size_t i) {
      const auto& t = m.trials[i];
      RawTrial raw;
      raw.info.trial_id = io::trial_id_from_file(t.trial_file);
      raw.samples = io::read_channels_csv(dir / t.trial_file);
      const auto env = preprocess_trial(raw, mvc_max, cfg.pipeline);
      io::write_envelope(out / (raw.info.trial_id + ".env"), env.samples, env.sample_rate);
    });
    n_trials += m.trials.size();
    if (m.lead_in_file) {
      const auto lead = io::read_channels_csv(dir / *m.lead_in_file);
      const auto env = mvc_normalize(channel_envelopes(lead, kSampleRateHz, cfg.pipeline), mvc_max);
      io::write_envelope(out / "lead_in.env", env.samples, env.sample_rate);
    }
    json sj = io::to_json(m);
    sj["dir"] = dir.filename().string();
    sj["source"] = fs::absolute(dir).string();
    std::vector<double> norm;
    for (double v : mvc_max) norm.push_back(v);
    sj["mvc_envelope_max"] = norm;
    index["sessions"].push_back(sj);
  }
  io::write_text(index_path, index.dump(2) + "\n");
  log << "preprocess: " << n_trials << " trials -> " << root.string() << "\n";
  return {index_path, true};
}

/// Loads the envelope index, rebuilding a stale cache. A missing cache is a
/// stage-order error.
inline json require_envelopes(const RunConfig& cfg, std::ostream& log) {
  const fs::path index_path = detail::envelope_dir(cfg) / "index.json";
  if (!fs::exists(index_path)) {
    throw DataError("missing artifact " + index_path.string() + "; run `dyngrasp preprocess` first");
  }
  cmd_preprocess(cfg, log);  // no-op when current
  return json::parse(io::read_text(index_path));
}

// ------------------------------------------------------------- segment ----

inline fs::path segments_path(const RunConfig& cfg, const std::string& session_dir) {
  return detail::segments_dir(cfg) / session_dir / "segments.json";
}

inline bool segments_current(const RunConfig& cfg, const json& index) {
  const std::string stage = detail::segment_stage_hash(cfg, index.at("input_hash").get<std::string>() +
                                                                index.at("stage_hash").get<std::string>());
  for (const auto& s : index.at("sessions")) {
    const auto idx = detail::read_index(segments_path(cfg, s.at("dir").get<std::string>()));
    if (!idx || idx->value("stage_hash", "") != stage) return false;
  }
  return true;
}

inline void cmd_segment(const RunConfig& cfg, std::ostream& log = std::cout) {
  validate(cfg);
  const json index = require_envelopes(cfg, log);
  const std::string stage = detail::segment_stage_hash(cfg, index.at("input_hash").get<std::string>() +
                                                                index.at("stage_hash").get<std::string>());
  if (segments_current(cfg, index)) {
    log << "segment: segments up to date\n";
    return;
  }
  for (const auto& s : index.at("sessions")) {
    const std::string dir = s.at("dir").get<std::string>();
    json out;
    out["stage_hash"] = stage;
    out["config_hash"] = config_hash(cfg);
    out["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
    out["lambda"] = cfg.ggs.lambda;
    out["trials"] = json::object();
    const auto& trials = s.at("trials");
    std::vector<std::string> ids;
    for (const auto& t : trials) ids.push_back(io::trial_id_from_file(t.at("trial_file").get<std::string>()));
    std::vector<Segmentation> segs(ids.size());
    detail::parallel_for(ids.size(), [&](std::size_t i) {
      EnvelopeTrial env;
      env.info.trial_id = ids[i];
      env.samples = io::read_envelope(detail::envelope_dir(cfg) / dir / (ids[i] + ".env"), &env.sample_rate);
      segs[i] = ggs_segment(env, cfg.ggs);
    });
    for (std::size_t i = 0; i < ids.size(); ++i) out["trials"][ids[i]] = io::segment_json(segs[i]);
    io::write_text(segments_path(cfg, dir), out.dump(2) + "\n");
    log << "segment: " << out["trials"].size() << " trials in " << dir << "\n";
  }
}

// ---------------------------------------------------------------- eval ----

/// Envelopes + segmentations grouped by subject, with evaluation context
/// taken from each trial's predecessor on the same object (or the session
/// lead-in for the first trial, or the trial's own tail when neither exists).
inline std::vector<SubjectTrials> load_subjects(const RunConfig& cfg, const json& index,
                                                const EvalConfig& ecfg) {
  std::map<std::string, SubjectTrials> by_subject;
  for (const auto& s : index.at("sessions")) {
    const std::string dir = s.at("dir").get<std::string>();
    const auto manifest = io::parse_manifest(s, (detail::envelope_dir(cfg) / "index.json").string());
    if (!cfg.subjects.empty() &&
        std::find(cfg.subjects.begin(), cfg.subjects.end(), manifest.subject_id) == cfg.subjects.end()) {
      continue;
    }
    const fs::path seg_path = segments_path(cfg, dir);
    const json segs = json::parse(io::read_text(seg_path));

    std::map<std::string, EnvelopeTrial> envs;
    std::map<std::string, Segmentation> seg_of;
    for (const auto& t : manifest.trials) {
      const std::string id = io::trial_id_from_file(t.trial_file);
      EnvelopeTrial env;
      env.samples = io::read_envelope(detail::envelope_dir(cfg) / dir / (id + ".env"), &env.sample_rate);
      env.info = {id, manifest.subject_id, manifest.session_id, t.object_id, t.gesture_label, t.trial_index};
      if (!segs.at("trials").contains(id)) throw SchemaError(seg_path.string(), "trials." + id, "missing");
      seg_of[id] = io::segment_from_json(segs.at("trials").at(id), env.sample_rate, seg_path.string());
      if (seg_of[id].length != env.length()) {
        throw DataError(seg_path.string() + ": segmentation of '" + id + "' does not match its envelope");
      }
      envs.emplace(id, std::move(env));
    }
    std::optional<ChannelMatrix> lead;
    if (manifest.lead_in_file) lead = io::read_envelope(detail::envelope_dir(cfg) / dir / "lead_in.env");

    std::map<std::pair<std::string, int>, std::string> by_position;
    for (const auto& [id, env] : envs) by_position[{env.info.object_id, env.info.trial_index}] = id;

    auto& subject = by_subject[manifest.subject_id];
    subject.subject_id = manifest.subject_id;
    for (const auto& t : manifest.trials) {
      const std::string id = io::trial_id_from_file(t.trial_file);
      const auto& env = envs.at(id);
      ContextSpan ctx;
      auto pred = by_position.find({t.object_id, t.trial_index - 1});
      if (pred != by_position.end()) {
        ctx = tail_context(envs.at(pred->second), seg_of.at(pred->second), ecfg.context_ms);
      } else if (lead) {
        ctx = rest_context(*lead, env.sample_rate, ecfg.context_ms);
      } else {
        ctx = tail_context(env, seg_of.at(id), ecfg.context_ms);
      }
      subject.trials.push_back(prepare_trial(env, seg_of.at(id), &ctx, ecfg));
    }
  }
  std::vector<SubjectTrials> out;
  for (auto& [k, v] : by_subject) out.push_back(std::move(v));
  if (out.empty()) throw DataError("eval: no trials match the subject filter");
  return out;
}

/// Post-conditions every report must satisfy; violations are internal errors.
inline void check_report(const EvaluationReport& r) {
  for (const auto& subj : r.subjects) {
    std::map<std::string, int> seen;
    for (std::size_t f = 0; f < kFolds; ++f) {
      const auto val = subj.plan.validation(f);
      const auto tr = subj.plan.training(f);
      for (const auto& id : val) {
        ++seen[id];
        if (std::find(tr.begin(), tr.end(), id) != tr.end()) {
          throw InvariantError("fold " + std::to_string(f) + " trains and validates on " + id);
        }
      }
    }
    for (const auto& [id, n] : seen) {
      if (n != 1) throw InvariantError("trial " + id + " validated " + std::to_string(n) + " times");
    }
    for (const auto& m : subj.strategies) {
      for (const auto& f : m.folds) {
        if (f.train_rows_by_phase[static_cast<std::size_t>(Phase::Return)] != 0) {
          throw InvariantError("return-phase rows reached a training set");
        }
      }
    }
  }
  for (const auto& m : r.combined) {
    for (const auto& p : m.curves.points) {
      for (double v : {p.p_grasp, p.p_rest, p.p_top}) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvariantError("curve probability outside [0, 1]");
      }
      if (p.p_grasp + p.p_rest + p.p_top > 1.0 + 1e-9) {
        throw InvariantError("p_grasp + p_rest + p_top exceeds 1 at t = " + io::fmt9(p.t_ms));
      }
    }
    if (m.confusion) {
      for (std::size_t r0 = 0; r0 < kNumClasses; ++r0) {
        if (m.confusion->row_empty(r0)) continue;
        double s = 0.0;
        for (double v : m.confusion->rate[r0]) s += v;
        if (std::abs(s - 1.0) > 1e-9) throw InvariantError("confusion row does not sum to 1");
      }
    }
  }
}

inline EvaluationReport cmd_eval(const RunConfig& cfg, std::ostream& log = std::cout) {
  validate(cfg);
  const std::uint64_t seed = require_seed(cfg, "eval");
  const json index = require_envelopes(cfg, log);
  if (!fs::exists(segments_path(cfg, index.at("sessions").at(0).at("dir").get<std::string>()))) {
    throw DataError("missing artifact " +
                    segments_path(cfg, index.at("sessions").at(0).at("dir").get<std::string>()).string() +
                    "; run `dyngrasp segment` first");
  }
  if (!segments_current(cfg, index)) {
    log << "eval: segments stale, rebuilding\n";
    cmd_segment(cfg, log);
  }

  EvalConfig ecfg;
  ecfg.window_ms = cfg.pipeline.window_ms;
  ecfg.step_ms = cfg.pipeline.step_ms;
  ecfg.context_ms = cfg.context_ms;
  ecfg.return_early_ms = cfg.return_early_ms;
  ecfg.train = cfg.train;
  ecfg.train.seed = seed;

  const auto subjects = load_subjects(cfg, index, ecfg);
  EvaluationReport report = evaluate(subjects, cfg.strategies, ecfg);
  check_report(report);

  const std::string hash = config_hash(cfg);
  const std::string prov = io::provenance_line(hash, seed);
  const fs::path out = detail::eval_dir(cfg);
  for (const auto& m : report.combined) {
    const std::string name(strategy_name(m.strategy));
    io::write_text(out / ("curves_" + name + ".csv"), io::curves_csv(m.curves, prov));
    if (m.confusion) io::write_text(out / ("confusion_" + name + ".csv"), io::confusion_csv(*m.confusion, prov));
  }
  for (const auto& s : report.subjects) {
    for (const auto& m : s.strategies) {
      io::write_text(out / "subjects" / s.subject_id / ("curves_" + std::string(strategy_name(m.strategy)) + ".csv"),
                     io::curves_csv(m.curves, prov));
    }
  }
  io::write_text(out / "metrics.json", io::metrics_json(report, hash).dump(2) + "\n");
  log << "eval: " << report.subjects.size() << " subject(s), metrics -> " << (out / "metrics.json").string()
      << "\n";
  return report;
}

// -------------------------------------------------------------- report ----

inline std::string strategy_title(const std::string& key) {
  if (key == "reach") return "Reach + Rest";
  if (key == "grasp") return "Grasp + Rest";
  if (key == "all3") return "Reach + Grasp + Rest";
  return key;
}

inline std::string render_report(const json& metrics) {
  auto cell = [](const json& v, const char* unit = "") {
    if (v.is_null()) return std::string("n/a");
    return io::fmt9(v.get<double>()) + unit;
  };
  std::string md = "# Grasp-intent evaluation report\n\n";
  md += "- config hash: `" + metrics.value("config_hash", "") + "`\n";
  md += "- seed: " + std::to_string(metrics.value("seed", std::uint64_t{0})) + "\n\n";
  md += "## Summary\n\n";
  md += "| Training Phases | t_i (ms) | d_p | t_i flag | pre-shape accuracy |\n";
  md += "|---|---|---|---|---|\n";
  const auto& st = metrics.at("strategies");
  for (const char* key : {"reach", "grasp", "all3"}) {
    if (!st.contains(key)) continue;
    const auto& m = st.at(key);
    md += "| " + strategy_title(key) + " | " + cell(m.at("t_i_ms")) + " | " + cell(m.at("d_p")) + " | " +
          m.at("t_i_flag").get<std::string>() + " | " + cell(m.at("preshape_accuracy")) + " |\n";
  }
  md += "\n## Window accuracy by phase\n\n";
  md += "| Training Phases | reach | grasp | return | rest | return (first 200 ms) |\n";
  md += "|---|---|---|---|---|---|\n";
  for (const char* key : {"reach", "grasp", "all3"}) {
    if (!st.contains(key)) continue;
    const auto& a = st.at(key).at("phase_accuracy");
    md += "| " + strategy_title(key) + " | " + cell(a.at("reach").at("accuracy")) + " | " +
          cell(a.at("grasp").at("accuracy")) + " | " + cell(a.at("return").at("accuracy")) + " | " +
          cell(a.at("rest").at("accuracy")) + " | " + cell(a.at("return_early").at("accuracy")) + " |\n";
  }
  if (metrics.contains("subjects")) {
    md += "\n## Per subject\n\n| Subject | Training Phases | t_i (ms) | d_p |\n|---|---|---|---|\n";
    for (const auto& [sid, sj] : metrics.at("subjects").items()) {
      for (const char* key : {"reach", "grasp", "all3"}) {
        if (!sj.contains(key)) continue;
        md += "| " + sid + " | " + strategy_title(key) + " | " + cell(sj.at(key).at("t_i_ms")) + " | " +
              cell(sj.at(key).at("d_p")) + " |\n";
      }
    }
  }
  return md;
}

inline fs::path cmd_report(const RunConfig& cfg, std::ostream& log = std::cout) {
  const fs::path metrics_path = detail::eval_dir(cfg) / "metrics.json";
  if (!fs::exists(metrics_path)) {
    throw DataError("missing artifact " + metrics_path.string() + "; run `dyngrasp eval` first");
  }
  json metrics;
  try {
    metrics = json::parse(io::read_text(metrics_path));
  } catch (const json::parse_error& e) {
    throw SchemaError(metrics_path.string(), "<document>", e.what());
  }
  if (!metrics.contains("strategies")) throw SchemaError(metrics_path.string(), "strategies", "missing");
  const fs::path out = cfg.out_dir / "report.md";
  io::write_text(out, render_report(metrics));
  log << "report: " << out.string() << "\n";
  return out;
}

}  // namespace dyngrasp
