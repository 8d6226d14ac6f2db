#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "features.hpp"
#include "ggs.hpp"
#include "signal_pipeline.hpp"

namespace dyngrasp {

struct LabeledWindow {
  FeatureVector features;
  int label = 0;
  Phase phase = Phase::Rest;
  int gesture = 0;               // gesture of the trial the window belongs to
  double time_offset_ms = 0.0;   // window end minus grasp onset (b1)
  double phase_elapsed_ms = 0.0; // window end minus the start of its phase
  bool from_context = false;     // last sample lies in prepended context
  std::string trial_id;
};

enum class TrainingStrategy { ReachRest, GraspRest, ReachGraspRest };

inline constexpr std::string_view strategy_name(TrainingStrategy s) {
  switch (s) {
    case TrainingStrategy::ReachRest: return "reach";
    case TrainingStrategy::GraspRest: return "grasp";
    case TrainingStrategy::ReachGraspRest: return "all3";
  }
  return "?";
}

inline TrainingStrategy parse_strategy(std::string_view s) {
  if (s == "reach") return TrainingStrategy::ReachRest;
  if (s == "grasp") return TrainingStrategy::GraspRest;
  if (s == "all3") return TrainingStrategy::ReachGraspRest;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected reach|grasp|all3)");
}

/// Whether a phase contributes training rows under a strategy. Return never does.
inline bool strategy_keeps(TrainingStrategy s, Phase p) {
  switch (p) {
    case Phase::Rest: return true;
    case Phase::Return: return false;
    case Phase::Reach: return s != TrainingStrategy::GraspRest;
    case Phase::Grasp: return s != TrainingStrategy::ReachRest;
  }
  return false;
}

inline int label_for(Phase phase, int gesture) {
  return phase == Phase::Rest ? kRestLabel : gesture;
}

/// Samples prepended to a trial during evaluation, each with a known phase.
/// Usually the tail of the predecessor trial.
struct ContextSpan {
  ChannelMatrix samples;
  std::vector<Phase> phases;
  int gesture = 0;

  std::size_t length() const { return sample_count(samples); }
};

/// Last `context_ms` of a segmented trial.
inline ContextSpan tail_context(const EnvelopeTrial& trial, const Segmentation& seg,
                                double context_ms) {
  const std::size_t n = trial.length();
  const std::size_t p = std::min(n, window_length(context_ms, trial.sample_rate));
  ContextSpan ctx;
  ctx.gesture = trial.info.gesture;
  for (const auto& ch : trial.samples) ctx.samples.emplace_back(ch.end() - static_cast<std::ptrdiff_t>(p), ch.end());
  for (std::size_t t = n - p; t < n; ++t) ctx.phases.push_back(seg.phase_at(t));
  return ctx;
}

/// Final `context_ms` of a rest recording, all tagged rest.
inline ContextSpan rest_context(const ChannelMatrix& rest, double sample_rate, double context_ms) {
  const std::size_t p = std::min(sample_count(rest), window_length(context_ms, sample_rate));
  ContextSpan ctx;
  for (const auto& ch : rest) {
    ctx.samples.emplace_back(ch.end() - static_cast<std::ptrdiff_t>(p), ch.end());
  }
  ctx.phases.assign(p, Phase::Rest);
  return ctx;
}

/// Windows the trial (optionally preceded by context) and tags each window
/// with the phase of its last sample.
inline std::vector<LabeledWindow> label_windows(const EnvelopeTrial& trial, const Segmentation& seg,
                                                int gesture, double window_ms = 320.0,
                                                double step_ms = 40.0,
                                                const ContextSpan* context = nullptr) {
  if (gesture < 1 || gesture > kMaxGesture) {
    throw DataError("label_windows: gesture " + std::to_string(gesture) + " outside 1.." +
                    std::to_string(kMaxGesture));
  }
  if (seg.breakpoints.size() != 3) {
    throw DataError("label_windows: segmentation must have exactly 3 breakpoints");
  }
  if (seg.length != trial.length()) {
    throw DataError("label_windows: segmentation length " + std::to_string(seg.length) +
                    " does not match trial '" + trial.info.trial_id + "' (" +
                    std::to_string(trial.length()) + ")");
  }

  const std::size_t p = context ? context->length() : 0;
  const EnvelopeTrial* source = &trial;
  EnvelopeTrial joined;
  if (p > 0) {
    if (context->samples.size() != trial.channels() || context->phases.size() != p) {
      throw DataError("label_windows: context shape does not match trial");
    }
    joined.info = trial.info;
    joined.sample_rate = trial.sample_rate;
    joined.samples = context->samples;
    for (std::size_t c = 0; c < trial.channels(); ++c) {
      joined.samples[c].insert(joined.samples[c].end(), trial.samples[c].begin(),
                               trial.samples[c].end());
    }
    source = &joined;
  }

  const double fs = trial.sample_rate;
  const auto b = [&](std::size_t i) { return static_cast<double>(seg.b(i)); };
  std::vector<LabeledWindow> out;
  for (const auto& w : window_iter(*source, window_ms, step_ms)) {
    LabeledWindow lw;
    lw.features = extract_features(w);
    lw.trial_id = trial.info.trial_id;
    lw.gesture = gesture;
    const std::size_t last = w.last_sample();
    // window end (exclusive) in trial coordinates, in samples
    const double end = static_cast<double>(w.start + w.length) - static_cast<double>(p);
    lw.time_offset_ms = samples_to_ms(end - b(0), fs);
    lw.features.end_time_ms = samples_to_ms(end, fs);
    if (last < p) {
      lw.from_context = true;
      lw.phase = context->phases[last];
      lw.label = lw.phase == Phase::Rest ? kRestLabel : context->gesture;
      lw.phase_elapsed_ms = std::nan("");
    } else {
      const std::size_t t = last - p;
      lw.phase = seg.phase_at(t);
      lw.label = label_for(lw.phase, gesture);
      const double phase_start =
          lw.phase == Phase::Reach ? 0.0 : b(static_cast<std::size_t>(lw.phase) - 1);
      lw.phase_elapsed_ms = samples_to_ms(end - phase_start, fs);
    }
    out.push_back(std::move(lw));
  }
  return out;
}

struct TrainingSet {
  std::vector<FeatureArray> x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

/// Keeps the phases the strategy trains on, preserving input order.
inline TrainingSet build_training_set(const std::vector<LabeledWindow>& windows,
                                      TrainingStrategy strategy) {
  if (windows.empty()) throw DataError("build_training_set: no windows");
  TrainingSet out;
  for (const auto& w : windows) {
    if (!strategy_keeps(strategy, w.phase)) continue;
    out.x.push_back(w.features.values);
    out.y.push_back(w.label);
  }
  if (out.y.empty()) {
    throw DataError("build_training_set: strategy '" + std::string(strategy_name(strategy)) +
                    "' left no rows");
  }
  return out;
}

}  // namespace dyngrasp
