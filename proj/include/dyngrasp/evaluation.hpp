#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "annotation.hpp"
#include "constants.hpp"
#include "error.hpp"
#include "extra_trees.hpp"
#include "ggs.hpp"
#include "random.hpp"
#include "signal_pipeline.hpp"

namespace dyngrasp {

inline constexpr std::size_t kFolds = 3;
inline constexpr std::size_t kTrialsPerObject = 6;

// ---------------------------------------------------------------- folds ----

struct ObjectTrials {
  std::string object_key;
  std::vector<std::string> trial_ids;
};

/// Per object, a seeded permutation of its six trials; fold i validates on
/// permutation entries 2i and 2i+1 and trains on the other four.
struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> object_keys;
  std::vector<std::vector<std::string>> permutations;

  std::vector<std::string> validation(std::size_t fold) const {
    std::vector<std::string> out;
    for (const auto& perm : permutations) {
      out.push_back(perm[2 * fold]);
      out.push_back(perm[2 * fold + 1]);
    }
    return out;
  }

  std::vector<std::string> training(std::size_t fold) const {
    std::vector<std::string> out;
    for (const auto& perm : permutations) {
      for (std::size_t i = 0; i < perm.size(); ++i) {
        if (i / 2 != fold) out.push_back(perm[i]);
      }
    }
    return out;
  }
};

inline FoldPlan make_folds(std::vector<ObjectTrials> objects, std::uint64_t seed) {
  std::sort(objects.begin(), objects.end(),
            [](const auto& a, const auto& b) { return a.object_key < b.object_key; });
  FoldPlan plan;
  plan.seed = seed;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    auto& obj = objects[i];
    if (obj.trial_ids.size() != kTrialsPerObject) {
      throw DataError("make_folds: object '" + obj.object_key + "' has " +
                      std::to_string(obj.trial_ids.size()) + " trials, expected " +
                      std::to_string(kTrialsPerObject));
    }
    if (i > 0 && objects[i - 1].object_key == obj.object_key) {
      throw DataError("make_folds: duplicate object '" + obj.object_key + "'");
    }
    std::sort(obj.trial_ids.begin(), obj.trial_ids.end());
    Rng rng(derive_seed(seed, i));
    rng.shuffle(obj.trial_ids.begin(), obj.trial_ids.end());
    plan.object_keys.push_back(obj.object_key);
    plan.permutations.push_back(obj.trial_ids);
  }
  return plan;
}

// ------------------------------------------------------------ prepared ----

/// A segmented trial with its training windows (own samples only) and its
/// evaluation windows (with the prepended rest context).
struct PreparedTrial {
  TrialInfo info;
  std::string object_key;
  Segmentation segmentation;
  std::vector<LabeledWindow> train_windows;
  std::vector<LabeledWindow> eval_windows;
};

struct EvalConfig {
  double window_ms = 320.0;
  double step_ms = 40.0;
  double context_ms = 700.0;
  double return_early_ms = 200.0;
  TrainConfig train;
};

inline PreparedTrial prepare_trial(const EnvelopeTrial& trial, const Segmentation& seg,
                                   const ContextSpan* context, const EvalConfig& cfg) {
  PreparedTrial p;
  p.info = trial.info;
  p.object_key = trial.info.session_id + "/" + trial.info.object_id;
  p.segmentation = seg;
  p.train_windows = label_windows(trial, seg, trial.info.gesture, cfg.window_ms, cfg.step_ms);
  p.eval_windows =
      label_windows(trial, seg, trial.info.gesture, cfg.window_ms, cfg.step_ms, context);
  return p;
}

// ------------------------------------------------------------ strategy ----

struct WindowPrediction {
  double time_offset_ms = 0.0;
  double phase_elapsed_ms = 0.0;
  Phase phase = Phase::Rest;
  int label = 0;
  bool from_context = false;
  Probabilities proba{};
  int predicted = 0;
};

struct TrialSeries {
  std::string trial_id;
  int gesture = 0;
  std::optional<double> grasp_onset_ms;  // b1
  std::vector<WindowPrediction> windows;
};

struct FoldStats {
  std::size_t train_trials = 0;
  std::size_t validation_trials = 0;
  std::size_t train_rows = 0;
  std::array<std::size_t, 4> train_rows_by_phase{};
};

struct StrategyRun {
  TrainingStrategy strategy = TrainingStrategy::ReachGraspRest;
  std::vector<TrialSeries> series;
  std::vector<FoldStats> folds;
};

/// Trains one model per fold on the strategy's phases and predicts every
/// evaluation window of that fold's validation trials.
inline StrategyRun run_strategy(const std::vector<PreparedTrial>& trials, TrainingStrategy strategy,
                                const FoldPlan& plan, const EvalConfig& cfg) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!index.emplace(trials[i].info.trial_id, i).second) {
      throw DataError("run_strategy: duplicate trial id '" + trials[i].info.trial_id + "'");
    }
  }
  auto lookup = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("run_strategy: fold references unknown trial '" + id + "'");
    return it->second;
  };

  StrategyRun run;
  run.strategy = strategy;
  for (std::size_t fold = 0; fold < kFolds; ++fold) {
    std::vector<std::size_t> train_idx;
    for (const auto& id : plan.training(fold)) train_idx.push_back(lookup(id));
    std::sort(train_idx.begin(), train_idx.end());

    std::vector<LabeledWindow> pool;
    for (auto i : train_idx) {
      pool.insert(pool.end(), trials[i].train_windows.begin(), trials[i].train_windows.end());
    }
    const TrainingSet ts = build_training_set(pool, strategy);
    FoldStats stats;
    stats.train_trials = train_idx.size();
    stats.train_rows = ts.size();
    for (const auto& w : pool) {
      if (strategy_keeps(strategy, w.phase)) ++stats.train_rows_by_phase[static_cast<std::size_t>(w.phase)];
    }

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, fold);
    const ExtraTreesModel model = train(ts.x, ts.y, tc);

    const auto validation = plan.validation(fold);
    stats.validation_trials = validation.size();
    for (const auto& id : validation) {
      const auto& t = trials[lookup(id)];
      TrialSeries s;
      s.trial_id = t.info.trial_id;
      s.gesture = t.info.gesture;
      s.grasp_onset_ms = t.segmentation.breakpoint_ms(0);
      for (const auto& w : t.eval_windows) {
        WindowPrediction wp;
        wp.time_offset_ms = w.time_offset_ms;
        wp.phase_elapsed_ms = w.phase_elapsed_ms;
        wp.phase = w.phase;
        wp.label = w.label;
        wp.from_context = w.from_context;
        wp.proba = model.predict_proba(w.features.values);
        wp.predicted = ExtraTreesModel::argmax(wp.proba);
        s.windows.push_back(wp);
      }
      run.series.push_back(std::move(s));
    }
    run.folds.push_back(stats);
  }
  return run;
}

// -------------------------------------------------------------- curves ----

struct CurvePoint {
  double t_ms = 0.0;
  double p_grasp = 0.0;
  double p_rest = 0.0;
  double p_top = 0.0;
  double acc_grasp = std::numeric_limits<double>::quiet_NaN();  // NaN: no motion windows
  double acc_rest = std::numeric_limits<double>::quiet_NaN();   // NaN: no rest windows
  std::size_t n_trials = 0;
};

struct EvalCurves {
  double step_ms = 40.0;
  std::vector<CurvePoint> points;  // ascending t_ms, empty slots omitted
};

inline long grid_slot(double time_offset_ms, double step_ms) {
  return static_cast<long>(std::llround(time_offset_ms / step_ms));
}

/// Largest probability among labels other than rest and `gesture`.
inline double top_competitor(const Probabilities& p, int gesture) {
  double best = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (static_cast<int>(k) == kRestLabel || static_cast<int>(k) == gesture) continue;
    best = std::max(best, p[k]);
  }
  return best;
}

inline EvalCurves align_and_average(const std::vector<TrialSeries>& series, double step_ms = 40.0) {
  struct Slot {
    double p_grasp = 0, p_rest = 0, p_top = 0;
    std::size_t trials = 0;
    std::size_t motion = 0, motion_hit = 0, rest = 0, rest_hit = 0;
  };
  std::map<long, Slot> slots;
  for (const auto& s : series) {
    if (!s.grasp_onset_ms) throw DataError("align_and_average: trial '" + s.trial_id + "' has no b1");
    // Per-trial mean within each slot first, so every trial weighs equally.
    std::map<long, std::array<double, 4>> own;  // p_grasp, p_rest, p_top, count
    for (const auto& w : s.windows) {
      const long k = grid_slot(w.time_offset_ms, step_ms);
      auto& acc = own[k];
      acc[0] += w.proba[static_cast<std::size_t>(s.gesture)];
      acc[1] += w.proba[kRestLabel];
      acc[2] += top_competitor(w.proba, s.gesture);
      acc[3] += 1.0;
      auto& slot = slots[k];
      if (is_motion(w.phase)) {
        ++slot.motion;
        if (w.predicted == s.gesture) ++slot.motion_hit;
      } else {
        ++slot.rest;
        if (w.predicted == kRestLabel) ++slot.rest_hit;
      }
    }
    for (const auto& [k, acc] : own) {
      auto& slot = slots[k];
      slot.p_grasp += acc[0] / acc[3];
      slot.p_rest += acc[1] / acc[3];
      slot.p_top += acc[2] / acc[3];
      ++slot.trials;
    }
  }
  EvalCurves curves;
  curves.step_ms = step_ms;
  for (const auto& [k, slot] : slots) {
    if (slot.trials == 0) continue;
    CurvePoint p;
    p.t_ms = static_cast<double>(k) * step_ms;
    const double n = static_cast<double>(slot.trials);
    p.p_grasp = slot.p_grasp / n;
    p.p_rest = slot.p_rest / n;
    p.p_top = slot.p_top / n;
    if (slot.motion) p.acc_grasp = static_cast<double>(slot.motion_hit) / static_cast<double>(slot.motion);
    if (slot.rest) p.acc_rest = static_cast<double>(slot.rest_hit) / static_cast<double>(slot.rest);
    p.n_trials = slot.trials;
    curves.points.push_back(p);
  }
  return curves;
}

/// Unweighted mean of per-subject curves, slot by slot. Accuracies average
/// over the subjects that define them; n_trials is summed.
inline EvalCurves average_curves(const std::vector<EvalCurves>& per_subject) {
  if (per_subject.empty()) throw DataError("average_curves: no curves");
  struct Acc {
    double g = 0, r = 0, t = 0, ag = 0, ar = 0;
    std::size_t n = 0, nag = 0, nar = 0, trials = 0;
  };
  std::map<long, Acc> slots;
  const double step = per_subject.front().step_ms;
  for (const auto& c : per_subject) {
    for (const auto& p : c.points) {
      auto& a = slots[grid_slot(p.t_ms, step)];
      a.g += p.p_grasp;
      a.r += p.p_rest;
      a.t += p.p_top;
      ++a.n;
      a.trials += p.n_trials;
      if (!std::isnan(p.acc_grasp)) { a.ag += p.acc_grasp; ++a.nag; }
      if (!std::isnan(p.acc_rest)) { a.ar += p.acc_rest; ++a.nar; }
    }
  }
  EvalCurves out;
  out.step_ms = step;
  for (const auto& [k, a] : slots) {
    CurvePoint p;
    p.t_ms = static_cast<double>(k) * step;
    p.p_grasp = a.g / static_cast<double>(a.n);
    p.p_rest = a.r / static_cast<double>(a.n);
    p.p_top = a.t / static_cast<double>(a.n);
    if (a.nag) p.acc_grasp = a.ag / static_cast<double>(a.nag);
    if (a.nar) p.acc_rest = a.ar / static_cast<double>(a.nar);
    p.n_trials = a.trials;
    out.points.push_back(p);
  }
  return out;
}

// ------------------------------------------------------------- metrics ----

enum class CrossingFlag { Crossing, Saturated, None };

inline constexpr std::string_view crossing_flag_name(CrossingFlag f) {
  switch (f) {
    case CrossingFlag::Crossing: return "crossing";
    case CrossingFlag::Saturated: return "saturated";
    case CrossingFlag::None: return "none";
  }
  return "?";
}

struct IntersectionTime {
  std::optional<double> t_ms;
  CrossingFlag flag = CrossingFlag::None;
};

/// Latest upward crossing of p_grasp over p_rest at or before t = 0,
/// linearly interpolated between adjacent curve points.
inline IntersectionTime compute_t_i(const EvalCurves& curves) {
  const auto& pts = curves.points;
  if (pts.empty()) throw DataError("compute_t_i: empty curves");
  std::size_t end = 0;  // one past the last point with t <= 0
  while (end < pts.size() && pts[end].t_ms <= 0.0) ++end;
  if (end == 0) throw DataError("compute_t_i: curves start after t = 0");

  auto diff = [&](std::size_t i) { return pts[i].p_grasp - pts[i].p_rest; };
  for (std::size_t k = end - 1; k-- > 0;) {
    if (diff(k) < 0.0 && diff(k + 1) >= 0.0) {
      const double frac = -diff(k) / (diff(k + 1) - diff(k));
      return {pts[k].t_ms + frac * (pts[k + 1].t_ms - pts[k].t_ms), CrossingFlag::Crossing};
    }
  }
  bool all_above = true;
  for (std::size_t i = 0; i < end; ++i) {
    if (pts[i].t_ms < 0.0 && diff(i) < 0.0) all_above = false;
  }
  if (all_above) return {pts.front().t_ms, CrossingFlag::Saturated};
  return {std::nullopt, CrossingFlag::None};
}

struct PeakMargin {
  double d_p = 0.0;
  double t_peak_ms = 0.0;
};

/// Margin between the p_grasp peak (earliest on ties) and p_top at that slot.
inline PeakMargin compute_d_p(const EvalCurves& curves) {
  if (curves.points.empty()) throw DataError("compute_d_p: empty curves");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curves.points.size(); ++i) {
    if (curves.points[i].p_grasp > curves.points[best].p_grasp) best = i;
  }
  const auto& p = curves.points[best];
  return {p.p_grasp - p.p_top, p.t_ms};
}

struct ConfusionMatrix {
  std::array<std::array<double, kNumClasses>, kNumClasses> rate{};  // row-normalized
  std::array<std::size_t, kNumClasses> support{};                    // windows per true class
  double lo_ms = 0.0;
  double hi_ms = 0.0;

  bool row_empty(std::size_t r) const { return support[r] == 0; }

  /// Support-weighted accuracy over non-empty rows.
  double mean_accuracy() const {
    double hit = 0.0;
    std::size_t total = 0;
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      hit += rate[r][r] * static_cast<double>(support[r]);
      total += support[r];
    }
    return total ? hit / static_cast<double>(total) : std::numeric_limits<double>::quiet_NaN();
  }
};

/// Rows are the trial's gesture, columns the argmax prediction, over windows
/// whose grid time lies in [lo_ms, hi_ms].
inline ConfusionMatrix confusion_matrix(const std::vector<TrialSeries>& series, double lo_ms,
                                        double hi_ms, double step_ms = 40.0) {
  if (!(lo_ms <= hi_ms)) {
    throw DataError("confusion_matrix: empty interval [" + std::to_string(lo_ms) + ", " +
                    std::to_string(hi_ms) + "]");
  }
  ConfusionMatrix cm;
  cm.lo_ms = lo_ms;
  cm.hi_ms = hi_ms;
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};
  for (const auto& s : series) {
    for (const auto& w : s.windows) {
      const double t = static_cast<double>(grid_slot(w.time_offset_ms, step_ms)) * step_ms;
      if (t < lo_ms || t > hi_ms) continue;
      ++counts[static_cast<std::size_t>(s.gesture)][static_cast<std::size_t>(w.predicted)];
      ++cm.support[static_cast<std::size_t>(s.gesture)];
    }
  }
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    if (cm.support[r] == 0) continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      cm.rate[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(cm.support[r]);
    }
  }
  return cm;
}

struct HitRate {
  std::size_t hits = 0;
  std::size_t total = 0;

  double rate() const {
    return total ? static_cast<double>(hits) / static_cast<double>(total)
                 : std::numeric_limits<double>::quiet_NaN();
  }
  void add(bool hit) {
    ++total;
    if (hit) ++hits;
  }
};

/// Window-level accuracy by phase. Motion phases count a hit when the argmax
/// is the trial gesture; rest counts a hit on the rest label.
struct PhaseAccuracy {
  std::array<HitRate, 4> by_phase{};
  HitRate return_early;  // first `return_early_ms` of the return phase
};

inline PhaseAccuracy phase_accuracy(const std::vector<TrialSeries>& series,
                                    double return_early_ms = 200.0) {
  PhaseAccuracy acc;
  for (const auto& s : series) {
    for (const auto& w : s.windows) {
      const bool hit = is_motion(w.phase) ? w.predicted == s.gesture : w.predicted == kRestLabel;
      acc.by_phase[static_cast<std::size_t>(w.phase)].add(hit);
      if (w.phase == Phase::Return && !w.from_context && w.phase_elapsed_ms <= return_early_ms) {
        acc.return_early.add(hit);
      }
    }
  }
  return acc;
}

// -------------------------------------------------------------- report ----

struct StrategyMetrics {
  TrainingStrategy strategy = TrainingStrategy::ReachGraspRest;
  EvalCurves curves;
  IntersectionTime t_i;
  PeakMargin d_p;
  PhaseAccuracy accuracy;
  std::optional<ConfusionMatrix> confusion;  // absent when no crossing exists
  std::vector<FoldStats> folds;
};

inline StrategyMetrics summarize(TrainingStrategy strategy, const EvalCurves& curves,
                                 const std::vector<TrialSeries>& series, const EvalConfig& cfg) {
  StrategyMetrics m;
  m.strategy = strategy;
  m.curves = curves;
  m.t_i = compute_t_i(curves);
  m.d_p = compute_d_p(curves);
  m.accuracy = phase_accuracy(series, cfg.return_early_ms);
  if (m.t_i.t_ms) m.confusion = confusion_matrix(series, *m.t_i.t_ms, 0.0, cfg.step_ms);
  return m;
}

struct SubjectTrials {
  std::string subject_id;
  std::vector<PreparedTrial> trials;
};

struct SubjectResult {
  std::string subject_id;
  FoldPlan plan;
  std::vector<StrategyMetrics> strategies;
  std::vector<StrategyRun> runs;
};

struct EvaluationReport {
  std::uint64_t seed = 0;
  std::vector<StrategyMetrics> combined;
  std::vector<SubjectResult> subjects;
};

inline FoldPlan plan_for(const std::vector<PreparedTrial>& trials, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_object;
  for (const auto& t : trials) by_object[t.object_key].push_back(t.info.trial_id);
  std::vector<ObjectTrials> objects;
  for (auto& [k, ids] : by_object) objects.push_back({k, ids});
  return make_folds(std::move(objects), seed);
}

/// Intra-subject evaluation of every strategy, then the cross-subject mean of
/// curves, from which the combined metrics are extracted.
inline EvaluationReport evaluate(const std::vector<SubjectTrials>& subjects,
                                 const std::vector<TrainingStrategy>& strategies,
                                 const EvalConfig& cfg) {
  if (subjects.empty()) throw DataError("evaluate: no subjects");
  if (strategies.empty()) throw ConfigError("evaluate: no strategies");
  EvaluationReport report;
  report.seed = cfg.train.seed;
  std::map<TrainingStrategy, std::vector<EvalCurves>> curves_by_strategy;
  std::map<TrainingStrategy, std::vector<TrialSeries>> series_by_strategy;
  for (std::size_t si = 0; si < subjects.size(); ++si) {
    const auto& subj = subjects[si];
    SubjectResult result;
    result.subject_id = subj.subject_id;
    // One plan per subject, shared by all strategies.
    result.plan = plan_for(subj.trials, derive_seed(cfg.train.seed, 1000 + si));
    for (auto strategy : strategies) {
      StrategyRun run = run_strategy(subj.trials, strategy, result.plan, cfg);
      EvalCurves curves = align_and_average(run.series, cfg.step_ms);
      StrategyMetrics m = summarize(strategy, curves, run.series, cfg);
      m.folds = run.folds;
      curves_by_strategy[strategy].push_back(curves);
      auto& pooled = series_by_strategy[strategy];
      pooled.insert(pooled.end(), run.series.begin(), run.series.end());
      result.strategies.push_back(std::move(m));
      result.runs.push_back(std::move(run));
    }
    report.subjects.push_back(std::move(result));
  }
  for (auto strategy : strategies) {
    const EvalCurves combined = average_curves(curves_by_strategy[strategy]);
    StrategyMetrics m = summarize(strategy, combined, series_by_strategy[strategy], cfg);
    for (const auto& subj : report.subjects) {
      for (const auto& sm : subj.strategies) {
        if (sm.strategy == strategy) m.folds.insert(m.folds.end(), sm.folds.begin(), sm.folds.end());
      }
    }
    report.combined.push_back(std::move(m));
  }
  return report;
}

}  // namespace dyngrasp
