#pragma once

// Seeded synthetic reach-to-grasp sessions with known phase boundaries.
//
// Each gesture owns a grasp-phase envelope template. Reach blends from the
// rest template towards the grasp template (a linear pre-shape ramp, or a
// constant 30 % blend with the ramp off), return mirrors reach, and rest
// sits near zero. Adjacent phases are joined by a linear crossfade centred
// on the ground-truth breakpoint. The envelope trajectory plus white noise
// then amplitude-modulates a 40-500 Hz noise carrier to give a raw signal
// that exercises the full preprocessing path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "filter.hpp"
#include "random.hpp"
#include "signal_pipeline.hpp"

namespace dyngrasp {

struct SynthConfig {
  std::size_t n_gestures = 13;
  std::size_t objects_per_gesture = 4;
  std::size_t trials_per_object = 6;
  double trial_length_s = 4.0;
  double sample_rate = kSampleRateHz;
  std::size_t channels = kChannels;
  double noise_sigma = 0.03;
  bool pre_shape_ramp = true;
  std::pair<double, double> reach_s{0.8, 1.4};
  std::pair<double, double> grasp_s{1.0, 1.6};
  std::pair<double, double> return_s{0.6, 1.2};
  double min_rest_s = 0.3;
  double crossfade_ms = 50.0;
  double rest_level = 0.05;
  double template_low = 0.15;   // grasp templates are drawn per channel in
  double template_high = 0.9;   // [template_low, template_high]
  double mvc_factor = 1.25;
  double mvc_s = 3.0;
  double lead_in_s = 1.0;
  std::uint64_t seed = 0;
  std::string subject_id = "S01";
  std::string session_id = "cw";
};

inline void validate(const SynthConfig& cfg) {
  auto range_ok = [](const std::pair<double, double>& r) {
    return r.first > 0.0 && r.first <= r.second;
  };
  if (cfg.n_gestures < 1 || cfg.n_gestures > static_cast<std::size_t>(kMaxGesture)) {
    throw ConfigError("synth: n_gestures must be in 1..13");
  }
  if (cfg.objects_per_gesture < 1 || cfg.trials_per_object < 1) {
    throw ConfigError("synth: objects_per_gesture and trials_per_object must be >= 1");
  }
  if (!(cfg.noise_sigma > 0.0)) throw ConfigError("synth: noise_sigma must be > 0");
  if (!(cfg.sample_rate > 0.0) || cfg.channels < 1) {
    throw ConfigError("synth: sample_rate and channels must be positive");
  }
  if (!range_ok(cfg.reach_s) || !range_ok(cfg.grasp_s) || !range_ok(cfg.return_s)) {
    throw ConfigError("synth: phase duration ranges must satisfy 0 < min <= max");
  }
  if (cfg.reach_s.first + cfg.grasp_s.first + cfg.return_s.first + cfg.min_rest_s >
      cfg.trial_length_s) {
    throw ConfigError("synth: shortest phases plus minimum rest exceed the trial length");
  }
  if (!(cfg.min_rest_s >= 0.0) || !(cfg.crossfade_ms >= 0.0)) {
    throw ConfigError("synth: min_rest_s and crossfade_ms must be >= 0");
  }
  if (!(cfg.template_low > 0.0 && cfg.template_low < cfg.template_high)) {
    throw ConfigError("synth: need 0 < template_low < template_high");
  }
  if (!(cfg.mvc_factor > 0.0)) throw ConfigError("synth: mvc_factor must be > 0");
}

/// Pre-shape blend factor at reach time fraction s in [0, 1].
inline double reach_alpha(double s, bool ramp) { return ramp ? std::clamp(s, 0.0, 1.0) : 0.3; }

struct Templates {
  bool ramp = true;
  std::vector<double> rest;               // per channel
  std::vector<std::vector<double>> grasp; // grasp[g - 1] for gesture g

  std::vector<double> blend(int gesture, double alpha) const {
    const auto& g = grasp.at(static_cast<std::size_t>(gesture - 1));
    std::vector<double> out(rest.size());
    for (std::size_t c = 0; c < rest.size(); ++c) out[c] = (1.0 - alpha) * rest[c] + alpha * g[c];
    return out;
  }
  std::vector<double> reach_mean(int gesture, double s) const {
    return blend(gesture, reach_alpha(s, ramp));
  }
  std::vector<double> return_mean(int gesture, double s) const {
    return blend(gesture, reach_alpha(1.0 - s, ramp));
  }
  const std::vector<double>& grasp_mean(int gesture) const {
    return grasp.at(static_cast<std::size_t>(gesture - 1));
  }
};

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Grasp templates pairwise >= 4 sigma apart and >= 10 sigma from rest, so
/// that even the constant 30 % reach blend differs from rest by >= 3 sigma.
inline Templates gen_templates(const SynthConfig& cfg, Rng& rng) {
  validate(cfg);
  constexpr int kMaxAttempts = 10000;
  const double pair_sep = 4.0 * cfg.noise_sigma;
  const double rest_sep = 10.0 * cfg.noise_sigma;
  Templates t;
  t.ramp = cfg.pre_shape_ramp;
  t.rest.resize(cfg.channels);
  for (auto& v : t.rest) v = cfg.rest_level * (0.5 + rng.uniform());
  for (std::size_t g = 0; g < cfg.n_gestures; ++g) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      std::vector<double> cand(cfg.channels);
      for (auto& v : cand) v = rng.uniform(cfg.template_low, cfg.template_high);
      placed = euclidean(cand, t.rest) >= rest_sep;
      for (const auto& other : t.grasp) placed = placed && euclidean(cand, other) >= pair_sep;
      if (placed) t.grasp.push_back(std::move(cand));
    }
    if (!placed) {
      throw ConfigError("synth: cannot place " + std::to_string(cfg.n_gestures) +
                        " templates " + std::to_string(pair_sep) + " apart in " +
                        std::to_string(cfg.channels) +
                        " channels; widen [template_low, template_high] or lower noise_sigma");
    }
  }
  return t;
}

struct SynthTrial {
  TrialInfo info;
  std::vector<std::size_t> breakpoints;  // ground truth, native samples
  std::array<double, 4> durations_s{};   // reach, grasp, return, rest
  ChannelMatrix envelope;                // noisy envelope-space trajectory
  ChannelMatrix clean;                   // noiseless template trajectory
  RawTrial raw;
};

namespace detail {

// Mean of `phase` evaluated at native sample t, extrapolating the ramp
// fraction outside the phase span for use inside crossfades.
inline std::vector<double> phase_mean(const Templates& tpl, int gesture, Phase phase, double t,
                                      double begin, double end) {
  const double s = end > begin ? (t - begin) / (end - begin) : 0.0;
  switch (phase) {
    case Phase::Reach: return tpl.reach_mean(gesture, std::clamp(s, 0.0, 1.0));
    case Phase::Grasp: return tpl.grasp_mean(gesture);
    case Phase::Return: return tpl.return_mean(gesture, std::clamp(s, 0.0, 1.0));
    case Phase::Rest: return tpl.rest;
  }
  return tpl.rest;
}

/// White noise band-passed to 40-500 Hz, scaled so E|carrier| = 1.
inline ChannelMatrix noise_carrier(std::size_t channels, std::size_t n, double fs, Rng& rng) {
  const double high = std::min(500.0, 0.45 * fs);
  const auto bp = design_bandpass(std::min(40.0, high / 2.0), high, 4, fs);
  ChannelMatrix out;
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<double> w(n);
    for (auto& v : w) v = rng.normal();
    auto y = apply_filter(bp, w);
    double ss = 0.0;
    for (double v : y) ss += v * v;
    const double scale = std::sqrt(std::numbers::pi / 2.0) / std::sqrt(ss / static_cast<double>(n));
    for (auto& v : y) v *= scale;
    out.push_back(std::move(y));
  }
  return out;
}

inline ChannelMatrix modulate(const ChannelMatrix& envelope, Rng& rng, double fs) {
  const std::size_t n = sample_count(envelope);
  ChannelMatrix out = noise_carrier(envelope.size(), n, fs, rng);
  for (std::size_t c = 0; c < envelope.size(); ++c) {
    for (std::size_t t = 0; t < n; ++t) out[c][t] *= envelope[c][t];
  }
  return out;
}

}  // namespace detail

/// One trial of `gesture`. Phase durations are redrawn until rest lasts at
/// least `min_rest_s`.
inline SynthTrial gen_trial(const Templates& tpl, int gesture, const SynthConfig& cfg, Rng& rng,
                            bool with_raw = true) {
  const double fs = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(cfg.trial_length_s * fs));
  SynthTrial trial;
  double reach = 0, grasp = 0, ret = 0;
  do {
    reach = rng.uniform(cfg.reach_s.first, cfg.reach_s.second);
    grasp = rng.uniform(cfg.grasp_s.first, cfg.grasp_s.second);
    ret = rng.uniform(cfg.return_s.first, cfg.return_s.second);
  } while (cfg.trial_length_s - (reach + grasp + ret) < cfg.min_rest_s);
  trial.durations_s = {reach, grasp, ret, cfg.trial_length_s - reach - grasp - ret};
  const std::array<double, 3> edges{reach * fs, (reach + grasp) * fs, (reach + grasp + ret) * fs};
  for (double e : edges) trial.breakpoints.push_back(static_cast<std::size_t>(std::llround(e)));

  const std::array<double, 5> bounds{0.0, static_cast<double>(trial.breakpoints[0]),
                                     static_cast<double>(trial.breakpoints[1]),
                                     static_cast<double>(trial.breakpoints[2]),
                                     static_cast<double>(n)};
  const double half_fade = cfg.crossfade_ms * fs / 2000.0;

  trial.clean.assign(cfg.channels, std::vector<double>(n));
  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t);
    std::size_t k = 0;
    while (k < 3 && tt >= bounds[k + 1]) ++k;
    auto mean = detail::phase_mean(tpl, gesture, static_cast<Phase>(k), tt, bounds[k], bounds[k + 1]);
    // Crossfade with the neighbouring phase inside +-half_fade of a boundary.
    for (std::size_t b = 1; b <= 3 && half_fade > 0.0; ++b) {
      const double d = tt - bounds[b];
      if (std::abs(d) >= half_fade) continue;
      const double w = (d + half_fade) / (2.0 * half_fade);  // weight of the right phase
      const auto left = detail::phase_mean(tpl, gesture, static_cast<Phase>(b - 1), tt,
                                           bounds[b - 1], bounds[b]);
      const auto right = detail::phase_mean(tpl, gesture, static_cast<Phase>(b), tt, bounds[b],
                                            bounds[b + 1]);
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = (1.0 - w) * left[c] + w * right[c];
    }
    for (std::size_t c = 0; c < cfg.channels; ++c) trial.clean[c][t] = mean[c];
  }
  trial.envelope = trial.clean;
  for (auto& ch : trial.envelope) {
    for (auto& v : ch) v += rng.normal(0.0, cfg.noise_sigma);
  }
  trial.info.gesture = gesture;
  if (with_raw) {
    trial.raw.sample_rate = fs;
    trial.raw.samples = detail::modulate(trial.envelope, rng, fs);
  }
  return trial;
}

struct SynthSession {
  SynthConfig config;
  Templates templates;
  std::vector<SynthTrial> trials;  // object-major, trial_index ascending
  MvcRecording mvc;
  ChannelMatrix lead_in;           // raw rest recording preceding the session
};

inline std::string object_id_for(std::size_t object_number) {
  return (object_number < 10 ? "obj0" : "obj") + std::to_string(object_number);
}

/// Full session: n_gestures x objects_per_gesture objects, trials_per_object
/// trials each, plus an MVC recording and a rest lead-in.
inline SynthSession gen_session(const SynthConfig& cfg, bool with_raw = true) {
  validate(cfg);
  SynthSession s;
  s.config = cfg;
  Rng rng(derive_seed(cfg.seed, 0));
  s.templates = gen_templates(cfg, rng);

  std::size_t ordinal = 0;
  for (std::size_t g = 1; g <= cfg.n_gestures; ++g) {
    for (std::size_t o = 0; o < cfg.objects_per_gesture; ++o) {
      const std::size_t object_number = (g - 1) * cfg.objects_per_gesture + o + 1;
      for (std::size_t k = 1; k <= cfg.trials_per_object; ++k) {
        Rng trial_rng(derive_seed(cfg.seed, 100 + ordinal++));
        SynthTrial t = gen_trial(s.templates, static_cast<int>(g), cfg, trial_rng, with_raw);
        t.info.subject_id = cfg.subject_id;
        t.info.session_id = cfg.session_id;
        t.info.object_id = object_id_for(object_number);
        t.info.trial_index = static_cast<int>(k);
        t.info.trial_id = t.info.object_id + "_t" + std::to_string(k);
        t.raw.info = t.info;
        s.trials.push_back(std::move(t));
      }
    }
  }

  // MVC: constant contraction above every template level on each channel.
  Rng mvc_rng(derive_seed(cfg.seed, 1));
  const auto mvc_n = static_cast<std::size_t>(std::llround(cfg.mvc_s * cfg.sample_rate));
  ChannelMatrix mvc_env(cfg.channels, std::vector<double>(mvc_n));
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    double peak = s.templates.rest[c];
    for (const auto& g : s.templates.grasp) peak = std::max(peak, g[c]);
    for (auto& v : mvc_env[c]) v = cfg.mvc_factor * peak + mvc_rng.normal(0.0, cfg.noise_sigma);
  }
  s.mvc.sample_rate = cfg.sample_rate;
  s.mvc.samples = detail::modulate(mvc_env, mvc_rng, cfg.sample_rate);

  Rng lead_rng(derive_seed(cfg.seed, 2));
  const auto lead_n = static_cast<std::size_t>(std::llround(cfg.lead_in_s * cfg.sample_rate));
  ChannelMatrix lead_env(cfg.channels, std::vector<double>(lead_n));
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    for (auto& v : lead_env[c]) v = s.templates.rest[c] + lead_rng.normal(0.0, cfg.noise_sigma);
  }
  s.lead_in = detail::modulate(lead_env, lead_rng, cfg.sample_rate);
  return s;
}

/// Piecewise-constant mean-shift trial for segmentation checks: four
/// segments whose consecutive means differ by `separation_sigma` noise
/// standard deviations in every channel direction combined.
struct MeanShiftTrial {
  EnvelopeTrial trial;
  std::vector<std::size_t> breakpoints;
};

inline MeanShiftTrial gen_mean_shift_trial(Rng& rng, std::size_t channels, double sigma,
                                           double separation_sigma,
                                           const std::array<std::size_t, 4>& lengths,
                                           double sample_rate = kSampleRateHz) {
  MeanShiftTrial out;
  std::vector<std::vector<double>> means;
  std::vector<double> prev(channels, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> m(channels);
    if (k == 0) {
      for (auto& v : m) v = rng.uniform(0.0, 1.0);
    } else {
      // random direction, fixed step length
      std::vector<double> dir(channels);
      double norm = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < channels; ++c) {
        m[c] = prev[c] + separation_sigma * sigma * dir[c] / norm;
      }
    }
    means.push_back(m);
    prev = m;
  }
  out.trial.sample_rate = sample_rate;
  out.trial.samples.assign(channels, {});
  std::size_t pos = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    if (k > 0) out.breakpoints.push_back(pos);
    for (std::size_t t = 0; t < lengths[k]; ++t, ++pos) {
      for (std::size_t c = 0; c < channels; ++c) {
        out.trial.samples[c].push_back(means[k][c] + rng.normal(0.0, sigma));
      }
    }
  }
  out.trial.info.trial_id = "mean_shift";
  return out;
}

}  // namespace dyngrasp
