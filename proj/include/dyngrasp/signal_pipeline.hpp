#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "filter.hpp"

namespace dyngrasp {

/// channels x samples, row-major by channel.
using ChannelMatrix = std::vector<std::vector<double>>;

inline std::size_t sample_count(const ChannelMatrix& m) {
  return m.empty() ? 0 : m.front().size();
}

struct TrialInfo {
  std::string trial_id;
  std::string subject_id;
  std::string session_id;
  std::string object_id;
  int gesture = 0;      // 1..13
  int trial_index = 0;  // 1..6 within its object
};

struct RawTrial {
  TrialInfo info;
  double sample_rate = kSampleRateHz;
  ChannelMatrix samples;  // millivolts

  std::size_t length() const { return sample_count(samples); }
};

/// Maximal isometric contraction recording, one per session.
struct MvcRecording {
  double sample_rate = kSampleRateHz;
  ChannelMatrix samples;
};

/// MVC-normalized envelope. Values are >= 0 and may exceed 1.
struct EnvelopeTrial {
  TrialInfo info;
  double sample_rate = kSampleRateHz;
  ChannelMatrix samples;

  std::size_t channels() const { return samples.size(); }
  std::size_t length() const { return sample_count(samples); }
};

struct WindowView {
  const EnvelopeTrial* trial = nullptr;
  std::size_t start = 0;
  std::size_t length = 0;
  double end_time_ms = 0.0;  // (start + length) in ms from the trial start

  std::size_t last_sample() const { return start + length - 1; }
};

struct PipelineConfig {
  double band_low_hz = 40.0;
  double band_high_hz = 500.0;
  int band_order = 4;
  double envelope_cutoff_hz = 6.0;
  int envelope_order = 2;
  double window_ms = 320.0;
  double step_ms = 40.0;
};

/// Checks shape and finiteness of a multichannel recording.
inline void validate_matrix(const ChannelMatrix& m, std::size_t expected_channels,
                            const std::string& what) {
  if (m.size() != expected_channels) {
    throw DataError(what + ": expected " + std::to_string(expected_channels) +
                    " channels, got " + std::to_string(m.size()));
  }
  const std::size_t n = sample_count(m);
  if (n == 0) throw DataError(what + ": no samples");
  for (std::size_t c = 0; c < m.size(); ++c) {
    if (m[c].size() != n) throw DataError(what + ": ragged channel " + std::to_string(c + 1));
    for (std::size_t t = 0; t < n; ++t) {
      if (!std::isfinite(m[c][t])) {
        throw DataError(what + ": non-finite sample at channel " + std::to_string(c + 1) +
                        ", index " + std::to_string(t));
      }
    }
  }
}

inline void validate(const RawTrial& raw) {
  if (!(raw.sample_rate > 0.0)) throw DataError(raw.info.trial_id + ": sample rate must be > 0");
  validate_matrix(raw.samples, kChannels, raw.info.trial_id);
}

/// Full-wave rectification followed by a causal Butterworth low-pass.
/// Negative ringing from the low-pass is clamped to zero.
inline std::vector<double> envelope(std::span<const double> signal, double lp_cutoff_hz,
                                    double sample_rate, int lp_order = 2) {
  const auto lp = design_lowpass(lp_cutoff_hz, lp_order, sample_rate);
  std::vector<double> rect(signal.size());
  std::transform(signal.begin(), signal.end(), rect.begin(),
                 [](double v) { return std::abs(v); });
  auto out = apply_filter(lp, rect);
  for (double& v : out) v = std::max(v, 0.0);
  return out;
}

/// Band-pass + envelope on every channel.
inline ChannelMatrix channel_envelopes(const ChannelMatrix& raw, double sample_rate,
                                       const PipelineConfig& cfg) {
  const auto bp = design_bandpass(cfg.band_low_hz, cfg.band_high_hz, cfg.band_order, sample_rate);
  ChannelMatrix out;
  out.reserve(raw.size());
  for (const auto& ch : raw) {
    const auto filtered = apply_filter(bp, ch);
    out.push_back(envelope(filtered, cfg.envelope_cutoff_hz, sample_rate, cfg.envelope_order));
  }
  return out;
}

/// Per-channel maximum of the MVC envelope over the full recording.
inline std::vector<double> mvc_envelope_max(const MvcRecording& mvc, const PipelineConfig& cfg) {
  validate_matrix(mvc.samples, mvc.samples.size(), "MVC recording");
  const auto env = channel_envelopes(mvc.samples, mvc.sample_rate, cfg);
  std::vector<double> maxima;
  maxima.reserve(env.size());
  for (const auto& ch : env) maxima.push_back(*std::max_element(ch.begin(), ch.end()));
  return maxima;
}

inline EnvelopeTrial mvc_normalize(const ChannelMatrix& env, std::span<const double> mvc_env_max,
                                   double sample_rate = kSampleRateHz) {
  if (mvc_env_max.size() != env.size()) {
    throw DataError("mvc_normalize: " + std::to_string(mvc_env_max.size()) +
                    " normalizers for " + std::to_string(env.size()) + " channels");
  }
  for (std::size_t c = 0; c < mvc_env_max.size(); ++c) {
    if (!(mvc_env_max[c] > 0.0) || !std::isfinite(mvc_env_max[c])) throw DegenerateMvcError(c);
  }
  EnvelopeTrial out;
  out.sample_rate = sample_rate;
  out.samples = env;
  for (std::size_t c = 0; c < env.size(); ++c) {
    for (double& v : out.samples[c]) v /= mvc_env_max[c];
  }
  return out;
}

/// Raw trial -> normalized envelope trial.
inline EnvelopeTrial preprocess_trial(const RawTrial& raw, std::span<const double> mvc_env_max,
                                      const PipelineConfig& cfg) {
  validate(raw);
  auto out = mvc_normalize(channel_envelopes(raw.samples, raw.sample_rate, cfg), mvc_env_max,
                           raw.sample_rate);
  out.info = raw.info;
  return out;
}

inline std::size_t window_length(double window_ms, double sample_rate) {
  return static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
}

/// Sliding windows; window i starts at round(i * step_ms * fs / 1000), so a
/// fractional step (62.5 samples at 40 ms) keeps its exact average cadence.
inline std::vector<WindowView> window_iter(const EnvelopeTrial& trial, double window_ms = 320.0,
                                           double step_ms = 40.0) {
  if (!(window_ms > 0.0) || !(step_ms > 0.0)) {
    throw ConfigError("window_iter: window_ms and step_ms must be > 0");
  }
  const double fs = trial.sample_rate;
  const std::size_t len = window_length(window_ms, fs);
  const std::size_t n = trial.length();
  std::vector<WindowView> out;
  if (len == 0 || n < len) return out;
  const double step = step_ms * fs / 1000.0;
  for (std::size_t i = 0;; ++i) {
    const auto start = static_cast<std::size_t>(std::llround(static_cast<double>(i) * step));
    if (start + len > n) break;
    out.push_back({&trial, start, len, samples_to_ms(static_cast<double>(start + len), fs)});
  }
  return out;
}

}  // namespace dyngrasp
