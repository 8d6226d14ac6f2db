#pragma once

#include <array>
#include <cmath>
#include <string>

#include "constants.hpp"
#include "error.hpp"
#include "signal_pipeline.hpp"

namespace dyngrasp {

/// Layout: [RMS ch1..ch12, MAV ch1..ch12, VAR ch1..ch12].
using FeatureArray = std::array<double, kNumFeatures>;

inline constexpr const char* kFeatureOrder = "rms[0..11],mav[0..11],var[0..11]";

struct FeatureVector {
  FeatureArray values{};
  double end_time_ms = 0.0;
  std::string trial_id;

  double rms(std::size_t c) const { return values[c]; }
  double mav(std::size_t c) const { return values[kChannels + c]; }
  double var(std::size_t c) const { return values[2 * kChannels + c]; }
};

/// RMS, MAV and population variance per channel over one window.
inline FeatureVector extract_features(const WindowView& window) {
  if (window.trial == nullptr) throw DataError("extract_features: window has no trial");
  if (window.length < 2) {
    throw DataError("extract_features: window length " + std::to_string(window.length) +
                    " < 2");
  }
  const auto& samples = window.trial->samples;
  if (samples.size() != kChannels) {
    throw DataError("extract_features: expected " + std::to_string(kChannels) + " channels");
  }
  if (window.start + window.length > window.trial->length()) {
    throw DataError("extract_features: window exceeds trial");
  }

  FeatureVector fv;
  fv.end_time_ms = window.end_time_ms;
  fv.trial_id = window.trial->info.trial_id;
  const double inv_t = 1.0 / static_cast<double>(window.length);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double* x = samples[c].data() + window.start;
    double sum = 0.0, sum_abs = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < window.length; ++i) {
      sum += x[i];
      sum_abs += std::abs(x[i]);
      sum_sq += x[i] * x[i];
    }
    const double mean = sum * inv_t;
    // Second pass: mean(x^2) - mean^2 cancels badly on near-constant windows.
    double dev_sq = 0.0;
    for (std::size_t i = 0; i < window.length; ++i) dev_sq += (x[i] - mean) * (x[i] - mean);
    fv.values[c] = std::sqrt(sum_sq * inv_t);
    fv.values[kChannels + c] = sum_abs * inv_t;
    fv.values[2 * kChannels + c] = dev_sq * inv_t;
  }
  return fv;
}

}  // namespace dyngrasp
