#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "dyngrasp/random.hpp"
#include "dyngrasp/signal_pipeline.hpp"

using namespace dyngrasp;

namespace {

EnvelopeTrial flat_trial(std::size_t n, double value = 0.1) {
  EnvelopeTrial t;
  t.samples.assign(kChannels, std::vector<double>(n, value));
  return t;
}

}  // namespace

TEST(Envelope, ConstantConvergesWithinFiveTimeConstants) {
  // Critically damped-ish 2nd-order Butterworth: tau = 1 / (zeta * wn).
  const double c = 0.7;
  const double wn = 2.0 * std::numbers::pi * 6.0;
  const double tau = 1.0 / (std::numbers::sqrt2 / 2.0 * wn);
  const std::vector<double> x(4000, c);
  const auto y = envelope(x, 6.0, kSampleRateHz);
  const auto from = static_cast<std::size_t>(std::ceil(5.0 * tau * kSampleRateHz));
  for (std::size_t i = from; i < y.size(); ++i) EXPECT_NEAR(y[i], c, 0.01 * c) << i;
}

TEST(Envelope, RectifiedSineMean) {
  const double amp = 1.5;
  const std::size_t n = 20 * static_cast<std::size_t>(kSampleRateHz);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * 100.0 * static_cast<double>(i) / kSampleRateHz);
  }
  const auto y = envelope(x, 6.0, kSampleRateHz);
  double mean = 0.0;
  for (std::size_t i = n / 2; i < n; ++i) mean += y[i];
  mean /= static_cast<double>(n - n / 2);
  EXPECT_NEAR(mean, 2.0 * amp / std::numbers::pi, 0.05 * 2.0 * amp / std::numbers::pi);
}

TEST(Envelope, ZeroAndNonNegative) {
  for (double v : envelope(std::vector<double>(500, 0.0), 6.0, kSampleRateHz)) EXPECT_EQ(v, 0.0);
  Rng rng(5);
  std::vector<double> x(5000);
  for (auto& v : x) v = rng.normal() * (rng.uniform() < 0.01 ? 50.0 : 1.0);
  for (double v : envelope(x, 6.0, kSampleRateHz)) EXPECT_GE(v, 0.0);
}

TEST(MvcNormalize, Examples) {
  ChannelMatrix env(kChannels, std::vector<double>(50));
  std::vector<double> maxima(kChannels);
  Rng rng(1);
  for (std::size_t c = 0; c < kChannels; ++c) {
    maxima[c] = rng.uniform(0.1, 2.0);
    for (auto& v : env[c]) v = maxima[c];
  }
  for (const auto& ch : mvc_normalize(env, maxima).samples) {
    for (double v : ch) EXPECT_DOUBLE_EQ(v, 1.0);
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (auto& v : env[c]) v = 0.5 * maxima[c];
  }
  for (const auto& ch : mvc_normalize(env, maxima).samples) {
    for (double v : ch) EXPECT_DOUBLE_EQ(v, 0.5);
  }
}

TEST(MvcNormalize, DegenerateChannelIsNamed) {
  ChannelMatrix env(kChannels, std::vector<double>(10, 1.0));
  std::vector<double> maxima(kChannels, 1.0);
  maxima[2] = 0.0;  // channel 3
  try {
    mvc_normalize(env, maxima);
    FAIL() << "expected DegenerateMvcError";
  } catch (const DegenerateMvcError& e) {
    EXPECT_EQ(e.channel(), 2u);
    EXPECT_NE(std::string(e.what()).find("channel 3"), std::string::npos) << e.what();
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
  maxima[2] = -1.0;
  EXPECT_THROW(mvc_normalize(env, maxima), DegenerateMvcError);
  maxima[2] = 1.0;
  maxima.pop_back();
  EXPECT_THROW(mvc_normalize(env, maxima), DataError);
}

TEST(MvcNormalize, ScaleInvariance) {
  Rng rng(9);
  ChannelMatrix env(kChannels, std::vector<double>(200));
  std::vector<double> maxima(kChannels);
  for (std::size_t c = 0; c < kChannels; ++c) {
    maxima[c] = rng.uniform(0.2, 3.0);
    for (auto& v : env[c]) v = rng.uniform(0.0, 4.0);
  }
  for (double a : {1e-3, 0.7, 13.0, 1e4}) {
    ChannelMatrix env_a = env;
    std::vector<double> max_a = maxima;
    for (std::size_t c = 0; c < kChannels; ++c) {
      max_a[c] *= a;
      for (auto& v : env_a[c]) v *= a;
    }
    const auto x = mvc_normalize(env, maxima);
    const auto y = mvc_normalize(env_a, max_a);
    for (std::size_t c = 0; c < kChannels; ++c) {
      for (std::size_t t = 0; t < 200; ++t) {
        EXPECT_NEAR(y.samples[c][t], x.samples[c][t], 1e-12 * std::abs(x.samples[c][t]));
      }
    }
  }
}

TEST(WindowIter, Counts) {
  EXPECT_EQ(window_length(320.0, kSampleRateHz), 500u);
  auto one = flat_trial(500);
  const auto w1 = window_iter(one);
  ASSERT_EQ(w1.size(), 1u);
  EXPECT_EQ(w1[0].start, 0u);
  EXPECT_EQ(w1[0].length, 500u);
  EXPECT_DOUBLE_EQ(w1[0].end_time_ms, 320.0);

  auto full = flat_trial(6250);
  const auto w = window_iter(full);
  ASSERT_EQ(w.size(), 93u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].start, static_cast<std::size_t>(std::llround(static_cast<double>(i) * 62.5)));
    EXPECT_LE(w[i].start + w[i].length, 6250u);
  }

  auto short_trial = flat_trial(499);
  EXPECT_TRUE(window_iter(short_trial).empty());
}

TEST(WindowIter, StepsAreSixtyTwoOrSixtyThree) {
  auto t = flat_trial(20000);
  const auto w = window_iter(t);
  for (std::size_t i = 1; i < w.size(); ++i) {
    const auto d = w[i].start - w[i - 1].start;
    EXPECT_TRUE(d == 62 || d == 63) << d;
  }
}

TEST(WindowIter, RejectsNonPositiveParameters) {
  auto t = flat_trial(1000);
  EXPECT_THROW(window_iter(t, 0.0, 40.0), ConfigError);
  EXPECT_THROW(window_iter(t, 320.0, -1.0), ConfigError);
}

TEST(Preprocess, ValidatesRawTrial) {
  RawTrial raw;
  raw.info.trial_id = "t";
  raw.samples.assign(kChannels, std::vector<double>(100, 0.01));
  std::vector<double> maxima(kChannels, 1.0);
  PipelineConfig cfg;
  EXPECT_NO_THROW(preprocess_trial(raw, maxima, cfg));
  raw.samples[5][7] = std::nan("");
  EXPECT_THROW(preprocess_trial(raw, maxima, cfg), DataError);
  raw.samples.pop_back();
  EXPECT_THROW(preprocess_trial(raw, maxima, cfg), DataError);
  raw.samples.assign(kChannels, {});
  EXPECT_THROW(preprocess_trial(raw, maxima, cfg), DataError);
}

TEST(Preprocess, EnvelopeIsFiniteAndNonNegative) {
  Rng rng(21);
  RawTrial raw;
  raw.samples.assign(kChannels, std::vector<double>(6250));
  for (auto& ch : raw.samples) {
    for (auto& v : ch) v = rng.normal(0.0, 0.2);
  }
  MvcRecording mvc;
  mvc.samples = raw.samples;
  PipelineConfig cfg;
  const auto maxima = mvc_envelope_max(mvc, cfg);
  for (double m : maxima) EXPECT_GT(m, 0.0);
  const auto env = preprocess_trial(raw, maxima, cfg);
  ASSERT_EQ(env.channels(), kChannels);
  ASSERT_EQ(env.length(), 6250u);
  for (const auto& ch : env.samples) {
    for (double v : ch) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);  // the trial is its own MVC here
    }
  }
}
