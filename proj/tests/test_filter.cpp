#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dyngrasp/filter.hpp"
#include "oracles.hpp"

using namespace dyngrasp;

namespace {
const FilterCoefficients& default_band() {
  static const auto f = design_bandpass(40.0, 500.0, 4, kSampleRateHz);
  return f;
}
}  // namespace

TEST(Bandpass, EdgesMeasureMinusThreeDb) {
  const auto& f = default_band();
  EXPECT_NEAR(oracle::probe_gain_db(f, 40.0), -3.0, 0.5);
  EXPECT_NEAR(oracle::probe_gain_db(f, 500.0), -3.0, 0.5);
}

TEST(Bandpass, MidBandIsUnityGain) {
  const auto& f = default_band();
  const double centre = std::sqrt(40.0 * 500.0);
  EXPECT_NEAR(oracle::probe_gain_db(f, centre), 0.0, 0.1);
}

TEST(Bandpass, RejectsFiveHertz) {
  EXPECT_LE(oracle::probe_gain_db(default_band(), 5.0, kSampleRateHz, 60.0), -30.0);
}

TEST(Bandpass, AnalyticResponseAgreesWithProbe) {
  const auto& f = default_band();
  for (double hz : {20.0, 40.0, 141.4, 300.0, 500.0, 650.0}) {
    EXPECT_NEAR(f.magnitude_db(hz), oracle::probe_gain_db(f, hz), 0.05) << hz;
  }
}

TEST(Bandpass, SectionsAreStableAndOrderIsTotal) {
  const auto& f = default_band();
  EXPECT_EQ(f.order, 4);
  EXPECT_EQ(f.sections.size(), 2u);
  for (const auto& s : f.sections) {
    const auto [r1, r2] = s.pole_moduli();
    EXPECT_LT(r1, 1.0);
    EXPECT_LT(r2, 1.0);
  }
  EXPECT_TRUE(f.stable());
  for (int order : {2, 6, 8}) EXPECT_TRUE(design_bandpass(20.0, 300.0, order, 1000.0).stable());
}

TEST(Bandpass, InvalidDesigns) {
  EXPECT_THROW(design_bandpass(40.0, 800.0, 4, kSampleRateHz), InvalidDesignError);
  EXPECT_THROW(design_bandpass(0.0, 500.0, 4, kSampleRateHz), InvalidDesignError);
  EXPECT_THROW(design_bandpass(500.0, 40.0, 4, kSampleRateHz), InvalidDesignError);
  EXPECT_THROW(design_bandpass(40.0, 500.0, 3, kSampleRateHz), InvalidDesignError);
  EXPECT_THROW(design_bandpass(40.0, 500.0, 0, kSampleRateHz), InvalidDesignError);
  try {
    design_bandpass(40.0, 800.0, 4, kSampleRateHz);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(ApplyFilter, ZeroInZeroOut) {
  const std::vector<double> zeros(1000, 0.0);
  for (const auto& f : {default_band(), design_lowpass(6.0, 2, kSampleRateHz)}) {
    const auto y = apply_filter(f, zeros);
    ASSERT_EQ(y.size(), zeros.size());
    for (double v : y) EXPECT_EQ(v, 0.0);
  }
}

TEST(ApplyFilter, Linearity) {
  Rng rng(3);
  std::vector<double> x(4000), x2(4000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal();
    x2[i] = 2.0 * x[i];
  }
  const auto y = apply_filter(default_band(), x);
  const auto y2 = apply_filter(default_band(), x2);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(y2[i], 2.0 * y[i], 1e-9 * std::max(1.0, std::abs(y2[i])));
  }
}

TEST(ApplyFilter, ImpulseResponseDecays) {
  std::vector<double> impulse(3 * static_cast<std::size_t>(kSampleRateHz), 0.0);
  impulse[0] = 1.0;
  for (const auto& f : {default_band(), design_lowpass(6.0, 2, kSampleRateHz)}) {
    const auto h = apply_filter(f, impulse);
    double peak = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      peak = std::max(peak, std::abs(h[i]));
      if (i >= static_cast<std::size_t>(kSampleRateHz)) tail = std::max(tail, std::abs(h[i]));
    }
    EXPECT_LT(tail, 1e-6 * peak);
  }
}

TEST(ApplyFilter, EmptyAndNonFinite) {
  EXPECT_TRUE(apply_filter(default_band(), std::vector<double>{}).empty());
  std::vector<double> x(10, 1.0);
  x[4] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(apply_filter(default_band(), x), DataError);
  x[4] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(apply_filter(default_band(), x), DataError);
}

TEST(Lowpass, UnityDcAndCutoff) {
  const auto lp = design_lowpass(6.0, 2, kSampleRateHz);
  EXPECT_NEAR(lp.magnitude_db(0.0), 0.0, 1e-9);
  EXPECT_NEAR(oracle::probe_gain_db(lp, 6.0, kSampleRateHz, 40.0), -3.0103, 0.05);
  EXPECT_THROW(design_lowpass(800.0, 2, kSampleRateHz), InvalidDesignError);
  EXPECT_THROW(design_lowpass(6.0, 0, kSampleRateHz), InvalidDesignError);
}
