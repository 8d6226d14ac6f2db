#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "dyngrasp/ggs.hpp"
#include "dyngrasp/signal_pipeline.hpp"
#include "dyngrasp/synth.hpp"

using namespace dyngrasp;

namespace {

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_gestures = 3;
  cfg.objects_per_gesture = 1;
  cfg.trials_per_object = 3;
  return cfg;
}

std::vector<double> mean_over(const ChannelMatrix& m, std::size_t begin, std::size_t end) {
  std::vector<double> out;
  for (const auto& ch : m) {
    double s = 0.0;
    for (std::size_t t = begin; t < end; ++t) s += ch[t];
    out.push_back(s / static_cast<double>(end - begin));
  }
  return out;
}

}  // namespace

TEST(Templates, RampEndpoints) {
  SynthConfig cfg;
  Rng rng(1);
  const auto tpl = gen_templates(cfg, rng);
  for (int g = 1; g <= 13; ++g) {
    EXPECT_EQ(tpl.reach_mean(g, 0.0), tpl.rest);
    const auto end = tpl.reach_mean(g, 1.0);
    for (std::size_t c = 0; c < kChannels; ++c) EXPECT_DOUBLE_EQ(end[c], tpl.grasp_mean(g)[c]);
    EXPECT_EQ(tpl.return_mean(g, 1.0), tpl.rest);
  }
  EXPECT_DOUBLE_EQ(reach_alpha(0.2, false), 0.3);
  EXPECT_DOUBLE_EQ(reach_alpha(0.9, false), 0.3);
  EXPECT_DOUBLE_EQ(reach_alpha(0.4, true), 0.4);
}

TEST(Templates, Separation) {
  SynthConfig cfg;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto tpl = gen_templates(cfg, rng);
    ASSERT_EQ(tpl.grasp.size(), 13u);
    for (std::size_t a = 0; a < 13; ++a) {
      EXPECT_GE(euclidean(tpl.grasp[a], tpl.rest), 10.0 * cfg.noise_sigma);
      for (std::size_t b = a + 1; b < 13; ++b) {
        EXPECT_GE(euclidean(tpl.grasp[a], tpl.grasp[b]), 4.0 * cfg.noise_sigma);
      }
    }
  }
}

TEST(Templates, UnattainableSeparationIsAConfigError) {
  SynthConfig cfg;
  cfg.noise_sigma = 5.0;
  Rng rng(1);
  EXPECT_THROW(gen_templates(cfg, rng), ConfigError);
}

TEST(Trial, TinyNoiseReproducesTemplateTrajectory) {
  SynthConfig cfg;
  cfg.noise_sigma = 1e-9;
  Rng rng(4);
  const auto tpl = gen_templates(cfg, rng);
  const auto t = gen_trial(tpl, 5, cfg, rng, false);
  double worst = 0.0;
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (std::size_t i = 0; i < t.clean[c].size(); ++i) {
      worst = std::max(worst, std::abs(t.envelope[c][i] - t.clean[c][i]));
    }
  }
  EXPECT_LT(worst, 1e-6);
  // Away from crossfades the grasp phase sits exactly on its template.
  const std::size_t mid = (t.breakpoints[0] + t.breakpoints[1]) / 2;
  for (std::size_t c = 0; c < kChannels; ++c) {
    EXPECT_NEAR(t.envelope[c][mid], tpl.grasp_mean(5)[c], 1e-6);
  }
}

TEST(Trial, DurationsAndBreakpoints) {
  SynthConfig cfg;
  Rng rng(5);
  const auto tpl = gen_templates(cfg, rng);
  for (int rep = 0; rep < 50; ++rep) {
    const auto t = gen_trial(tpl, 1 + rep % 13, cfg, rng, false);
    EXPECT_GE(t.durations_s[3], cfg.min_rest_s);
    double total = 0.0;
    for (double d : t.durations_s) total += d;
    EXPECT_NEAR(total, cfg.trial_length_s, 1e-12);
    ASSERT_EQ(t.breakpoints.size(), 3u);
    EXPECT_LT(t.breakpoints[0], t.breakpoints[1]);
    EXPECT_LT(t.breakpoints[1], t.breakpoints[2]);
    EXPECT_LT(t.breakpoints[2], 6250u);
    EXPECT_EQ(sample_count(t.envelope), 6250u);
  }
}

TEST(Trial, LateReachIsCloserToGraspWhenRampIsOn) {
  SynthConfig cfg;
  Rng rng(6);
  const auto tpl = gen_templates(cfg, rng);
  for (int g = 1; g <= 13; ++g) {
    const auto t = gen_trial(tpl, g, cfg, rng, false);
    const std::size_t b1 = t.breakpoints[0];
    const auto late = mean_over(t.envelope, b1 * 8 / 10, b1 * 9 / 10);
    EXPECT_LT(euclidean(late, tpl.grasp_mean(g)), euclidean(late, tpl.rest)) << g;
  }
}

TEST(Session, SameSeedIsIdenticalDifferentSeedIsNot) {
  const auto a = gen_session(small_config(11));
  const auto b = gen_session(small_config(11));
  const auto c = gen_session(small_config(12));
  ASSERT_EQ(a.trials.size(), 9u);
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].raw.samples, b.trials[i].raw.samples);
    EXPECT_EQ(a.trials[i].breakpoints, b.trials[i].breakpoints);
  }
  EXPECT_EQ(a.mvc.samples, b.mvc.samples);
  EXPECT_EQ(a.lead_in, b.lead_in);
  EXPECT_NE(a.trials[0].raw.samples, c.trials[0].raw.samples);
}

TEST(Session, IdsAndOrdering) {
  const auto s = gen_session(small_config(3), false);
  EXPECT_EQ(s.trials.front().info.trial_id, "obj01_t1");
  EXPECT_EQ(s.trials.back().info.object_id, "obj03");
  EXPECT_EQ(s.trials.back().info.trial_index, 3);
  EXPECT_EQ(s.trials.back().info.gesture, 3);
  EXPECT_EQ(object_id_for(12), "obj12");
}

TEST(Session, MvcEnvelopeBoundsTrialEnvelopes) {
  const auto s = gen_session(small_config(21));
  const PipelineConfig pcfg;
  const auto maxima = mvc_envelope_max(s.mvc, pcfg);
  for (const auto& t : s.trials) {
    const auto env = preprocess_trial(t.raw, maxima, pcfg);
    for (const auto& ch : env.samples) {
      EXPECT_LE(*std::max_element(ch.begin(), ch.end()), 1.0) << t.info.trial_id;
      EXPECT_GE(*std::min_element(ch.begin(), ch.end()), 0.0);
    }
  }
}

TEST(Session, SegmentationRecoversGroundTruthWithoutRamp) {
  auto cfg = small_config(31);
  cfg.pre_shape_ramp = false;
  cfg.n_gestures = 13;
  cfg.trials_per_object = 2;
  const auto s = gen_session(cfg, false);
  int ok = 0;
  for (const auto& t : s.trials) {
    EnvelopeTrial et;
    et.samples = t.envelope;
    et.info = t.info;
    const auto seg = ggs_segment(et, GgsConfig{});
    bool good = true;
    for (std::size_t i = 0; i < 3; ++i) {
      good &= std::abs(static_cast<long>(seg.b(i)) - static_cast<long>(t.breakpoints[i])) <= 25;
    }
    ok += good;
  }
  EXPECT_GE(ok, static_cast<int>(s.trials.size()) - 1);
}

TEST(SynthConfigCheck, Rejections) {
  SynthConfig cfg;
  cfg.n_gestures = 14;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.noise_sigma = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.trial_length_s = 2.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.template_low = 1.0;
  EXPECT_THROW(validate(cfg), ConfigError);
}
