#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace dyngrasp {

inline constexpr std::size_t kChannels = 12;
inline constexpr double kSampleRateHz = 1562.5;
/// Open palm (label 0) plus 13 grasp gestures.
inline constexpr std::size_t kNumClasses = 14;
inline constexpr int kRestLabel = 0;
inline constexpr int kMaxGesture = 13;
/// RMS, MAV and VAR for every channel.
inline constexpr std::size_t kNumFeatures = 3 * kChannels;

enum class Phase : int { Reach = 0, Grasp = 1, Return = 2, Rest = 3 };

inline constexpr std::array<Phase, 4> kAllPhases{Phase::Reach, Phase::Grasp,
                                                 Phase::Return, Phase::Rest};

inline constexpr std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Reach: return "reach";
    case Phase::Grasp: return "grasp";
    case Phase::Return: return "return";
    case Phase::Rest: return "rest";
  }
  return "?";
}

inline constexpr bool is_motion(Phase p) { return p != Phase::Rest; }

inline double samples_to_ms(double samples, double sample_rate) {
  return samples * 1000.0 / sample_rate;
}

}  // namespace dyngrasp
