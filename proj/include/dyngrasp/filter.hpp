#pragma once

// Butterworth IIR design via the analog prototype, frequency transformation
// and a pre-warped bilinear transform, realized as cascaded second-order
// sections (transposed direct form II).

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace dyngrasp {

/// One second-order section, a0 normalized to 1:
///   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  /// Pole moduli of 1 + a1 z^-1 + a2 z^-2.
  std::pair<double, double> pole_moduli() const {
    const std::complex<double> disc =
        std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
    const auto p1 = (-a1 + disc) / 2.0;
    const auto p2 = (-a1 - disc) / 2.0;
    return {std::abs(p1), std::abs(p2)};
  }

  bool stable() const {
    auto [m1, m2] = pole_moduli();
    return m1 < 1.0 && m2 < 1.0;
  }
};

enum class FilterKind { LowPass, BandPass };

struct FilterCoefficients {
  std::vector<Biquad> sections;
  FilterKind kind = FilterKind::LowPass;
  int order = 0;             // denominator degree of the full cascade
  double low_hz = 0.0;       // band-pass lower edge; unused for low-pass
  double high_hz = 0.0;      // band-pass upper edge or low-pass cutoff
  double sample_rate = 0.0;  // design rate

  bool stable() const {
    return std::all_of(sections.begin(), sections.end(),
                       [](const Biquad& s) { return s.stable(); });
  }

  /// Complex response at `hz`, evaluated on the unit circle.
  std::complex<double> response(double hz) const {
    const double w = 2.0 * std::numbers::pi * hz / sample_rate;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) {
      h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
  }

  double magnitude_db(double hz) const {
    return 20.0 * std::log10(std::abs(response(hz)));
  }
};

namespace detail {

using cplx = std::complex<double>;

// Left-half-plane poles of the normalized analog Butterworth prototype.
inline std::vector<cplx> butterworth_prototype(int n) {
  std::vector<cplx> poles;
  poles.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + n - 1) / (2.0 * n);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

inline double prewarp(double hz, double fs) {
  return 2.0 * fs * std::tan(std::numbers::pi * hz / fs);
}

inline cplx bilinear(cplx s, double fs) {
  return (2.0 * fs + s) / (2.0 * fs - s);
}

// Groups digital poles into conjugate pairs (or pairs of reals) and emits one
// section per pair. `zeros` supplies the numerator roots for each section.
inline std::vector<Biquad> pair_sections(std::vector<cplx> poles,
                                         const std::vector<std::pair<double, double>>& zeros) {
  constexpr double kImagTol = 1e-12;
  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const auto& p : poles) {
    if (std::abs(p.imag()) <= kImagTol * std::max(1.0, std::abs(p))) {
      reals.push_back(p.real());
    } else if (p.imag() > 0) {
      upper.push_back(p);
    }
  }
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  std::sort(reals.begin(), reals.end());

  std::vector<Biquad> out;
  std::size_t zi = 0;
  auto numerator = [&](Biquad& s) {
    // (1 - r1 z^-1)(1 - r2 z^-1); r == nan marks "no zero" (first order)
    auto [r1, r2] = zeros[zi++];
    if (std::isnan(r2)) {
      s.b0 = 1.0;
      s.b1 = -r1;
      s.b2 = 0.0;
    } else {
      s.b0 = 1.0;
      s.b1 = -(r1 + r2);
      s.b2 = r1 * r2;
    }
  };
  for (const auto& p : upper) {
    Biquad s;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    numerator(s);
    out.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad s;
    s.a1 = -(reals[i] + reals[i + 1]);
    s.a2 = reals[i] * reals[i + 1];
    numerator(s);
    out.push_back(s);
  }
  if (reals.size() % 2 == 1) {
    Biquad s;
    s.a1 = -reals.back();
    s.a2 = 0.0;
    numerator(s);
    out.push_back(s);
  }
  return out;
}

inline void normalize_gain(FilterCoefficients& f, double at_hz) {
  const double g = std::abs(f.response(at_hz));
  const double per_section = std::pow(g, 1.0 / static_cast<double>(f.sections.size()));
  for (auto& s : f.sections) {
    s.b0 /= per_section;
    s.b1 /= per_section;
    s.b2 /= per_section;
  }
}

}  // namespace detail

/// Butterworth band-pass. `order` is the order of the resulting digital
/// filter (twice the prototype order), so it must be even; order 4 gives two
/// sections. Mid-band (geometric centre) gain is normalized to 0 dB.
inline FilterCoefficients design_bandpass(double low_hz, double high_hz, int order,
                                          double sample_rate) {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw InvalidDesignError("sample rate must be positive");
  }
  const double nyquist = sample_rate / 2.0;
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist)) {
    throw InvalidDesignError("band edges must satisfy 0 < low (" + std::to_string(low_hz) +
                             ") < high (" + std::to_string(high_hz) + ") < nyquist (" +
                             std::to_string(nyquist) + ")");
  }
  if (order < 2 || order % 2 != 0) {
    throw InvalidDesignError("band-pass order must be even and >= 2, got " +
                             std::to_string(order));
  }

  const int n = order / 2;
  const double w1 = detail::prewarp(low_hz, sample_rate);
  const double w2 = detail::prewarp(high_hz, sample_rate);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  // s_lp -> (s^2 + w0^2) / (bw s): each prototype pole becomes a pole pair.
  std::vector<detail::cplx> poles;
  for (const auto& p : detail::butterworth_prototype(n)) {
    const detail::cplx pb = p * bw;
    const detail::cplx disc = std::sqrt(pb * pb - 4.0 * w0sq);
    poles.push_back(detail::bilinear((pb + disc) / 2.0, sample_rate));
    poles.push_back(detail::bilinear((pb - disc) / 2.0, sample_rate));
  }
  // n zeros at s = 0 (z = 1) and n at infinity (z = -1): one of each per section.
  std::vector<std::pair<double, double>> zeros(static_cast<std::size_t>(n), {1.0, -1.0});

  FilterCoefficients f;
  f.sections = detail::pair_sections(std::move(poles), zeros);
  f.kind = FilterKind::BandPass;
  f.order = order;
  f.low_hz = low_hz;
  f.high_hz = high_hz;
  f.sample_rate = sample_rate;

  const double centre_hz =
      std::atan(std::sqrt(w0sq) / (2.0 * sample_rate)) * sample_rate / std::numbers::pi;
  detail::normalize_gain(f, centre_hz);
  return f;
}

/// Butterworth low-pass with unity DC gain.
inline FilterCoefficients design_lowpass(double cutoff_hz, int order, double sample_rate) {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw InvalidDesignError("sample rate must be positive");
  }
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0)) {
    throw InvalidDesignError("cutoff " + std::to_string(cutoff_hz) +
                             " Hz must lie in (0, nyquist)");
  }
  if (order < 1) {
    throw InvalidDesignError("low-pass order must be >= 1");
  }
  const double wc = detail::prewarp(cutoff_hz, sample_rate);
  std::vector<detail::cplx> poles;
  for (const auto& p : detail::butterworth_prototype(order)) {
    poles.push_back(detail::bilinear(p * wc, sample_rate));
  }
  std::vector<std::pair<double, double>> zeros;
  for (int i = 0; i < order / 2; ++i) zeros.emplace_back(-1.0, -1.0);
  if (order % 2 == 1) zeros.emplace_back(-1.0, std::nan(""));

  FilterCoefficients f;
  f.sections = detail::pair_sections(std::move(poles), zeros);
  f.kind = FilterKind::LowPass;
  f.order = order;
  f.high_hz = cutoff_hz;
  f.sample_rate = sample_rate;
  detail::normalize_gain(f, 0.0);
  return f;
}

/// Causal single pass through every section, zero initial state.
inline std::vector<double> apply_filter(const FilterCoefficients& coeffs,
                                        std::span<const double> signal) {
  std::vector<double> y(signal.begin(), signal.end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) {
      throw DataError("apply_filter: non-finite input at sample " + std::to_string(i));
    }
  }
  for (const auto& s : coeffs.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double x = v;
      const double out = s.b0 * x + z1;
      z1 = s.b1 * x - s.a1 * out + z2;
      z2 = s.b2 * x - s.a2 * out;
      v = out;
    }
  }
  return y;
}

}  // namespace dyngrasp
