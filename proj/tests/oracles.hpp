#pragma once

// Reference implementations written independently of the library: plain
// loops, no Eigen, no prefix sums. Tests compare the library against these.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "dyngrasp/dyngrasp.hpp"

namespace oracle {

/// Steady-state gain (dB) of `coeffs` at `hz`, measured by filtering a long
/// sine and projecting the second half of the output onto sin/cos.
inline double probe_gain_db(const dyngrasp::FilterCoefficients& coeffs, double hz,
                            double fs = dyngrasp::kSampleRateHz, double seconds = 20.0) {
  const auto n = static_cast<std::size_t>(seconds * fs);
  std::vector<double> x(n);
  const double w = 2.0 * std::numbers::pi * hz / fs;
  for (std::size_t t = 0; t < n; ++t) x[t] = std::sin(w * static_cast<double>(t));
  const auto y = dyngrasp::apply_filter(coeffs, x);
  // Use a whole number of periods from the second half to keep the
  // projection unbiased.
  const double period = fs / hz;
  const std::size_t start = n / 2;
  const auto periods = static_cast<std::size_t>(static_cast<double>(n - start) / period);
  const auto stop = start + static_cast<std::size_t>(static_cast<double>(periods) * period);
  double s = 0.0, c = 0.0, ss = 0.0, cc = 0.0;
  for (std::size_t t = start; t < stop; ++t) {
    const double st = std::sin(w * static_cast<double>(t));
    const double ct = std::cos(w * static_cast<double>(t));
    s += y[t] * st;
    c += y[t] * ct;
    ss += st * st;
    cc += ct * ct;
  }
  const double a = s / ss, b = c / cc;
  return 20.0 * std::log10(std::sqrt(a * a + b * b));
}

struct NaiveFeatures {
  std::vector<double> rms, mav, var;
};

/// Per-sample loops; variance by the two-pass definition.
inline NaiveFeatures naive_features(const std::vector<std::vector<double>>& win) {
  NaiveFeatures f;
  for (const auto& ch : win) {
    const double n = static_cast<double>(ch.size());
    double sq = 0.0, ab = 0.0, mean = 0.0;
    for (double v : ch) {
      sq += v * v;
      ab += std::abs(v);
      mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : ch) var += (v - mean) * (v - mean);
    f.rms.push_back(std::sqrt(sq / n));
    f.mav.push_back(ab / n);
    f.var.push_back(var / n);
  }
  return f;
}

/// log|det A| by Gaussian elimination with partial pivoting.
inline double logdet_gauss(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r) {
      if (std::abs(a[r][k]) > std::abs(a[piv][k])) piv = r;
    }
    std::swap(a[k], a[piv]);
    if (a[k][k] == 0.0) return -std::numeric_limits<double>::infinity();
    acc += std::log(std::abs(a[k][k]));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a[r][k] / a[k][k];
      for (std::size_t c = k; c < n; ++c) a[r][c] -= f * a[k][c];
    }
  }
  return acc;
}

/// rows = time, cols = channels.
using Rows = std::vector<std::vector<double>>;

/// (m/2) log det(S + lambda I), S the two-pass population covariance.
inline double segment_cost(const Rows& x, std::size_t begin, std::size_t end, double lambda) {
  const std::size_t m = end - begin;
  const std::size_t c = x.front().size();
  std::vector<double> mu(c, 0.0);
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t i = 0; i < c; ++i) mu[i] += x[t][i];
  }
  for (double& v : mu) v /= static_cast<double>(m);
  std::vector<std::vector<double>> s(c, std::vector<double>(c, 0.0));
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) s[i][j] += (x[t][i] - mu[i]) * (x[t][j] - mu[j]);
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) s[i][j] /= static_cast<double>(m);
    s[i][i] += lambda;
  }
  return 0.5 * static_cast<double>(m) * logdet_gauss(s);
}

/// Block means of `factor` native samples (remainder dropped), as rows.
inline Rows block_average(const std::vector<std::vector<double>>& channels, std::size_t factor) {
  const std::size_t n = channels.front().size() / factor;
  Rows out(n, std::vector<double>(channels.size(), 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < channels.size(); ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < factor; ++k) s += channels[c][r * factor + k];
      out[r][c] = s / static_cast<double>(factor);
    }
  }
  return out;
}

struct Exhaustive {
  std::array<std::size_t, 3> breakpoints{};
  double cost = std::numeric_limits<double>::infinity();
};

/// Best (b1, b2, b3) over every admissible triple with spans >= min_len.
inline Exhaustive exhaustive_triple(const Rows& x, double lambda, std::size_t min_len) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + min_len; j <= n; ++j) cost[i][j] = segment_cost(x, i, j, lambda);
  }
  Exhaustive best;
  for (std::size_t b1 = min_len; b1 + 3 * min_len <= n; ++b1) {
    for (std::size_t b2 = b1 + min_len; b2 + 2 * min_len <= n; ++b2) {
      for (std::size_t b3 = b2 + min_len; b3 + min_len <= n; ++b3) {
        const double c = cost[0][b1] + cost[b1][b2] + cost[b2][b3] + cost[b3][n];
        if (c < best.cost) best = {{b1, b2, b3}, c};
      }
    }
  }
  return best;
}

/// Replays training rows down a tree and checks every threshold lies
/// strictly inside the feature range of the rows reaching its node.
inline bool thresholds_valid(const dyngrasp::Tree& tree, const std::vector<dyngrasp::FeatureArray>& x) {
  std::vector<std::vector<std::size_t>> reach(tree.nodes.size());
  for (std::size_t i = 0; i < x.size(); ++i) reach[0].push_back(i);
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const auto& node = tree.nodes[k];
    if (node.feature < 0) {
      if (reach[k].empty()) return false;
      continue;
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto i : reach[k]) {
      lo = std::min(lo, x[i][static_cast<std::size_t>(node.feature)]);
      hi = std::max(hi, x[i][static_cast<std::size_t>(node.feature)]);
    }
    if (!(node.threshold > lo && node.threshold < hi)) return false;
    for (auto i : reach[k]) {
      const bool left = x[i][static_cast<std::size_t>(node.feature)] <= node.threshold;
      reach[static_cast<std::size_t>(left ? node.left : node.right)].push_back(i);
    }
  }
  return true;
}

}  // namespace oracle

namespace oracle {

struct Blobs {
  std::vector<dyngrasp::FeatureArray> x;
  std::vector<int> y;
  double sigma = 0.0;
  double min_center_distance = 0.0;
  std::vector<dyngrasp::FeatureArray> centers;
};

/// Isotropic unit-variance Gaussian blobs. Classes come in pairs: an anchor
/// centre drawn uniformly in [0, 20]^36 and a twin exactly `separation`
/// sigmas away in a random direction, so every class has a competitor at
/// that distance while unrelated pairs sit far apart. Rows are interleaved
/// by class, hence a larger draw with the same seed extends a smaller one.
inline Blobs gaussian_blobs(std::uint64_t seed, std::size_t rows_per_class, double separation,
                            std::size_t classes = dyngrasp::kNumClasses) {
  dyngrasp::Rng rng(seed);
  std::vector<dyngrasp::FeatureArray> centers(classes);
  for (std::size_t k = 0; k < classes; k += 2) {
    for (auto& v : centers[k]) v = rng.uniform(0.0, 20.0);
    if (k + 1 == classes) break;
    dyngrasp::FeatureArray dir{};
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t f = 0; f < dyngrasp::kNumFeatures; ++f) {
      centers[k + 1][f] = centers[k][f] + separation * dir[f] / norm;
    }
  }
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      double s = 0.0;
      for (std::size_t f = 0; f < dyngrasp::kNumFeatures; ++f) s += std::pow(centers[a][f] - centers[b][f], 2);
      dmin = std::min(dmin, std::sqrt(s));
    }
  }
  Blobs out;
  out.sigma = 1.0;
  out.min_center_distance = dmin;
  out.centers = centers;
  for (std::size_t i = 0; i < rows_per_class; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      dyngrasp::FeatureArray row{};
      for (std::size_t f = 0; f < dyngrasp::kNumFeatures; ++f) row[f] = centers[k][f] + rng.normal(0.0, out.sigma);
      out.x.push_back(row);
      out.y.push_back(static_cast<int>(k));
    }
  }
  return out;
}

}  // namespace oracle
