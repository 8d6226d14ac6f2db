#pragma once

// Greedy Gaussian segmentation with a fixed breakpoint count.
//
// Each segment is modeled as an independent multivariate Gaussian with its
// own mean and covariance. The per-segment cost is the negative maximized
// log-likelihood up to breakpoint-independent constants,
//
//   cost(slice) = (m / 2) * log det(S + lambda I),
//
// with S the mean-removed empirical covariance of the m rows in the slice.
// Breakpoints are inserted one at a time at the split with the largest cost
// decrease; after every insertion the current breakpoints are re-adjusted
// one at a time until a full pass moves nothing.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "signal_pipeline.hpp"

namespace dyngrasp {

/// Rows are time steps, columns are channels.
using Series = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GgsConfig {
  std::size_t n_breakpoints = 3;
  double lambda = 0.1;
  std::size_t downsample_factor = 16;
  std::size_t min_segment_len = 10;  // at the downsampled rate
  std::size_t max_adjust_passes = 10;
  std::size_t search_stride = 1;
};

inline void validate(const GgsConfig& cfg, std::size_t channels) {
  if (cfg.n_breakpoints < 1) throw ConfigError("ggs: n_breakpoints must be >= 1");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw ConfigError("ggs: lambda must be finite and >= 0");
  }
  if (cfg.downsample_factor < 1) throw ConfigError("ggs: downsample_factor must be >= 1");
  if (cfg.min_segment_len < 2) throw ConfigError("ggs: min_segment_len must be >= 2");
  if (cfg.search_stride < 1) throw ConfigError("ggs: search_stride must be >= 1");
  if (cfg.lambda == 0.0 && cfg.min_segment_len <= channels) {
    throw ConfigError("ggs: lambda = 0 requires min_segment_len > channel count (" +
                      std::to_string(channels) + ")");
  }
}

namespace detail {

inline double regularized_logdet(Eigen::MatrixXd cov, double lambda, std::size_t m) {
  const auto c = static_cast<std::size_t>(cov.rows());
  if (lambda == 0.0 && m <= c) {
    throw SingularCovarianceError("segment of " + std::to_string(m) + " rows has a singular " +
                                  std::to_string(c) + "x" + std::to_string(c) + " covariance");
  }
  cov.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw SingularCovarianceError("segment covariance is not positive definite");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// Cost of one slice computed directly from its rows.
inline double segment_cost(const Series& slice, double lambda) {
  const auto m = static_cast<std::size_t>(slice.rows());
  if (m < 2) throw DataError("segment_cost: slice needs at least 2 rows");
  if (lambda < 0.0) throw ConfigError("segment_cost: lambda must be >= 0");
  const Eigen::RowVectorXd mean = slice.colwise().mean();
  const Eigen::MatrixXd centered = slice.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m);
  return 0.5 * static_cast<double>(m) * detail::regularized_logdet(cov, lambda, m);
}

/// Prefix sums of x and x x^T so that any slice's covariance costs O(C^2)
/// to assemble. Data are centred on the global mean first to limit
/// cancellation in S2/m - mu mu^T.
class SegmentCostTable {
 public:
  SegmentCostTable(const Series& data, double lambda)
      : n_(static_cast<std::size_t>(data.rows())),
        c_(static_cast<std::size_t>(data.cols())),
        lambda_(lambda),
        sum_(n_ + 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c_))),
        sum_sq_(n_ + 1, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c_),
                                              static_cast<Eigen::Index>(c_))) {
    const Eigen::RowVectorXd global_mean =
        n_ > 0 ? Eigen::RowVectorXd(data.colwise().mean())
               : Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(c_));
    for (std::size_t t = 0; t < n_; ++t) {
      const Eigen::VectorXd x = (data.row(static_cast<Eigen::Index>(t)) - global_mean).transpose();
      sum_[t + 1] = sum_[t] + x;
      sum_sq_[t + 1] = sum_sq_[t] + x * x.transpose();
    }
  }

  std::size_t size() const { return n_; }
  std::size_t channels() const { return c_; }

  /// Cost of rows [begin, end).
  double cost(std::size_t begin, std::size_t end) const {
    const std::size_t m = end - begin;
    const double md = static_cast<double>(m);
    const Eigen::VectorXd mu = (sum_[end] - sum_[begin]) / md;
    Eigen::MatrixXd cov = (sum_sq_[end] - sum_sq_[begin]) / md - mu * mu.transpose();
    return 0.5 * md * detail::regularized_logdet(std::move(cov), lambda_, m);
  }

  /// Sum of segment costs for sorted interior breakpoints.
  double total(std::span<const std::size_t> breakpoints) const {
    double acc = 0.0;
    std::size_t prev = 0;
    for (std::size_t b : breakpoints) {
      acc += cost(prev, b);
      prev = b;
    }
    return acc + cost(prev, n_);
  }

 private:
  std::size_t n_;
  std::size_t c_;
  double lambda_;
  std::vector<Eigen::VectorXd> sum_;
  std::vector<Eigen::MatrixXd> sum_sq_;
};

/// Result on the series actually segmented (downsampled indices).
struct GgsFit {
  std::vector<std::size_t> breakpoints;
  double objective = 0.0;
  /// Objective after the empty start and after every accepted insertion or
  /// relocation. Non-increasing.
  std::vector<double> trace;
  std::size_t adjust_moves = 0;
};

namespace detail {

// True when `candidate` beats `incumbent` by more than rounding noise.
inline bool strictly_better(double candidate, double incumbent) {
  return candidate < incumbent - 1e-12 * std::max(1.0, std::abs(incumbent));
}

inline std::size_t adjust_breakpoints(const SegmentCostTable& table, std::vector<std::size_t>& bps,
                                      const GgsConfig& cfg, std::vector<double>& trace) {
  std::size_t moves = 0;
  const std::size_t n = table.size();
  for (std::size_t pass = 0; pass < cfg.max_adjust_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < bps.size(); ++i) {
      const std::size_t left = i == 0 ? 0 : bps[i - 1];
      const std::size_t right = i + 1 == bps.size() ? n : bps[i + 1];
      const std::size_t lo = left + cfg.min_segment_len;
      const std::size_t hi = right - cfg.min_segment_len;
      const double current = table.cost(left, bps[i]) + table.cost(bps[i], right);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_t = bps[i];
      for (std::size_t t = lo; t <= hi; t += cfg.search_stride) {
        const double c = table.cost(left, t) + table.cost(t, right);
        if (c < best) {
          best = c;
          best_t = t;
        }
      }
      if (best_t != bps[i] && strictly_better(best, current)) {
        bps[i] = best_t;
        trace.push_back(table.total(bps));
        moved = true;
        ++moves;
      }
    }
    if (!moved) break;
  }
  return moves;
}

}  // namespace detail

/// Greedy segmentation of a (typically downsampled) series.
inline GgsFit ggs_fit(const Series& data, const GgsConfig& cfg) {
  const auto n = static_cast<std::size_t>(data.rows());
  validate(cfg, static_cast<std::size_t>(data.cols()));
  if (!data.allFinite()) throw DataError("ggs: non-finite data");
  if (n < (cfg.n_breakpoints + 1) * cfg.min_segment_len) {
    throw DataError("ggs: series of " + std::to_string(n) + " points is too short for " +
                    std::to_string(cfg.n_breakpoints) + " breakpoints with minimum segment " +
                    std::to_string(cfg.min_segment_len));
  }

  const SegmentCostTable table(data, cfg.lambda);
  GgsFit fit;
  fit.trace.push_back(table.cost(0, n));

  for (std::size_t k = 0; k < cfg.n_breakpoints; ++k) {
    double best_gain = -std::numeric_limits<double>::infinity();
    std::size_t best_t = 0;
    std::size_t prev = 0;
    for (std::size_t s = 0; s <= fit.breakpoints.size(); ++s) {
      const std::size_t end = s == fit.breakpoints.size() ? n : fit.breakpoints[s];
      if (end - prev >= 2 * cfg.min_segment_len) {
        const double whole = table.cost(prev, end);
        for (std::size_t t = prev + cfg.min_segment_len; t + cfg.min_segment_len <= end;
             t += cfg.search_stride) {
          const double gain = whole - table.cost(prev, t) - table.cost(t, end);
          if (gain > best_gain) {
            best_gain = gain;
            best_t = t;
          }
        }
      }
      prev = end;
    }
    if (best_t == 0) {
      throw DataError("ggs: no admissible split left for breakpoint " + std::to_string(k + 1));
    }
    fit.breakpoints.insert(std::upper_bound(fit.breakpoints.begin(), fit.breakpoints.end(), best_t),
                           best_t);
    fit.trace.push_back(table.total(fit.breakpoints));
    fit.adjust_moves += detail::adjust_breakpoints(table, fit.breakpoints, cfg, fit.trace);
  }
  fit.objective = table.total(fit.breakpoints);
  return fit;
}

/// Block-average downsampling; a trailing partial block is dropped.
inline Series downsample(const ChannelMatrix& samples, std::size_t factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  const std::size_t n = sample_count(samples) / factor;
  Series out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(samples.size()));
  const double inv = 1.0 / static_cast<double>(factor);
  for (std::size_t c = 0; c < samples.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < factor; ++j) acc += samples[c][i * factor + j];
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = acc * inv;
    }
  }
  return out;
}

/// Three native-rate breakpoints splitting a trial into reach, grasp,
/// return and rest.
struct Segmentation {
  std::vector<std::size_t> breakpoints;  // native sample indices, strictly increasing
  std::size_t length = 0;                // native samples in the trial
  double sample_rate = kSampleRateHz;
  double objective = 0.0;
  std::size_t downsample_factor = 1;
  std::vector<double> trace;

  std::size_t b(std::size_t i) const { return breakpoints.at(i); }
  double breakpoint_ms(std::size_t i) const {
    return samples_to_ms(static_cast<double>(b(i)), sample_rate);
  }

  /// Phase of a native sample: span k maps to phase k.
  Phase phase_at(std::size_t sample) const {
    std::size_t k = 0;
    while (k < breakpoints.size() && sample >= breakpoints[k]) ++k;
    return static_cast<Phase>(std::min<std::size_t>(k, 3));
  }
};

inline Segmentation ggs_segment(const EnvelopeTrial& trial, const GgsConfig& cfg) {
  const std::size_t n = trial.length();
  const std::size_t needed = (cfg.n_breakpoints + 1) * cfg.min_segment_len * cfg.downsample_factor;
  if (n < needed) {
    throw DataError("ggs_segment: trial '" + trial.info.trial_id + "' has " + std::to_string(n) +
                    " samples, needs at least " + std::to_string(needed));
  }
  for (const auto& ch : trial.samples) {
    for (double v : ch) {
      if (!std::isfinite(v)) throw DataError("ggs_segment: non-finite data in " + trial.info.trial_id);
    }
  }
  const Series ds = downsample(trial.samples, cfg.downsample_factor);
  GgsFit fit = ggs_fit(ds, cfg);

  Segmentation seg;
  seg.length = n;
  seg.sample_rate = trial.sample_rate;
  seg.objective = fit.objective;
  seg.downsample_factor = cfg.downsample_factor;
  seg.trace = std::move(fit.trace);
  for (std::size_t b : fit.breakpoints) seg.breakpoints.push_back(b * cfg.downsample_factor);
  return seg;
}

/// Summed segment cost of explicit breakpoints on a series.
inline double objective(const Series& data, std::span<const std::size_t> breakpoints,
                        double lambda) {
  const auto n = static_cast<std::size_t>(data.rows());
  std::size_t prev = 0;
  for (std::size_t b : breakpoints) {
    if (b <= prev || b >= n) {
      throw DataError("objective: breakpoints must be strictly increasing inside (0, " +
                      std::to_string(n) + ")");
    }
    prev = b;
  }
  return SegmentCostTable(data, lambda).total(breakpoints);
}

/// Objective of a native-rate segmentation, evaluated on the downsampled trial.
inline double objective(const EnvelopeTrial& trial, std::span<const std::size_t> native_breakpoints,
                        const GgsConfig& cfg) {
  std::vector<std::size_t> ds;
  for (std::size_t b : native_breakpoints) ds.push_back(b / cfg.downsample_factor);
  return objective(downsample(trial.samples, cfg.downsample_factor), ds, cfg.lambda);
}

}  // namespace dyngrasp
