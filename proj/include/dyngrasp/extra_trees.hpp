#pragma once

// Extremely randomized trees (no bootstrap, one random threshold per
// candidate feature, Gini impurity) producing 14-class probabilities.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "features.hpp"
#include "random.hpp"

namespace dyngrasp {

using ClassCounts = std::array<std::uint32_t, kNumClasses>;
using Probabilities = std::array<double, kNumClasses>;

struct TrainConfig {
  std::size_t n_trees = 50;
  std::size_t k_features = 6;  // ceil(sqrt(36))
  std::size_t min_samples_split = 2;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::uint64_t seed = 0;
  unsigned n_threads = 0;  // 0 = hardware concurrency; never affects the result
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.n_trees < 1) throw ConfigError("extra_trees: n_trees must be >= 1");
  if (cfg.k_features < 1 || cfg.k_features > kNumFeatures) {
    throw ConfigError("extra_trees: k_features must be in 1.." + std::to_string(kNumFeatures));
  }
  if (cfg.min_samples_split < 2) throw ConfigError("extra_trees: min_samples_split must be >= 2");
}

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;     // index into Tree::leaves
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<ClassCounts> leaves;

  const ClassCounts& route(const FeatureArray& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                        : n.right);
    }
    return leaves[static_cast<std::size_t>(nodes[i].leaf)];
  }

  bool operator==(const Tree& o) const {
    if (nodes.size() != o.nodes.size() || leaves != o.leaves) return false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& a = nodes[i];
      const auto& b = o.nodes[i];
      if (a.feature != b.feature || a.left != b.left || a.right != b.right || a.leaf != b.leaf ||
          std::bit_cast<std::uint64_t>(a.threshold) != std::bit_cast<std::uint64_t>(b.threshold)) {
        return false;
      }
    }
    return true;
  }
};

class ExtraTreesModel {
 public:
  static constexpr int kFormatVersion = 1;

  ExtraTreesModel() = default;
  explicit ExtraTreesModel(std::vector<Tree> trees, TrainConfig cfg = {})
      : trees_(std::move(trees)), config_(cfg) {}

  bool trained() const { return !trees_.empty(); }
  const std::vector<Tree>& trees() const { return trees_; }
  std::vector<Tree>& trees() { return trees_; }
  const TrainConfig& config() const { return config_; }

  /// Unweighted mean of per-tree leaf distributions.
  Probabilities predict_proba(const FeatureArray& x) const {
    if (!trained()) throw InvariantError("predict_proba: model is not trained");
    for (double v : x) {
      if (!std::isfinite(v)) throw DataError("predict_proba: non-finite feature");
    }
    Probabilities p{};
    for (const auto& tree : trees_) {
      const auto& counts = tree.route(x);
      double total = 0.0;
      for (auto c : counts) total += c;
      for (std::size_t k = 0; k < kNumClasses; ++k) p[k] += counts[k] / total;
    }
    const double inv = 1.0 / static_cast<double>(trees_.size());
    for (double& v : p) v *= inv;
    return p;
  }

  int predict(const FeatureArray& x) const { return argmax(predict_proba(x)); }

  /// First index of the maximum.
  static int argmax(const Probabilities& p) {
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }

  bool operator==(const ExtraTreesModel& o) const { return trees_ == o.trees_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "dyngrasp-extra-trees";
    j["version"] = kFormatVersion;
    j["n_features"] = kNumFeatures;
    j["feature_order"] = kFeatureOrder;
    std::vector<int> classes(kNumClasses);
    for (std::size_t k = 0; k < kNumClasses; ++k) classes[k] = static_cast<int>(k);
    j["classes"] = classes;
    j["config"] = {{"n_trees", config_.n_trees},
                   {"k_features", config_.k_features},
                   {"min_samples_split", config_.min_samples_split},
                   {"max_depth", config_.max_depth},
                   {"seed", config_.seed}};
    auto& jt = j["trees"] = nlohmann::json::array();
    for (const auto& tree : trees_) {
      nlohmann::json t;
      std::vector<std::int32_t> feature, left, right, leaf;
      std::vector<double> threshold;
      for (const auto& n : tree.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        leaf.push_back(n.leaf);
      }
      t["feature"] = feature;
      t["threshold"] = threshold;
      t["left"] = left;
      t["right"] = right;
      t["leaf"] = leaf;
      t["leaf_counts"] = tree.leaves;
      jt.push_back(std::move(t));
    }
    return j;
  }

  static ExtraTreesModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "dyngrasp-extra-trees") {
      throw DataError("model: unrecognized format");
    }
    if (j.value("version", 0) != kFormatVersion) {
      throw DataError("model: unsupported version " + std::to_string(j.value("version", 0)));
    }
    if (j.value("n_features", std::size_t{0}) != kNumFeatures) {
      throw DataError("model: feature count mismatch");
    }
    TrainConfig cfg;
    const auto& jc = j.at("config");
    cfg.n_trees = jc.at("n_trees").get<std::size_t>();
    cfg.k_features = jc.at("k_features").get<std::size_t>();
    cfg.min_samples_split = jc.at("min_samples_split").get<std::size_t>();
    cfg.max_depth = jc.at("max_depth").get<std::size_t>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) {
      Tree tree;
      const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<std::int32_t>>();
      const auto right = t.at("right").get<std::vector<std::int32_t>>();
      const auto leaf = t.at("leaf").get<std::vector<std::int32_t>>();
      tree.leaves = t.at("leaf_counts").get<std::vector<ClassCounts>>();
      const std::size_t n = feature.size();
      if (threshold.size() != n || left.size() != n || right.size() != n || leaf.size() != n) {
        throw DataError("model: ragged node arrays");
      }
      for (std::size_t i = 0; i < n; ++i) {
        tree.nodes.push_back({feature[i], threshold[i], left[i], right[i], leaf[i]});
      }
      check_tree(tree);
      trees.push_back(std::move(tree));
    }
    return ExtraTreesModel(std::move(trees), cfg);
  }

 private:
  static void check_tree(const Tree& tree) {
    const auto n = static_cast<std::int32_t>(tree.nodes.size());
    if (n == 0) throw DataError("model: empty tree");
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) {
        if (node.leaf < 0 || node.leaf >= static_cast<std::int32_t>(tree.leaves.size())) {
          throw DataError("model: leaf index out of range");
        }
      } else if (node.feature >= static_cast<std::int32_t>(kNumFeatures) || node.left <= 0 ||
                 node.right <= 0 || node.left >= n || node.right >= n) {
        throw DataError("model: malformed internal node");
      }
    }
    for (const auto& counts : tree.leaves) {
      std::uint64_t total = 0;
      for (auto c : counts) total += c;
      if (total == 0) throw DataError("model: empty leaf histogram");
    }
  }

  std::vector<Tree> trees_;
  TrainConfig config_;
};

namespace detail {

inline double gini(const ClassCounts& counts, double n) {
  double s = 0.0;
  for (auto c : counts) {
    const double p = c / n;
    s += p * p;
  }
  return 1.0 - s;
}

inline Tree grow_tree(std::span<const FeatureArray> x, std::span<const int> y,
                      const TrainConfig& cfg, Rng rng) {
  Tree tree;
  struct Pending {
    std::size_t node;
    std::vector<std::uint32_t> rows;
    std::size_t depth;
  };
  std::vector<std::uint32_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  tree.nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, std::move(all), 0});

  std::vector<std::size_t> live;
  std::array<double, kNumFeatures> lo{}, hi{};

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const auto& rows = cur.rows;
    const double n = static_cast<double>(rows.size());

    ClassCounts counts{};
    for (auto r : rows) ++counts[static_cast<std::size_t>(y[r])];
    const bool pure =
        std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;

    auto make_leaf = [&] {
      tree.nodes[cur.node].leaf = static_cast<std::int32_t>(tree.leaves.size());
      tree.leaves.push_back(counts);
    };
    if (pure || rows.size() < cfg.min_samples_split ||
        (cfg.max_depth > 0 && cur.depth >= cfg.max_depth)) {
      make_leaf();
      continue;
    }

    // Features with a non-degenerate range at this node: some double lies
    // strictly between min and max.
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (auto r : rows) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        lo[f] = std::min(lo[f], x[r][f]);
        hi[f] = std::max(hi[f], x[r][f]);
      }
    }
    live.clear();
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (std::nextafter(lo[f], hi[f]) < hi[f]) live.push_back(f);
    }
    if (live.empty()) {
      make_leaf();
      continue;
    }

    // Partial Fisher-Yates: the first k entries of `live` become the candidates.
    const std::size_t k = std::min(cfg.k_features, live.size());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.index(live.size() - i);
      std::swap(live[i], live[j]);
    }
    std::vector<std::pair<std::size_t, double>> candidates;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t f = live[i];
      double t;
      do {
        t = rng.uniform(lo[f], hi[f]);
      } while (!(t > lo[f] && t < hi[f]));
      candidates.emplace_back(f, t);
    }
    std::sort(candidates.begin(), candidates.end());

    const double parent = gini(counts, n);
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto [f, t] = candidates[c];
      ClassCounts left{};
      std::size_t nl = 0;
      for (auto r : rows) {
        if (x[r][f] <= t) {
          ++left[static_cast<std::size_t>(y[r])];
          ++nl;
        }
      }
      ClassCounts right{};
      for (std::size_t m = 0; m < kNumClasses; ++m) right[m] = counts[m] - left[m];
      const double dl = static_cast<double>(nl);
      const double dr = n - dl;
      const double score = parent - (dl / n) * gini(left, dl) - (dr / n) * gini(right, dr);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }

    const auto [feature, threshold] = candidates[best];
    std::vector<std::uint32_t> left_rows, right_rows;
    for (auto r : rows) (x[r][feature] <= threshold ? left_rows : right_rows).push_back(r);

    const auto left_id = tree.nodes.size();
    const auto right_id = left_id + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[cur.node];
    node.feature = static_cast<std::int32_t>(feature);
    node.threshold = threshold;
    node.left = static_cast<std::int32_t>(left_id);
    node.right = static_cast<std::int32_t>(right_id);
    // Right pushed first so the left subtree is grown first.
    stack.push_back({right_id, std::move(right_rows), cur.depth + 1});
    stack.push_back({left_id, std::move(left_rows), cur.depth + 1});
  }
  return tree;
}

}  // namespace detail

/// Trains `cfg.n_trees` trees on the full dataset. Tree i draws from the
/// stream derive_seed(cfg.seed, i), so the model does not depend on the
/// thread count.
inline ExtraTreesModel train(std::span<const FeatureArray> x, std::span<const int> y,
                             const TrainConfig& cfg) {
  validate(cfg);
  if (x.empty()) throw DataError("train: empty training set");
  if (x.size() != y.size()) throw DataError("train: feature/label count mismatch");
  if (x.size() > std::numeric_limits<std::uint32_t>::max()) throw DataError("train: too many rows");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] < 0 || y[i] >= static_cast<int>(kNumClasses)) {
      throw DataError("train: label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                      " outside 0.." + std::to_string(kNumClasses - 1));
    }
    for (double v : x[i]) {
      if (!std::isfinite(v)) throw DataError("train: non-finite feature at row " + std::to_string(i));
    }
  }

  std::vector<Tree> trees(cfg.n_trees);
  unsigned threads = cfg.n_threads ? cfg.n_threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.n_trees));
  auto work = [&](unsigned worker) {
    for (std::size_t i = worker; i < cfg.n_trees; i += threads) {
      trees[i] = detail::grow_tree(x, y, cfg, Rng(derive_seed(cfg.seed, i)));
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  return ExtraTreesModel(std::move(trees), cfg);
}

}  // namespace dyngrasp
