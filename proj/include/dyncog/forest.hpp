#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

// Random-forest regression for the dynamism score.

struct TrainingRow {
  std::vector<double> features;
  double label = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  double value = 0.0;      // leaf prediction
  int left = -1;
  int right = -1;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const std::vector<double>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const TreeNode& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

struct ForestParams {
  int trees = 100;
  int max_depth = 12;
  std::uint64_t seed = 0;
};

struct ForestModel {
  int n_features = 0;
  ForestParams params;
  std::vector<DecisionTree> trees;

  /// Mean of the tree predictions, unclamped.
  double predict_raw(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != n_features)
      throw Error(Errc::layout_mismatch, "feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                                             std::to_string(n_features));
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
  }

  double predict(const std::vector<double>& x) const { return std::clamp(predict_raw(x), 0.0, 5.0); }
};

namespace detail {

class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return state_ = splitmix64(state_); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

struct TreeBuilder {
  const std::vector<TrainingRow>& rows;
  int n_features;
  int max_depth;
  int mtry;
  SplitMix rng;
  DecisionTree tree;

  static double mean_label(const std::vector<TrainingRow>& rows, const std::vector<std::size_t>& idx) {
    double s = 0.0;
    for (auto i : idx) s += rows[i].label;
    return s / static_cast<double>(idx.size());
  }

  int build(std::vector<std::size_t> idx, int depth) {
    const int node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.back().value = mean_label(rows, idx);

    const bool pure = std::all_of(idx.begin(), idx.end(), [&](auto i) { return rows[i].label == rows[idx[0]].label; });
    if (depth >= max_depth || idx.size() < 2 || pure) return node;

    // Features in random order; the first `mtry` are candidates, and the
    // search continues past them only while no valid split has been found.
    std::vector<int> order(static_cast<std::size_t>(n_features));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = 0.0;
    std::vector<std::pair<double, double>> vals(idx.size());
    double total = 0.0, total_sq = 0.0;
    for (auto i : idx) {
      total += rows[i].label;
      total_sq += rows[i].label * rows[i].label;
    }
    const double n = static_cast<double>(idx.size());
    const double parent_sse = total_sq - total * total / n;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (static_cast<int>(k) >= mtry && best_feature >= 0) break;
      const int f = order[k];
      for (std::size_t j = 0; j < idx.size(); ++j) vals[j] = {rows[idx[j]].features[static_cast<std::size_t>(f)], rows[idx[j]].label};
      std::sort(vals.begin(), vals.end());
      double ls = 0.0, lsq = 0.0;
      for (std::size_t j = 0; j + 1 < vals.size(); ++j) {
        ls += vals[j].second;
        lsq += vals[j].second * vals[j].second;
        if (vals[j].first == vals[j + 1].first) continue;
        const double nl = static_cast<double>(j + 1), nr = n - nl;
        const double rs = total - ls, rsq = total_sq - lsq;
        const double sse = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
        const double gain = parent_sse - sse;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (vals[j].first + vals[j + 1].first);
        }
      }
    }
    if (best_feature < 0) return node;

    std::vector<std::size_t> left, right;
    for (auto i : idx)
      (rows[i].features[static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    tree.nodes[static_cast<std::size_t>(node)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(node)].threshold = best_threshold;
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    tree.nodes[static_cast<std::size_t>(node)].left = l;
    tree.nodes[static_cast<std::size_t>(node)].right = r;
    return node;
  }
};

}  // namespace detail

/// Trains a bagged forest. Rows are put in canonical order first and tree i
/// draws its bootstrap and feature orders from derive_seed(seed, "tree-i"),
/// so the model does not depend on the order the rows were supplied in.
inline ForestModel train_forest(std::vector<TrainingRow> rows, const ForestParams& params = {}) {
  if (rows.empty()) throw Error(Errc::empty_training_set, "no training rows");
  if (params.trees < 1 || params.max_depth < 0)
    throw Error(Errc::schema_violation, "forest needs >= 1 tree and max_depth >= 0");
  const std::size_t nf = rows.front().features.size();
  for (const auto& r : rows) {
    if (r.features.size() != nf) throw Error(Errc::layout_mismatch, "training rows differ in length");
    if (!(r.label >= 0.0 && r.label <= 5.0)) throw Error(Errc::schema_violation, "labels must lie in [0, 5]");
    for (double v : r.features)
      if (!std::isfinite(v)) throw Error(Errc::schema_violation, "non-finite feature value");
  }
  std::sort(rows.begin(), rows.end(), [](const TrainingRow& a, const TrainingRow& b) {
    if (a.features != b.features) return a.features < b.features;
    return a.label < b.label;
  });

  ForestModel model;
  model.n_features = static_cast<int>(nf);
  model.params = params;
  const int mtry = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(nf)))));
  for (int t = 0; t < params.trees; ++t) {
    detail::TreeBuilder b{rows, model.n_features, params.max_depth, mtry,
                          detail::SplitMix(derive_seed(params.seed, "tree-" + std::to_string(t))), {}};
    std::vector<std::size_t> sample(rows.size());
    for (auto& s : sample) s = b.rng.below(rows.size());
    std::sort(sample.begin(), sample.end());
    b.build(std::move(sample), 0);
    model.trees.push_back(std::move(b.tree));
  }
  return model;
}

// Persistence ------------------------------------------------------------------

namespace detail {

inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_node(const DecisionTree& t, int i, std::string& out) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.feature < 0) {
    out += "L " + exact(n.value) + "\n";
    return;
  }
  out += "S " + std::to_string(n.feature) + " " + exact(n.threshold) + " " + exact(n.value) + "\n";
  write_node(t, n.left, out);
  write_node(t, n.right, out);
}

inline int read_node(std::istringstream& in, DecisionTree& t, int n_features, int depth) {
  if (depth > 10000) throw Error(Errc::corrupt_asset, "forest tree too deep");
  std::string kind;
  if (!(in >> kind)) throw Error(Errc::corrupt_asset, "forest file truncated");
  const int node = static_cast<int>(t.nodes.size());
  t.nodes.push_back({});
  if (kind == "L") {
    if (!(in >> t.nodes.back().value)) throw Error(Errc::corrupt_asset, "bad leaf");
    return node;
  }
  if (kind != "S") throw Error(Errc::corrupt_asset, "unknown node kind '" + kind + "'");
  TreeNode n;
  if (!(in >> n.feature >> n.threshold >> n.value)) throw Error(Errc::corrupt_asset, "bad split");
  if (n.feature < 0 || n.feature >= n_features) throw Error(Errc::corrupt_asset, "split feature out of range");
  t.nodes[static_cast<std::size_t>(node)] = n;
  const int l = read_node(in, t, n_features, depth + 1);
  const int r = read_node(in, t, n_features, depth + 1);
  t.nodes[static_cast<std::size_t>(node)].left = l;
  t.nodes[static_cast<std::size_t>(node)].right = r;
  return node;
}

}  // namespace detail

inline std::string serialize_forest(const ForestModel& m) {
  std::string out = "dyncog-forest v1\n";
  out += "n_features " + std::to_string(m.n_features) + "\n";
  out += "seed " + std::to_string(m.params.seed) + "\n";
  out += "max_depth " + std::to_string(m.params.max_depth) + "\n";
  out += "trees " + std::to_string(m.trees.size()) + "\n";
  for (const auto& t : m.trees) {
    out += "tree\n";
    detail::write_node(t, 0, out);
  }
  return out;
}

inline ForestModel parse_forest(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version, key;
  if (!(in >> magic >> version) || magic != "dyncog-forest")
    throw Error(Errc::corrupt_asset, "not a forest model file");
  if (version != "v1") throw Error(Errc::corrupt_asset, "unsupported forest version " + version);
  ForestModel m;
  std::size_t count = 0;
  if (!(in >> key >> m.n_features) || key != "n_features" || m.n_features < 1 ||
      !(in >> key >> m.params.seed) || key != "seed" || !(in >> key >> m.params.max_depth) || key != "max_depth" ||
      !(in >> key >> count) || key != "trees")
    throw Error(Errc::corrupt_asset, "bad forest header");
  m.params.trees = static_cast<int>(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> key) || key != "tree") throw Error(Errc::corrupt_asset, "expected 'tree'");
    DecisionTree t;
    detail::read_node(in, t, m.n_features, 0);
    m.trees.push_back(std::move(t));
  }
  return m;
}

inline ForestModel load_forest(const std::filesystem::path& path) { return parse_forest(read_text_file(path)); }

// Rank statistics ----------------------------------------------------------------

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation of the average ranks; 0 when either side is constant.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(Errc::dimension_mismatch, "spearman needs equal sizes >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace dyncog
