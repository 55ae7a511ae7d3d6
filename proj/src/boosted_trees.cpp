#include "boosted_trees.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace contmgr {

namespace {

constexpr int kModelVersion = 1;

double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

double point_logloss(double p, int y) {
  const double q = std::clamp(p, 1e-15, 1.0 - 1e-15);
  return y ? -std::log(q) : -std::log1p(-q);
}

}  // namespace

double DecisionTree::evaluate(std::span<const double> x) const {
  int k = 0;
  while (nodes[k].feature >= 0)
    k = x[nodes[k].feature] < nodes[k].threshold ? nodes[k].left : nodes[k].right;
  return nodes[k].value;
}

int DecisionTree::path_length(std::span<const double> x) const {
  int k = 0, visited = 0;
  while (nodes[k].feature >= 0) {
    ++visited;
    k = x[nodes[k].feature] < nodes[k].threshold ? nodes[k].left : nodes[k].right;
  }
  return visited;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].feature < 0) continue;
    d[nodes[k].left] = d[k] + 1;
    d[nodes[k].right] = d[k] + 1;
    best = std::max(best, d[k] + 1);
  }
  return best;
}

void DecisionTree::validate(int n_features) const {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) fail(ErrorCode::kFormat, "tree: no nodes");
  std::vector<int> parents(n, 0);
  for (int k = 0; k < n; ++k) {
    const Node& nd = nodes[k];
    if (nd.feature >= 0) {
      if (nd.feature >= n_features || !std::isfinite(nd.threshold) ||
          nd.left <= k || nd.right <= k || nd.left >= n || nd.right >= n ||
          nd.left == nd.right)
        fail(ErrorCode::kFormat, "tree: malformed internal node " + std::to_string(k));
      ++parents[nd.left];
      ++parents[nd.right];
    } else if (!std::isfinite(nd.value)) {
      fail(ErrorCode::kFormat, "tree: non-finite leaf value");
    }
  }
  for (int k = 1; k < n; ++k)
    if (parents[k] != 1) fail(ErrorCode::kFormat, "tree: node without unique parent");
}

double BoostedEnsemble::margin(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.evaluate(x);
  return base_score + learning_rate * sum;
}

double predict_proba(const BoostedEnsemble& model, std::span<const double> features) {
  require(static_cast<int>(features.size()) == model.n_features,
          "predict_proba: expected " + std::to_string(model.n_features) +
              " features, got " + std::to_string(features.size()));
  return sigmoid(model.margin(features));
}

void CMTrainConfig::validate() const {
  require(n_trees >= 1, "train_cm: n_trees must be >= 1");
  require(max_depth >= 1, "train_cm: max_depth must be >= 1");
  require(learning_rate > 0.0 && learning_rate <= 1.0,
          "train_cm: learning_rate must be in (0, 1]");
  require(min_samples_leaf >= 1, "train_cm: min_samples_leaf must be >= 1");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0,
          "train_cm: validation_fraction must be in [0, 1)");
  require(l2_regularization >= 0.0, "train_cm: l2_regularization must be >= 0");
}

namespace {

// Level-wise exact greedy builder over presorted feature columns.
class TreeBuilder {
 public:
  TreeBuilder(const std::vector<double>& x, std::size_t n, int n_features,
              const CMTrainConfig& cfg)
      : x_(x), n_(n), f_(n_features), cfg_(cfg), sorted_(n_features) {
    for (int f = 0; f < f_; ++f) {
      auto& idx = sorted_[f];
      idx.resize(n_);
      std::iota(idx.begin(), idx.end(), 0u);
      std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
        return value(a, f) < value(b, f);
      });
    }
    node_of_.resize(n_);
  }

  DecisionTree build(const std::vector<double>& g, const std::vector<double>& h,
                     std::vector<int>& leaf_of) {
    const double lambda = cfg_.l2_regularization;
    DecisionTree tree;
    tree.nodes.push_back({});
    std::fill(node_of_.begin(), node_of_.end(), 0);

    struct Stat { double G = 0, H = 0; long n = 0; };
    std::vector<int> level{0};
    std::vector<Stat> level_stat(1);
    for (std::size_t i = 0; i < n_; ++i) {
      level_stat[0].G += g[i];
      level_stat[0].H += h[i];
      ++level_stat[0].n;
    }
    // slot of each tree node within the current level, -1 if closed
    std::vector<int> slot_of(1, 0);

    for (int depth = 0; depth < cfg_.max_depth && !level.empty(); ++depth) {
      const std::size_t m = level.size();
      struct Best { double gain = 0; int feature = -1; double threshold = 0; };
      std::vector<Best> best(m);
      std::vector<Stat> acc(m);
      std::vector<double> last(m);
      for (int f = 0; f < f_; ++f) {
        std::fill(acc.begin(), acc.end(), Stat{});
        for (std::uint32_t i : sorted_[f]) {
          const int node = node_of_[i];
          if (node < 0) continue;
          const int s = slot_of[node];
          if (s < 0) continue;
          const double v = value(i, f);
          Stat& a = acc[s];
          if (a.n > 0 && v > last[s]) {
            const Stat& tot = level_stat[s];
            const long nr = tot.n - a.n;
            if (a.n >= cfg_.min_samples_leaf && nr >= cfg_.min_samples_leaf) {
              const double gr = tot.G - a.G, hr = tot.H - a.H;
              const double gain = a.G * a.G / (a.H + lambda) + gr * gr / (hr + lambda) -
                                  tot.G * tot.G / (tot.H + lambda);
              if (gain > best[s].gain) {
                double thr = 0.5 * (last[s] + v);
                if (!(thr > last[s] && thr <= v)) thr = v;
                best[s] = {gain, f, thr};
              }
            }
          }
          a.G += g[i];
          a.H += h[i];
          ++a.n;
          last[s] = v;
        }
      }

      std::vector<int> next_level;
      std::vector<Stat> next_stat;
      for (std::size_t s = 0; s < m; ++s) {
        const int node = level[s];
        if (best[s].feature < 0 || best[s].gain <= 1e-12) continue;
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        auto& nd = tree.nodes[node];
        nd.feature = best[s].feature;
        nd.threshold = best[s].threshold;
        nd.left = l;
        nd.right = l + 1;
        next_level.push_back(l);
        next_level.push_back(l + 1);
        next_stat.push_back({});
        next_stat.push_back({});
      }
      slot_of.assign(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < next_level.size(); ++s) slot_of[next_level[s]] = static_cast<int>(s);
      // route samples of split nodes to their children
      for (std::size_t i = 0; i < n_; ++i) {
        const int node = node_of_[i];
        const auto& nd = tree.nodes[node];
        if (nd.feature < 0) continue;
        const int child = value(i, nd.feature) < nd.threshold ? nd.left : nd.right;
        node_of_[i] = child;
        Stat& st = next_stat[slot_of[child]];
        st.G += g[i];
        st.H += h[i];
        ++st.n;
      }
      level = std::move(next_level);
      level_stat = std::move(next_stat);
    }

    // leaf values from the final assignment
    std::vector<double> G(tree.nodes.size(), 0.0), H(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      G[node_of_[i]] += g[i];
      H[node_of_[i]] += h[i];
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k)
      if (tree.nodes[k].feature < 0) tree.nodes[k].value = -G[k] / (H[k] + lambda);
    leaf_of.assign(node_of_.begin(), node_of_.end());
    return tree;
  }

 private:
  double value(std::size_t i, int f) const { return x_[i * f_ + f]; }

  const std::vector<double>& x_;
  std::size_t n_;
  int f_;
  const CMTrainConfig& cfg_;
  std::vector<std::vector<std::uint32_t>> sorted_;
  std::vector<int> node_of_;
};

}  // namespace

TrainedModel train_cm(const Dataset& data, const CMTrainConfig& config) {
  config.validate();
  const std::size_t n = data.size();
  long n_pos = 0;
  for (auto y : data.labels) n_pos += y;
  if (n_pos == 0 || n_pos == static_cast<long>(n))
    fail(ErrorCode::kInvalidArgument, "train_cm: degenerate labels (single class)");

  // deterministic holdout split
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, 0xC011));
  for (std::size_t k = n - 1; k > 0; --k) std::swap(order[k], order[rng.below(k + 1)]);
  const auto n_hold = static_cast<std::size_t>(std::floor(config.validation_fraction * n));
  std::vector<std::size_t> train_idx(order.begin() + n_hold, order.end());
  std::vector<std::size_t> hold_idx(order.begin(), order.begin() + n_hold);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(hold_idx.begin(), hold_idx.end());

  const std::size_t nt = train_idx.size();
  std::vector<double> x(nt * kPairFeatures);
  std::vector<std::uint8_t> y(nt);
  long tpos = 0;
  for (std::size_t k = 0; k < nt; ++k) {
    std::copy_n(data.row(train_idx[k]), kPairFeatures, x.begin() + k * kPairFeatures);
    y[k] = data.labels[train_idx[k]];
    tpos += y[k];
  }
  if (tpos == 0 || tpos == static_cast<long>(nt))
    fail(ErrorCode::kInvalidArgument, "train_cm: degenerate labels in training split");

  TrainedModel out;
  CMReport& rep = out.report;
  rep.n_train = static_cast<long>(nt);
  rep.n_holdout = static_cast<long>(n_hold);
  rep.positive_rate = static_cast<double>(tpos) / nt;
  rep.positive_weight = config.positive_class_weight > 0.0
                            ? config.positive_class_weight
                            : static_cast<double>(nt - tpos) / tpos;
  std::vector<double> w(nt);
  double wsum = 0.0;
  for (std::size_t k = 0; k < nt; ++k) {
    w[k] = y[k] ? rep.positive_weight : 1.0;
    wsum += w[k];
  }

  BoostedEnsemble& model = out.model;
  model.learning_rate = config.learning_rate;
  model.base_score = std::log(rep.positive_rate / (1.0 - rep.positive_rate));
  model.n_features = kPairFeatures;

  std::vector<double> margin(nt, model.base_score), g(nt), h(nt);
  auto weighted_loss = [&] {
    double s = 0.0;
    for (std::size_t k = 0; k < nt; ++k) s += w[k] * point_logloss(sigmoid(margin[k]), y[k]);
    return s / wsum;
  };
  rep.train_loss.push_back(weighted_loss());

  TreeBuilder builder(x, nt, kPairFeatures, config);
  std::vector<int> leaf_of;
  for (int t = 0; t < config.n_trees; ++t) {
    for (std::size_t k = 0; k < nt; ++k) {
      const double p = sigmoid(margin[k]);
      g[k] = w[k] * (p - y[k]);
      h[k] = std::max(w[k] * p * (1.0 - p), 1e-16);
    }
    DecisionTree tree = builder.build(g, h, leaf_of);
    for (std::size_t k = 0; k < nt; ++k)
      margin[k] += config.learning_rate * tree.nodes[leaf_of[k]].value;
    model.trees.push_back(std::move(tree));
    rep.train_loss.push_back(weighted_loss());
  }

  if (n_hold > 0) {
    Dataset hold;
    for (std::size_t k : hold_idx) {
      PairFeatures f;
      std::copy_n(data.row(k), kPairFeatures, f.begin());
      hold.add(f, data.labels[k]);
    }
    long hpos = 0;
    for (auto l : hold.labels) hpos += l;
    if (hpos > 0 && hpos < static_cast<long>(hold.size()))
      rep.holdout = evaluate_cm(model, hold);
  }
  return out;
}

double auc_score(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  long n_pos = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e + 1 < n && scores[idx[e + 1]] == scores[idx[k]]) ++e;
    const double avg_rank = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t q = k; q <= e; ++q)
      if (labels[idx[q]]) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    k = e + 1;
  }
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    fail(ErrorCode::kInvalidArgument, "auc: undefined for single-class labels");
  return (rank_sum_pos - 0.5 * n_pos * (n_pos + 1.0)) /
         (static_cast<double>(n_pos) * n_neg);
}

double log_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  require(probs.size() == labels.size() && !probs.empty(), "logloss: bad input");
  double s = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) s += point_logloss(probs[k], labels[k]);
  return s / probs.size();
}

CMMetrics evaluate_scores(std::span<const double> probs,
                          std::span<const std::uint8_t> labels, double target_recall) {
  CMMetrics m;
  m.target_recall = target_recall;
  m.auc = auc_score(probs, labels);
  m.logloss = log_loss(probs, labels);
  // Walk thresholds from high to low until recall reaches the target.
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return probs[a] > probs[b]; });
  long total_pos = 0;
  for (auto l : labels) total_pos += l;
  long tp = 0, taken = 0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e < idx.size() && probs[idx[e]] == probs[idx[k]]) {
      tp += labels[idx[e]];
      ++taken;
      ++e;
    }
    k = e;
    if (static_cast<double>(tp) / total_pos >= target_recall) {
      m.precision_at_recall = static_cast<double>(tp) / taken;
      break;
    }
  }
  return m;
}

CMMetrics evaluate_cm(const BoostedEnsemble& model, const Dataset& holdout,
                      double target_recall) {
  std::vector<double> p(holdout.size());
  for (std::size_t k = 0; k < holdout.size(); ++k)
    p[k] = predict_proba(model, std::span<const double>(holdout.row(k), kPairFeatures));
  return evaluate_scores(p, holdout.labels, target_recall);
}

std::string cm_to_json(const BoostedEnsemble& model, const std::string& manifest_hash) {
  using nlohmann::json;
  json j;
  j["format"] = "contmgr-collision-model";
  j["version"] = kModelVersion;
  j["manifest"] = manifest_hash;
  j["base_score"] = model.base_score;
  j["learning_rate"] = model.learning_rate;
  j["n_features"] = model.n_features;
  j["trees"] = json::array();
  for (const auto& t : model.trees) {
    json jt = {{"feature", json::array()}, {"threshold", json::array()},
               {"left", json::array()},    {"right", json::array()},
               {"value", json::array()}};
    for (const auto& nd : t.nodes) {
      jt["feature"].push_back(nd.feature);
      jt["threshold"].push_back(nd.threshold);
      jt["left"].push_back(nd.left);
      jt["right"].push_back(nd.right);
      jt["value"].push_back(nd.value);
    }
    j["trees"].push_back(std::move(jt));
  }
  return j.dump() + "\n";
}

BoostedEnsemble cm_from_json(const std::string& text) {
  using nlohmann::json;
  BoostedEnsemble m;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "contmgr-collision-model")
      fail(ErrorCode::kFormat, "collision model: not a contmgr-collision-model document");
    if (j.at("version").get<int>() != kModelVersion)
      fail(ErrorCode::kFormat, "collision model: unsupported version " +
                                   std::to_string(j.at("version").get<int>()));
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.n_features = j.at("n_features").get<int>();
    for (const json& jt : j.at("trees")) {
      DecisionTree t;
      const auto feat = jt.at("feature").get<std::vector<int>>();
      const auto thr = jt.at("threshold").get<std::vector<double>>();
      const auto left = jt.at("left").get<std::vector<int>>();
      const auto right = jt.at("right").get<std::vector<int>>();
      const auto val = jt.at("value").get<std::vector<double>>();
      const std::size_t n = feat.size();
      if (thr.size() != n || left.size() != n || right.size() != n || val.size() != n)
        fail(ErrorCode::kFormat, "collision model: tree arrays differ in length");
      for (std::size_t k = 0; k < n; ++k)
        t.nodes.push_back({feat[k], thr[k], left[k], right[k], val[k]});
      t.validate(m.n_features);
      m.trees.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("collision model: malformed file: ") + e.what());
  }
  if (!std::isfinite(m.base_score) || !std::isfinite(m.learning_rate))
    fail(ErrorCode::kFormat, "collision model: non-finite header values");
  return m;
}

void save_cm(const BoostedEnsemble& model, const std::string& path,
             const std::string& manifest_hash) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write collision model '" + path + "'");
  out << cm_to_json(model, manifest_hash);
}

BoostedEnsemble load_cm(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingArtifact, "cannot read collision model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return cm_from_json(ss.str());
}

}  // namespace contmgr
