#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "collision_data.hpp"

namespace contmgr {

// Binary tree stored as a node array; node 0 is the root. A node with
// feature < 0 is a leaf. Samples with x[feature] < threshold go left.
struct DecisionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output (raw margin units)
  };
  std::vector<Node> nodes;

  double evaluate(std::span<const double> x) const;
  // Internal nodes visited on the path for x.
  int path_length(std::span<const double> x) const;
  int depth() const;
  void validate(int n_features) const;
};

struct BoostedEnsemble {
  std::vector<DecisionTree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;  // log-odds
  int n_features = kPairFeatures;

  double margin(std::span<const double> x) const;
};

// sigmoid(base_score + learning_rate * sum of tree outputs)
double predict_proba(const BoostedEnsemble& model, std::span<const double> features);

struct CMTrainConfig {
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  int min_samples_leaf = 20;
  double positive_class_weight = 0.0;  // <= 0: negatives / positives
  double validation_fraction = 0.2;
  double l2_regularization = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CMMetrics {
  double auc = 0.0;
  double logloss = 0.0;
  double precision_at_recall = 0.0;  // at recall >= target_recall
  double target_recall = 0.9;
};

struct CMReport {
  CMMetrics holdout;
  double positive_rate = 0.0;   // of the training split
  double positive_weight = 1.0; // weight actually applied
  long n_train = 0;
  long n_holdout = 0;
  std::vector<double> train_loss;  // weighted training logloss, per round (0 = prior)
};

struct TrainedModel {
  BoostedEnsemble model;
  CMReport report;
};

// Stagewise logistic boosting on gradient / hessian statistics with
// exact greedy split search. Holdout metrics are computed when the split
// leaves both classes in the holdout set; otherwise they stay zero.
TrainedModel train_cm(const Dataset& data, const CMTrainConfig& config);

// Rank-statistic AUC (ties averaged). Throws on single-class labels.
double auc_score(std::span<const double> scores, std::span<const std::uint8_t> labels);
double log_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);
CMMetrics evaluate_scores(std::span<const double> probs,
                          std::span<const std::uint8_t> labels,
                          double target_recall = 0.9);
CMMetrics evaluate_cm(const BoostedEnsemble& model, const Dataset& holdout,
                      double target_recall = 0.9);

std::string cm_to_json(const BoostedEnsemble& model,
                       const std::string& manifest_hash = {});
BoostedEnsemble cm_from_json(const std::string& text);
void save_cm(const BoostedEnsemble& model, const std::string& path,
             const std::string& manifest_hash = {});
BoostedEnsemble load_cm(const std::string& path);

}  // namespace contmgr
