#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logfid/error.hpp"
#include "logfid/sequencer.hpp"

namespace logfid {

/// Occurrences of each subprocess id in [0, k).
std::vector<long> count_vector(std::span<const int> subprocess_ids, int k);

enum class Representation { CountVector, Phmm, CountVectorPhmm };

std::string to_string(Representation r);
Representation parse_representation(const std::string& name);

/// k, 1 or k + 1 features; the pHMM feature is the detector's normality score.
std::vector<double> fti_features(std::span<const int> subprocess_ids, int k, double phmm_score,
                                 Representation representation);

enum class ClassifierKind { LogisticRegression, DecisionTree, RandomForest };

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier(const std::string& name);

struct FtiOptions {
  ClassifierKind kind = ClassifierKind::LogisticRegression;
  std::uint64_t seed = 42;
  // logistic regression
  int max_iterations = 5000;
  double tolerance = 1e-6;     // on the gradient's largest component
  double inverse_l2 = 1.0;     // penalty is ||W||^2 / (2 * inverse_l2 * n)
  // trees
  int max_depth = 16;
  int min_leaf = 1;
  int n_trees = 100;
  bool bootstrap = true;
  bool all_features = false;   // forest split candidates: all features instead of sqrt(f)
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;  // class index, used at leaves
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int predict(std::span<const double> x) const;
  int depth() const;
};

struct LogisticModel {
  Eigen::MatrixXd weights;    // features x classes
  Eigen::RowVectorXd bias;    // classes
  Eigen::RowVectorXd mean;    // standardization
  Eigen::RowVectorXd scale;
  std::vector<double> loss_trace;
};

struct FtiModel {
  ClassifierKind kind = ClassifierKind::LogisticRegression;
  std::vector<std::string> classes;  // sorted
  int n_features = 0;
  LogisticModel logistic;
  std::vector<DecisionTree> trees;

  int predict_index(std::span<const double> x) const;
  const std::string& predict(std::span<const double> x) const;
};

/// Throws ConfigError with fewer than two classes or inconsistent rows.
FtiModel fit_fti(const std::vector<std::vector<double>>& features,
                 const std::vector<std::string>& labels, const FtiOptions& options);

struct FtiPrediction {
  std::string task_id;
  std::string predicted;
  std::string truth;  // empty when unknown
};

void write_predictions_csv(std::ostream& out, const std::vector<FtiPrediction>& rows);

}  // namespace logfid
