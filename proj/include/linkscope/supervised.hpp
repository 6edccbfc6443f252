#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "linkscope/kernel.hpp"
#include "linkscope/linalg.hpp"
#include "linkscope/trace.hpp"

namespace linkscope {

// Labels as +1 (ANOMALOUS) / -1 (NORMAL).
Vector signed_labels(std::span<const Label> y);

// ---------------------------------------------------------------------------
// L2 logistic regression

struct LogRegParams {
  double C = 1.0;
  double tol = 1e-4;
  std::size_t max_iterations = 1000;
};

struct LogRegModel {
  Vector weights;
  double bias = 0.0;
  double C = 1.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Minimises sum_i log(1 + exp(-y_i (w.x_i + b))) + |w|^2 / (2C) with L-BFGS;
// the bias is not penalised. Single-class labels throw TrainingError.
LogRegModel train_logreg(const Matrix& x, std::span<const Label> y, const LogRegParams& params = {});

// The training objective at (weights, bias).
double logreg_objective(const Vector& weights, double bias, double C, const Matrix& x, std::span<const Label> y);

Vector decision_function(const LogRegModel& m, const Matrix& x);
Vector predict_proba(const LogRegModel& m, const Matrix& x);  // P(ANOMALOUS)
std::vector<Label> predict(const LogRegModel& m, const Matrix& x);

// ---------------------------------------------------------------------------
// Bagged CART forest

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::array<double, 2> counts{};  // bootstrap-weighted NORMAL / ANOMALOUS counts
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  Label predict(const Eigen::Ref<const RowVector>& x) const;
  std::size_t depth() const;
};

struct ForestParams {
  std::size_t n_estimators = 10;
  std::uint64_t seed = 0;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::vector<std::uint64_t> tree_seeds;
  std::size_t n_features = 0;
};

// Grows one Gini CART to purity on (x, y) with per-row weights (bootstrap counts).
DecisionTree grow_tree(const Matrix& x, std::span<const Label> y, std::span<const double> weights);

ForestModel train_forest(const Matrix& x, std::span<const Label> y, const ForestParams& params = {});
std::size_t anomalous_votes(const ForestModel& m, const Eigen::Ref<const RowVector>& x);
std::vector<Label> predict(const ForestModel& m, const Matrix& x);

// ---------------------------------------------------------------------------
// Soft-margin SVM

struct SvmParams {
  double C = 1.0;
  KernelKind kernel = KernelKind::Rbf;
  GammaMode gamma_mode = GammaMode::Scale;
  double tol = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(10^6, 100 n)
};

struct SvmModel {
  Matrix support_vectors;
  Vector dual_coef;  // y_i alpha_i
  double rho = 0.0;  // f(x) = sum dual_coef_i k(sv_i, x) - rho
  Kernel kernel;
  GammaMode gamma_mode = GammaMode::Scale;
  double C = 1.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Throws ConvergenceError<SvmModel> at the iteration cap.
SvmModel train_svm(const Matrix& x, std::span<const Label> y, const SvmParams& params = {});
Vector decision_function(const SvmModel& m, const Matrix& x);
std::vector<Label> predict(const SvmModel& m, const Matrix& x);

}  // namespace linkscope
