#pragma once

#include <cstdint>
#include <vector>

#include "linkscope/kernel.hpp"
#include "linkscope/linalg.hpp"
#include "linkscope/trace.hpp"

namespace linkscope {

// ---------------------------------------------------------------------------
// Local Outlier Factor

struct LofParams {
  std::size_t n_neighbors = 20;
  int p = 2;  // Minkowski exponent, 1 or 2
  double offset = 1.5;
};

struct LofModel {
  Matrix points;
  std::size_t k = 20;  // effective neighbour count, min(n_neighbors, n - 1)
  int p = 2;
  double offset = 1.5;
  Vector k_distance;
  Vector lrd;
  Vector training_scores;  // each training point scored against the others
};

double minkowski(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b, int p);

// Needs at least two points. Neighbour ties are broken by row index.
LofModel train_lof(const Matrix& x, const LofParams& params = {});
// Scores new points against the training set.
Vector lof_scores(const LofModel& m, const Matrix& x);
std::vector<Label> predict(const LofModel& m, const Matrix& x);

// ---------------------------------------------------------------------------
// Isolation forest

struct IsolationNode {
  std::int32_t feature = -1;  // -1 marks an external node
  double split = 0.0;         // left when x[feature] < split
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t size = 0;  // training points reaching an external node
};

struct IsolationTree {
  std::vector<IsolationNode> nodes;

  double path_length(const Eigen::Ref<const RowVector>& x) const;
  std::size_t height() const;
};

struct IForestParams {
  std::size_t n_estimators = 100;
  std::size_t max_samples = 256;  // psi = min(max_samples, n)
  std::uint64_t seed = 0;
  double offset = 0.5;
};

struct IForestModel {
  std::vector<IsolationTree> trees;
  std::size_t psi = 0;
  std::size_t n_features = 0;
  double offset = 0.5;
};

// Average unsuccessful-search path length in a binary search tree of n nodes:
// 2 H(n-1) - 2 (n-1) / n, with c(1) = 0 and c(2) = 1.
double average_path_length(std::size_t n);

IForestModel train_iforest(const Matrix& x, const IForestParams& params = {});
double mean_path_length(const IForestModel& m, const Eigen::Ref<const RowVector>& x);
double iforest_score(const IForestModel& m, const Eigen::Ref<const RowVector>& x);
Vector iforest_scores(const IForestModel& m, const Matrix& x);
std::vector<Label> predict(const IForestModel& m, const Matrix& x);

// ---------------------------------------------------------------------------
// One-class SVM

struct OcSvmParams {
  double nu = 0.5;
  KernelKind kernel = KernelKind::Rbf;
  GammaMode gamma_mode = GammaMode::Scale;
  double tol = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(10^6, 100 n)
};

struct OcSvmModel {
  Matrix support_vectors;
  Vector alpha;      // sum 1, each in [0, 1/(nu n)]
  double rho = 0.0;  // f(x) = sum alpha_i k(sv_i, x) - rho
  Kernel kernel;
  GammaMode gamma_mode = GammaMode::Scale;
  double nu = 0.5;
  std::size_t iterations = 0;
  bool converged = false;
};

// Throws ConvergenceError<OcSvmModel> at the iteration cap.
OcSvmModel train_ocsvm(const Matrix& x, const OcSvmParams& params = {});
Vector ocsvm_decision(const OcSvmModel& m, const Matrix& x);
std::vector<Label> predict(const OcSvmModel& m, const Matrix& x);

}  // namespace linkscope
