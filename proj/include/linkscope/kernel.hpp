#pragma once

#include <string_view>

#include "linkscope/linalg.hpp"

namespace linkscope {

enum class KernelKind { Linear, Rbf };
enum class GammaMode { Auto, Scale };

std::string_view to_string(KernelKind k);  // linear, rbf
std::string_view to_string(GammaMode g);   // auto, scale
KernelKind parse_kernel(std::string_view text);
GammaMode parse_gamma_mode(std::string_view text);

struct Kernel {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 1.0;  // unused by the linear kernel

  double operator()(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) const;
  // K(A, B) for every row pair.
  Matrix cross(const Matrix& a, const Matrix& b) const;
};

// AUTO = 1/d; SCALE = 1/(d * var(X)) over all entries of X, with var 0 read as 1.
double resolve_gamma(GammaMode mode, const Matrix& x);

namespace detail {

// Dual problem shared by the two-class and one-class SVMs:
//   min 0.5 a'Qa + p'a  s.t.  y'a = const, 0 <= a_i <= upper_i,
// with Q_ij = y_i y_j K_ij and y_i in {-1, +1}. The starting point must be feasible.
struct SmoProblem {
  const Matrix* kernel = nullptr;  // K, n x n
  Vector y;
  Vector p;
  Vector upper;
  Vector alpha;
};

struct SmoResult {
  Vector alpha;
  Vector gradient;
  double rho = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

// Sequential minimal optimization with maximal-violating-pair selection; stops
// when the KKT gap falls below tol.
SmoResult solve_smo(const SmoProblem& problem, double tol, std::size_t max_iterations);

}  // namespace detail

}  // namespace linkscope
