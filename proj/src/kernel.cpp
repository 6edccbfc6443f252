#include "linkscope/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "linkscope/error.hpp"

namespace linkscope {

std::string_view to_string(KernelKind k) { return k == KernelKind::Linear ? "linear" : "rbf"; }
std::string_view to_string(GammaMode g) { return g == GammaMode::Auto ? "auto" : "scale"; }

KernelKind parse_kernel(std::string_view text) {
  if (text == "linear") return KernelKind::Linear;
  if (text == "rbf") return KernelKind::Rbf;
  throw ArgumentError("unknown kernel '" + std::string(text) + "'");
}

GammaMode parse_gamma_mode(std::string_view text) {
  if (text == "auto") return GammaMode::Auto;
  if (text == "scale") return GammaMode::Scale;
  throw ArgumentError("unknown gamma mode '" + std::string(text) + "'");
}

double Kernel::operator()(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) const {
  if (kind == KernelKind::Linear) return a.dot(b);
  return std::exp(-gamma * (a - b).squaredNorm());
}

Matrix Kernel::cross(const Matrix& a, const Matrix& b) const {
  Matrix k = a * b.transpose();
  if (kind == KernelKind::Linear) return k;
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      k(i, j) = std::exp(-gamma * std::max(0.0, na(i) + nb(j) - 2.0 * k(i, j)));
  return k;
}

double resolve_gamma(GammaMode mode, const Matrix& x) {
  if (x.cols() == 0) throw ArgumentError("gamma needs at least one feature");
  const auto d = static_cast<double>(x.cols());
  if (mode == GammaMode::Auto) return 1.0 / d;
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return 1.0 / (d * (var > 0.0 ? var : 1.0));
}

namespace detail {

namespace {

constexpr double kTau = 1e-12;

bool in_up(double y, double a, double c) { return (y > 0 && a < c) || (y < 0 && a > 0); }
bool in_low(double y, double a, double c) { return (y > 0 && a > 0) || (y < 0 && a < c); }

}  // namespace

SmoResult solve_smo(const SmoProblem& prob, double tol, std::size_t max_iterations) {
  const Matrix& k = *prob.kernel;
  const auto n = prob.y.size();
  const Vector& y = prob.y;
  const Vector& c = prob.upper;
  Vector a = prob.alpha;
  // G = Q a + p, with Q_ij = y_i y_j K_ij.
  Vector g = prob.p + y.asDiagonal() * (k * (y.asDiagonal() * a));

  SmoResult res;
  for (;;) {
    // Second-order working set selection: i maximises the violation, j the
    // predicted objective decrease against i.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y(t) * g(t);
      if (in_up(y(t), a(t), c(t)) && v > gmax) {
        gmax = v;
        i = t;
      }
    }
    if (i >= 0) {
      const auto ki = k.row(i);
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < n; ++t) {
        if (!in_low(y(t), a(t), c(t))) continue;
        const double v = -y(t) * g(t);
        gmin = std::min(gmin, v);
        const double b = gmax - v;
        if (b <= 0.0) continue;
        double quad = k(i, i) + k(t, t) - 2.0 * y(i) * y(t) * ki(t);
        if (quad <= 0.0) quad = kTau;
        const double score = -(b * b) / quad;
        if (score < best) {
          best = score;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= max_iterations) break;
    ++res.iterations;

    const double old_ai = a(i), old_aj = a(j);
    const double kii = k(i, i), kjj = k(j, j), kij = k(i, j);
    if (y(i) != y(j)) {
      double quad = kii + kjj - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-g(i) - g(j)) / quad;
      const double diff = a(i) - a(j);
      a(i) += delta;
      a(j) += delta;
      if (diff > 0) {
        if (a(j) < 0) {
          a(j) = 0;
          a(i) = diff;
        }
      } else if (a(i) < 0) {
        a(i) = 0;
        a(j) = -diff;
      }
      if (diff > c(i) - c(j)) {
        if (a(i) > c(i)) {
          a(i) = c(i);
          a(j) = c(i) - diff;
        }
      } else if (a(j) > c(j)) {
        a(j) = c(j);
        a(i) = c(j) + diff;
      }
    } else {
      double quad = kii + kjj - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (g(i) - g(j)) / quad;
      const double sum = a(i) + a(j);
      a(i) -= delta;
      a(j) += delta;
      if (sum > c(i)) {
        if (a(i) > c(i)) {
          a(i) = c(i);
          a(j) = sum - c(i);
        }
      } else if (a(j) < 0) {
        a(j) = 0;
        a(i) = sum;
      }
      if (sum > c(j)) {
        if (a(j) > c(j)) {
          a(j) = c(j);
          a(i) = sum - c(j);
        }
      } else if (a(i) < 0) {
        a(i) = 0;
        a(j) = sum;
      }
    }
    const double di = a(i) - old_ai, dj = a(j) - old_aj;
    // G_t += Q_ti di + Q_tj dj
    g += (y.array() * (k.row(i).transpose().array() * (y(i) * di) + k.row(j).transpose().array() * (y(j) * dj))).matrix();
  }

  // Offset from free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * g(t);
    if (a(t) >= c(t)) {
      if (y(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a(t) <= 0.0) {
      if (y(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  if (free > 0) res.rho = sum_free / static_cast<double>(free);
  else if (!std::isfinite(ub)) res.rho = lb;
  else if (!std::isfinite(lb)) res.rho = ub;
  else res.rho = 0.5 * (ub + lb);
  res.objective = 0.5 * a.dot(g + prob.p);  // 0.5 a'Qa + p'a = 0.5 a'(G + p)
  res.alpha = std::move(a);
  res.gradient = std::move(g);
  return res;
}

}  // namespace detail

}  // namespace linkscope
