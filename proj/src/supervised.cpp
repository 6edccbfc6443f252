#include "linkscope/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "linkscope/error.hpp"

namespace linkscope {

Vector signed_labels(std::span<const Label> y) {
  Vector out(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i)) = y[i] == Label::Anomalous ? 1.0 : -1.0;
  return out;
}

namespace {

void check_training(const Matrix& x, std::span<const Label> y, bool need_both_classes) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw ArgumentError("feature rows (" + std::to_string(x.rows()) + ") and labels (" + std::to_string(y.size()) +
                        ") differ");
  if (x.rows() == 0 || x.cols() == 0) throw ArgumentError("empty training set");
  if (!x.allFinite()) throw ArgumentError("training features must be finite");
  if (need_both_classes) {
    const auto anomalous = std::count(y.begin(), y.end(), Label::Anomalous);
    if (anomalous == 0 || anomalous == static_cast<std::ptrdiff_t>(y.size()))
      throw TrainingError("training labels contain a single class");
  }
}

void check_arity(Eigen::Index got, std::size_t want) {
  if (static_cast<std::size_t>(got) != want)
    throw ArgumentError("model expects " + std::to_string(want) + " features, got " + std::to_string(got));
}

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::vector<Label> labels_from_scores(const Vector& s) {
  std::vector<Label> out(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i)
    out[static_cast<std::size_t>(i)] = s(i) > 0.0 ? Label::Anomalous : Label::Normal;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression

double logreg_objective(const Vector& w, double b, double C, const Matrix& x, std::span<const Label> y) {
  const Vector ys = signed_labels(y);
  const Vector z = (x * w).array() + b;
  double f = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) f += softplus(-ys(i) * z(i));
  return f + w.squaredNorm() / (2.0 * C);
}

namespace {

struct LogisticObjective {
  const Matrix& x;
  Vector y;
  double C;

  // theta = [w; b]
  double operator()(const Vector& theta, Vector& grad) const {
    const auto d = x.cols();
    const auto w = theta.head(d);
    const double b = theta(d);
    const Vector z = (x * w).array() + b;
    Vector r(z.size());  // dLoss/dz
    double f = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double m = -y(i) * z(i);
      f += softplus(m);
      r(i) = -y(i) * sigmoid(m);
    }
    f += w.squaredNorm() / (2.0 * C);
    grad.resize(d + 1);
    grad.head(d) = x.transpose() * r + w / C;
    grad(d) = r.sum();
    return f;
  }
};

}  // namespace

LogRegModel train_logreg(const Matrix& x, std::span<const Label> y, const LogRegParams& params) {
  check_training(x, y, true);
  if (!(params.C > 0.0)) throw ArgumentError("logistic regression C must be positive");
  const LogisticObjective obj{x, signed_labels(y), params.C};
  const auto dim = x.cols() + 1;
  const double n = static_cast<double>(x.rows());
  constexpr std::size_t kMemory = 10;

  Vector theta = Vector::Zero(dim), grad, new_grad;
  double f = obj(theta, grad);
  std::deque<std::pair<Vector, Vector>> history;  // (s, y) pairs
  LogRegModel m;
  m.C = params.C;
  // Tolerance applies to the gradient of the per-sample mean objective, which
  // has the same minimiser as the summed one.
  auto small = [&](const Vector& g) { return g.cwiseAbs().maxCoeff() / n <= params.tol; };

  while (!(m.converged = small(grad)) && m.iterations < params.max_iterations) {
    ++m.iterations;
    // Two-loop recursion.
    Vector q = grad;
    std::vector<double> alphas(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& [s, yv] = history[k];
      alphas[k] = s.dot(q) / yv.dot(s);
      q -= alphas[k] * yv;
    }
    if (!history.empty()) {
      const auto& [s, yv] = history.back();
      q *= s.dot(yv) / yv.squaredNorm();
    } else {
      q /= std::max(1.0, grad.norm());
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& [s, yv] = history[k];
      const double beta = yv.dot(q) / yv.dot(s);
      q += s * (alphas[k] - beta);
    }
    Vector dir = -q;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      history.clear();
      dir = -grad;
      slope = -grad.squaredNorm();
    }
    // Backtracking line search with the Armijo condition.
    double step = 1.0, new_f = f;
    Vector next;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      next = theta + step * dir;
      new_f = obj(next, new_grad);
      if (std::isfinite(new_f) && new_f <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Vector s = next - theta, yv = new_grad - grad;
    if (s.dot(yv) > 1e-12 * yv.squaredNorm()) {
      history.emplace_back(std::move(s), std::move(yv));
      if (history.size() > kMemory) history.pop_front();
    }
    theta = std::move(next);
    grad = new_grad;
    f = new_f;
  }
  m.weights = theta.head(x.cols());
  m.bias = theta(x.cols());
  return m;
}

Vector decision_function(const LogRegModel& m, const Matrix& x) {
  if (x.rows() == 0) return Vector(0);
  check_arity(x.cols(), static_cast<std::size_t>(m.weights.size()));
  return (x * m.weights).array() + m.bias;
}

Vector predict_proba(const LogRegModel& m, const Matrix& x) {
  return decision_function(m, x).unaryExpr([](double v) { return sigmoid(v); });
}

std::vector<Label> predict(const LogRegModel& m, const Matrix& x) { return labels_from_scores(decision_function(m, x)); }

// ---------------------------------------------------------------------------
// Decision trees

Label DecisionTree::predict(const Eigen::Ref<const RowVector>& x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x(n.feature) <= n.threshold ? n.left : n.right);
  }
  const auto& c = nodes[i].counts;
  return c[1] > c[0] ? Label::Anomalous : Label::Normal;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

double gini(double n0, double n1) {
  const double t = n0 + n1;
  if (t <= 0) return 0.0;
  const double p0 = n0 / t, p1 = n1 / t;
  return 1.0 - p0 * p0 - p1 * p1;
}

}  // namespace

DecisionTree grow_tree(const Matrix& x, std::span<const Label> y, std::span<const double> weights) {
  check_training(x, y, false);
  if (weights.size() != y.size()) throw ArgumentError("tree weights and labels differ in length");
  DecisionTree tree;
  const Eigen::MatrixXd xc = x;  // column-major copy for the per-feature scans
  const auto features = static_cast<std::size_t>(x.cols());
  // Each pending node keeps its rows sorted by (value, row) for every feature;
  // children inherit the order through a stable partition.
  using Orders = std::vector<std::vector<Eigen::Index>>;
  struct Pending {
    std::size_t node;
    Orders order;
  };
  std::vector<Eigen::Index> all;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] > 0) all.push_back(static_cast<Eigen::Index>(i));
  if (all.empty()) throw ArgumentError("tree needs a row with positive weight");

  Orders root(features, all);
  for (std::size_t f = 0; f < features; ++f) {
    const auto col = static_cast<Eigen::Index>(f);
    std::sort(root[f].begin(), root[f].end(), [&](Eigen::Index a, Eigen::Index b) {
      return xc(a, col) < xc(b, col) || (xc(a, col) == xc(b, col) && a < b);
    });
  }
  tree.nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, std::move(root)});
  std::vector<char> goes_left(weights.size(), 0);
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const auto& rows = cur.order[0];
    std::array<double, 2> counts{};
    for (auto r : rows) counts[y[static_cast<std::size_t>(r)] == Label::Anomalous] += weights[static_cast<std::size_t>(r)];
    tree.nodes[cur.node].counts = counts;
    if (counts[0] == 0 || counts[1] == 0) continue;

    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    for (std::size_t f = 0; f < features; ++f) {
      const auto col = static_cast<Eigen::Index>(f);
      const auto& sorted = cur.order[f];
      if (xc(sorted.front(), col) == xc(sorted.back(), col)) continue;
      std::array<double, 2> left{};
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        const auto r = static_cast<std::size_t>(sorted[k]);
        left[y[r] == Label::Anomalous] += weights[r];
        const double a = xc(sorted[k], col), b = xc(sorted[k + 1], col);
        if (a == b) continue;
        const double r0 = counts[0] - left[0], r1 = counts[1] - left[1];
        const double impurity = (left[0] + left[1]) * gini(left[0], left[1]) + (r0 + r1) * gini(r0, r1);
        if (impurity < best) {
          best = impurity;
          best_feature = static_cast<std::int32_t>(f);
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) continue;  // identical feature vectors with mixed labels

    for (auto r : rows) goes_left[static_cast<std::size_t>(r)] = xc(r, best_feature) <= best_threshold;
    Pending left{tree.nodes.size(), Orders(features)}, right{tree.nodes.size() + 1, Orders(features)};
    for (std::size_t f = 0; f < features; ++f) {
      for (auto r : cur.order[f]) (goes_left[static_cast<std::size_t>(r)] ? left : right).order[f].push_back(r);
      std::vector<Eigen::Index>().swap(cur.order[f]);
    }
    auto& node = tree.nodes[cur.node];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = static_cast<std::int32_t>(left.node);
    node.right = static_cast<std::int32_t>(right.node);
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return tree;
}

ForestModel train_forest(const Matrix& x, std::span<const Label> y, const ForestParams& params) {
  check_training(x, y, false);
  if (params.n_estimators == 0) throw ArgumentError("forest needs at least one tree");
  ForestModel m;
  m.n_features = static_cast<std::size_t>(x.cols());
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<double> weights(n);
  for (std::size_t t = 0; t < params.n_estimators; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 seeder(seq);
    const std::uint64_t tree_seed = seeder();
    std::mt19937_64 rng(tree_seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::fill(weights.begin(), weights.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) weights[pick(rng)] += 1.0;
    m.trees.push_back(grow_tree(x, y, weights));
    m.tree_seeds.push_back(tree_seed);
  }
  return m;
}

std::size_t anomalous_votes(const ForestModel& m, const Eigen::Ref<const RowVector>& x) {
  check_arity(x.size(), m.n_features);
  std::size_t votes = 0;
  for (const auto& t : m.trees) votes += t.predict(x) == Label::Anomalous;
  return votes;
}

std::vector<Label> predict(const ForestModel& m, const Matrix& x) {
  std::vector<Label> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  if (x.rows() > 0) check_arity(x.cols(), m.n_features);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.push_back(2 * anomalous_votes(m, x.row(i)) > m.trees.size() ? Label::Anomalous : Label::Normal);
  return out;
}

// ---------------------------------------------------------------------------
// SVM

SvmModel train_svm(const Matrix& x, std::span<const Label> y, const SvmParams& params) {
  check_training(x, y, true);
  if (!(params.C > 0.0)) throw ArgumentError("SVM C must be positive");
  const auto n = x.rows();
  SvmModel m;
  m.kernel = {params.kernel, params.kernel == KernelKind::Rbf ? resolve_gamma(params.gamma_mode, x) : 0.0};
  m.gamma_mode = params.gamma_mode;
  m.C = params.C;
  const Matrix k = m.kernel.cross(x, x);
  detail::SmoProblem prob;
  prob.kernel = &k;
  prob.y = signed_labels(y);
  prob.p = Vector::Constant(n, -1.0);
  prob.upper = Vector::Constant(n, params.C);
  prob.alpha = Vector::Zero(n);
  const std::size_t cap =
      params.max_iterations ? params.max_iterations : std::max<std::size_t>(1'000'000, 100 * static_cast<std::size_t>(n));
  const auto res = detail::solve_smo(prob, params.tol, cap);

  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < n; ++i)
    if (res.alpha(i) > 0.0) sv.push_back(i);
  m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  m.dual_coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k2 = 0; k2 < sv.size(); ++k2) {
    const auto i = sv[k2];
    m.support_vectors.row(static_cast<Eigen::Index>(k2)) = x.row(i);
    m.dual_coef(static_cast<Eigen::Index>(k2)) = prob.y(i) * res.alpha(i);
  }
  m.rho = res.rho;
  m.iterations = res.iterations;
  m.converged = res.converged;
  if (!res.converged)
    throw ConvergenceError<SvmModel>("SVM solver stopped after " + std::to_string(res.iterations) + " iterations", m);
  return m;
}

Vector decision_function(const SvmModel& m, const Matrix& x) {
  if (x.rows() == 0) return Vector(0);
  check_arity(x.cols(), static_cast<std::size_t>(m.support_vectors.cols()));
  if (m.support_vectors.rows() == 0) return Vector::Constant(x.rows(), -m.rho);
  return (m.kernel.cross(x, m.support_vectors) * m.dual_coef).array() - m.rho;
}

std::vector<Label> predict(const SvmModel& m, const Matrix& x) { return labels_from_scores(decision_function(m, x)); }

}  // namespace linkscope
