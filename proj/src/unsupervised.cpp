#include "linkscope/unsupervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "linkscope/error.hpp"

namespace linkscope {

namespace {

void check_fit_input(const Matrix& x, Eigen::Index min_rows) {
  if (x.rows() < min_rows || x.cols() == 0)
    throw ArgumentError("need at least " + std::to_string(min_rows) + " training rows, got " + std::to_string(x.rows()));
  if (!x.allFinite()) throw ArgumentError("training features must be finite");
}

void check_arity(Eigen::Index got, Eigen::Index want) {
  if (got != want)
    throw ArgumentError("model expects " + std::to_string(want) + " features, got " + std::to_string(got));
}

std::vector<Label> threshold_labels(const Vector& s, double offset, bool above) {
  std::vector<Label> out(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const bool anomalous = above ? s(i) > offset : s(i) < offset;
    out[static_cast<std::size_t>(i)] = anomalous ? Label::Anomalous : Label::Normal;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// LOF

double minkowski(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b, int p) {
  if (p == 1) return (a - b).cwiseAbs().sum();
  if (p == 2) return (a - b).norm();
  return std::pow((a - b).cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

namespace {

constexpr double kReachFloor = 1e-10;

// Indices of the k nearest training points to x (ties by index), skipping `self`.
std::vector<Eigen::Index> nearest(const Vector& dist, std::size_t k, Eigen::Index self) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(dist.size()));
  for (Eigen::Index j = 0; j < dist.size(); ++j)
    if (j != self) idx.push_back(j);
  auto less = [&](Eigen::Index a, Eigen::Index b) { return dist(a) < dist(b) || (dist(a) == dist(b) && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
  idx.resize(k);
  return idx;
}

Vector distances_to(const Matrix& points, const Eigen::Ref<const RowVector>& x, int p) {
  Vector d(points.rows());
  for (Eigen::Index j = 0; j < points.rows(); ++j) d(j) = minkowski(points.row(j), x, p);
  return d;
}

double local_density(const Vector& dist, const std::vector<Eigen::Index>& nb, const Vector& k_distance) {
  double reach = 0.0;
  for (auto j : nb) reach += std::max(k_distance(j), dist(j));
  return 1.0 / (reach / static_cast<double>(nb.size()) + kReachFloor);
}

double neighbour_density(const std::vector<Eigen::Index>& nb, const Vector& lrd) {
  double s = 0.0;
  for (auto j : nb) s += lrd(j);
  return s / static_cast<double>(nb.size());
}

}  // namespace

LofModel train_lof(const Matrix& x, const LofParams& params) {
  check_fit_input(x, 2);
  if (params.n_neighbors == 0) throw ArgumentError("LOF n_neighbors must be positive");
  if (params.p != 1 && params.p != 2) throw ArgumentError("LOF Minkowski p must be 1 or 2");
  const auto n = x.rows();
  LofModel m;
  m.points = x;
  m.k = std::min(params.n_neighbors, static_cast<std::size_t>(n - 1));
  m.p = params.p;
  m.offset = params.offset;

  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) dist(i, j) = dist(j, i) = minkowski(x.row(i), x.row(j), m.p);
  }
  std::vector<std::vector<Eigen::Index>> nbs(static_cast<std::size_t>(n));
  m.k_distance.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector row = dist.row(i).transpose();
    nbs[static_cast<std::size_t>(i)] = nearest(row, m.k, i);
    m.k_distance(i) = row(nbs[static_cast<std::size_t>(i)].back());
  }
  m.lrd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    m.lrd(i) = local_density(dist.row(i).transpose(), nbs[static_cast<std::size_t>(i)], m.k_distance);
  m.training_scores.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    m.training_scores(i) = neighbour_density(nbs[static_cast<std::size_t>(i)], m.lrd) / m.lrd(i);
  return m;
}

Vector lof_scores(const LofModel& m, const Matrix& x) {
  Vector out(x.rows());
  if (x.rows() == 0) return out;
  check_arity(x.cols(), m.points.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector d = distances_to(m.points, x.row(i), m.p);
    const auto nb = nearest(d, m.k, -1);
    out(i) = neighbour_density(nb, m.lrd) / local_density(d, nb, m.k_distance);
  }
  return out;
}

std::vector<Label> predict(const LofModel& m, const Matrix& x) { return threshold_labels(lof_scores(m, x), m.offset, true); }

// ---------------------------------------------------------------------------
// Isolation forest

double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  double h = 0.0;
  for (std::size_t i = 1; i < n; ++i) h += 1.0 / static_cast<double>(i);
  const auto nd = static_cast<double>(n);
  return 2.0 * h - 2.0 * (nd - 1.0) / nd;
}

double IsolationTree::path_length(const Eigen::Ref<const RowVector>& x) const {
  std::size_t i = 0;
  double depth = 0.0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x(n.feature) < n.split ? n.left : n.right);
    depth += 1.0;
  }
  return depth + average_path_length(nodes[i].size);
}

std::size_t IsolationTree::height() const {
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

IsolationTree grow_isolation_tree(const Matrix& x, std::vector<Eigen::Index> rows, std::size_t limit,
                                  std::mt19937_64& rng) {
  IsolationTree tree;
  struct Pending {
    std::size_t node;
    std::size_t depth;
    std::vector<Eigen::Index> rows;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, 0, std::move(rows)});
  std::vector<Eigen::Index> candidates;
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    tree.nodes[cur.node].size = static_cast<std::uint32_t>(cur.rows.size());
    if (cur.depth >= limit || cur.rows.size() <= 1) continue;
    candidates.clear();
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      const double first = x(cur.rows.front(), f);
      for (auto r : cur.rows)
        if (x(r, f) != first) {
          candidates.push_back(f);
          break;
        }
    }
    if (candidates.empty()) continue;
    const auto f = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    double lo = x(cur.rows.front(), f), hi = lo;
    for (auto r : cur.rows) {
      lo = std::min(lo, x(r, f));
      hi = std::max(hi, x(r, f));
    }
    // Split in (lo, hi] so both sides are non-empty under "left iff x < split".
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double split = hi - u * (hi - lo);
    if (!(split > lo)) split = hi;
    Pending left{tree.nodes.size(), cur.depth + 1, {}}, right{tree.nodes.size() + 1, cur.depth + 1, {}};
    for (auto r : cur.rows) (x(r, f) < split ? left.rows : right.rows).push_back(r);
    auto& node = tree.nodes[cur.node];
    node.feature = static_cast<std::int32_t>(f);
    node.split = split;
    node.left = static_cast<std::int32_t>(left.node);
    node.right = static_cast<std::int32_t>(right.node);
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return tree;
}

}  // namespace

IForestModel train_iforest(const Matrix& x, const IForestParams& params) {
  check_fit_input(x, 2);
  if (params.n_estimators == 0) throw ArgumentError("isolation forest needs at least one tree");
  if (params.max_samples < 2) throw ArgumentError("isolation forest max_samples must be at least 2");
  const auto n = static_cast<std::size_t>(x.rows());
  IForestModel m;
  m.psi = std::min(params.max_samples, n);
  m.n_features = static_cast<std::size_t>(x.cols());
  m.offset = params.offset;
  const auto limit = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(m.psi))));
  std::vector<Eigen::Index> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t t = 0; t < params.n_estimators; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    for (std::size_t k = 0; k < m.psi; ++k)
      std::swap(all[k], all[std::uniform_int_distribution<std::size_t>(k, n - 1)(rng)]);
    std::vector<Eigen::Index> sample(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m.psi));
    std::sort(sample.begin(), sample.end());
    m.trees.push_back(grow_isolation_tree(x, std::move(sample), limit, rng));
  }
  return m;
}

double mean_path_length(const IForestModel& m, const Eigen::Ref<const RowVector>& x) {
  check_arity(x.size(), static_cast<Eigen::Index>(m.n_features));
  double total = 0.0;
  for (const auto& t : m.trees) total += t.path_length(x);
  return total / static_cast<double>(m.trees.size());
}

double iforest_score(const IForestModel& m, const Eigen::Ref<const RowVector>& x) {
  return std::exp2(-mean_path_length(m, x) / average_path_length(m.psi));
}

Vector iforest_scores(const IForestModel& m, const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = iforest_score(m, x.row(i));
  return out;
}

std::vector<Label> predict(const IForestModel& m, const Matrix& x) {
  return threshold_labels(iforest_scores(m, x), m.offset, true);
}

// ---------------------------------------------------------------------------
// One-class SVM

OcSvmModel train_ocsvm(const Matrix& x, const OcSvmParams& params) {
  check_fit_input(x, 1);
  if (!(params.nu > 0.0 && params.nu <= 1.0)) throw ArgumentError("one-class SVM nu must lie in (0, 1]");
  const auto n = x.rows();
  OcSvmModel m;
  m.kernel = {params.kernel, params.kernel == KernelKind::Rbf ? resolve_gamma(params.gamma_mode, x) : 0.0};
  m.gamma_mode = params.gamma_mode;
  m.nu = params.nu;
  const Matrix k = m.kernel.cross(x, x);

  // Solved with box [0, 1] and sum nu n, then rescaled to sum 1.
  const double total = params.nu * static_cast<double>(n);
  detail::SmoProblem prob;
  prob.kernel = &k;
  prob.y = Vector::Ones(n);
  prob.p = Vector::Zero(n);
  prob.upper = Vector::Ones(n);
  prob.alpha = Vector::Zero(n);
  const auto whole = static_cast<Eigen::Index>(std::floor(total));
  for (Eigen::Index i = 0; i < std::min(whole, n); ++i) prob.alpha(i) = 1.0;
  if (whole < n) prob.alpha(whole) = total - static_cast<double>(whole);
  const std::size_t cap =
      params.max_iterations ? params.max_iterations : std::max<std::size_t>(1'000'000, 100 * static_cast<std::size_t>(n));
  const auto res = detail::solve_smo(prob, params.tol, cap);

  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < n; ++i)
    if (res.alpha(i) > 0.0) sv.push_back(i);
  m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  m.alpha.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t j = 0; j < sv.size(); ++j) {
    m.support_vectors.row(static_cast<Eigen::Index>(j)) = x.row(sv[j]);
    m.alpha(static_cast<Eigen::Index>(j)) = res.alpha(sv[j]) / total;
  }
  m.rho = res.rho / total;
  m.iterations = res.iterations;
  m.converged = res.converged;
  if (!res.converged)
    throw ConvergenceError<OcSvmModel>(
        "one-class SVM solver stopped after " + std::to_string(res.iterations) + " iterations", m);
  return m;
}

Vector ocsvm_decision(const OcSvmModel& m, const Matrix& x) {
  if (x.rows() == 0) return Vector(0);
  check_arity(x.cols(), m.support_vectors.cols());
  return (m.kernel.cross(x, m.support_vectors) * m.alpha).array() - m.rho;
}

std::vector<Label> predict(const OcSvmModel& m, const Matrix& x) {
  return threshold_labels(ocsvm_decision(m, x), 0.0, false);
}

}  // namespace linkscope
