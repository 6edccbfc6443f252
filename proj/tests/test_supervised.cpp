#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "linkscope/error.hpp"
#include "linkscope/injector.hpp"
#include "linkscope/representations.hpp"
#include "linkscope/supervised.hpp"
#include "test_util.hpp"

using namespace linkscope;

namespace {

// Deterministic 40 x 3 problem shared with the scikit-learn reference values below.
struct Problem {
  Matrix x;
  std::vector<Label> y;
};

Problem reference_problem() {
  Problem p{Matrix(40, 3), {}};
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 3; ++j) p.x(i, j) = std::sin(1.7 * i + 0.9 * j) * (1 + 0.1 * j) + std::cos(0.3 * i * j);
    const double s = p.x(i, 0) + 0.5 * p.x(i, 1) - 0.3 * p.x(i, 2) + 0.2 * std::sin(5.0 * i);
    p.y.push_back(s > 0 ? Label::Anomalous : Label::Normal);
  }
  return p;
}

Problem random_problem(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Problem p{test::random_matrix(n, d, seed), {}};
  Vector w = test::random_matrix(d, 1, seed + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = (p.x.row(i) * w)(0) + std::normal_distribution<double>(0.0, 0.3)(rng);
    p.y.push_back(s > 0 ? Label::Anomalous : Label::Normal);
  }
  if (std::count(p.y.begin(), p.y.end(), Label::Anomalous) == 0) p.y[0] = Label::Anomalous;
  if (std::count(p.y.begin(), p.y.end(), Label::Normal) == 0) p.y[0] = Label::Normal;
  return p;
}

double accuracy(const std::vector<Label>& a, const std::vector<Label>& b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / a.size();
}

// SVM dual objective sum(a) - 0.5 sum_ij a_i a_j y_i y_j K_ij.
double svm_dual(const Vector& alpha, const Vector& y, const Matrix& k) {
  const Vector ya = alpha.cwiseProduct(y);
  return alpha.sum() - 0.5 * ya.dot(k * ya);
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression

TEST(LogReg, MatchesScikitLearnCoefficients) {
  const auto p = reference_problem();
  struct Ref {
    double C;
    std::array<double, 3> w;
    double b;
  };
  // sklearn.linear_model.LogisticRegression(C=C, tol=1e-12, max_iter=100000)
  const std::vector<Ref> refs{
      {1.0, {1.8152409330731538, 1.0454129204435456, -0.6532518619041771}, 0.10705397230074963},
      {0.1, {0.5136067931064847, 0.4322474356181951, -0.23742567437427817}, 0.702329107581558},
      {100.0, {6.7966586243352385, 3.109731761198587, -1.7522820393263574}, -0.833513150998682},
  };
  for (const auto& r : refs) {
    LogRegParams params;
    params.C = r.C;
    params.tol = 1e-10;
    const auto m = train_logreg(p.x, p.y, params);
    EXPECT_TRUE(m.converged);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(m.weights(j), r.w[j], 1e-5) << r.C;
    EXPECT_NEAR(m.bias, r.b, 1e-5) << r.C;
  }
}

TEST(LogReg, SeparableOneDimensional) {
  Matrix x(20, 1);
  std::vector<Label> y;
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = i < 10 ? 0.0 : 10.0;
    y.push_back(i < 10 ? Label::Normal : Label::Anomalous);
  }
  LogRegParams params;
  params.C = 1e4;
  const auto m = train_logreg(x, y, params);
  EXPECT_EQ(accuracy(predict(m, x), y), 1.0);
  Matrix boundary(1, 1);
  boundary(0, 0) = -m.bias / m.weights(0);
  EXPECT_NEAR(predict_proba(m, boundary)(0), 0.5, 1e-6);
}

TEST(LogReg, ImprovesOnZeroProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_problem(30 + seed * 7, 1 + seed % 6, seed);
    for (double C : {1e-3, 1.0, 100.0}) {
      LogRegParams params;
      params.C = C;
      const auto m = train_logreg(p.x, p.y, params);
      const double at_zero = logreg_objective(Vector::Zero(p.x.cols()), 0.0, C, p.x, p.y);
      EXPECT_LE(logreg_objective(m.weights, m.bias, C, p.x, p.y), at_zero - 1e-8);
      EXPECT_EQ(m.weights.size(), p.x.cols());
    }
  }
}

TEST(LogReg, DecisionDependsOnlyOnScoreSign) {
  const auto p = reference_problem();
  const auto m = train_logreg(p.x, p.y);
  const Vector s = decision_function(m, p.x);
  const Vector prob = predict_proba(m, p.x);
  const auto labels = predict(m, p.x);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    EXPECT_EQ(labels[i] == Label::Anomalous, s(i) > 0);
    EXPECT_EQ(labels[i] == Label::Anomalous, prob(i) > 0.5);
    EXPECT_EQ(labels[i] == Label::Anomalous, std::tanh(s(i)) > 0);
  }
}

TEST(LogReg, TiesAndEdgeCases) {
  LogRegModel zero;
  zero.weights = Vector::Zero(3);
  const auto labels = predict(zero, test::random_matrix(5, 3, 1));
  for (auto l : labels) EXPECT_EQ(l, Label::Normal);
  EXPECT_TRUE(predict(zero, Matrix(0, 3)).empty());
  const std::vector<Label> one_class(5, Label::Normal);
  EXPECT_THROW(train_logreg(test::random_matrix(5, 3, 1), one_class), TrainingError);
}

TEST(LogReg, Deterministic) {
  const auto p = random_problem(80, 5, 3);
  const auto a = train_logreg(p.x, p.y);
  const auto b = train_logreg(p.x, p.y);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

// ---------------------------------------------------------------------------
// Forest

TEST(Forest, SolvesXor) {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  const std::vector<Label> y{Label::Normal, Label::Anomalous, Label::Anomalous, Label::Normal};
  ForestParams params;
  params.n_estimators = 50;
  params.seed = 3;
  const auto m = train_forest(x, y, params);
  EXPECT_EQ(predict(m, x), y);
}

TEST(Forest, PureTreeMemorizesTrainingData) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = random_problem(60, 4, seed);
    const std::vector<double> w(60, 1.0);
    const auto tree = grow_tree(p.x, p.y, w);
    for (Eigen::Index i = 0; i < p.x.rows(); ++i) EXPECT_EQ(tree.predict(p.x.row(i)), p.y[i]);
  }
}

TEST(Forest, NodeInvariantsAndVoteTotals) {
  const auto p = random_problem(120, 6, 11);
  ForestParams params;
  params.n_estimators = 20;
  params.seed = 5;
  const auto m = train_forest(p.x, p.y, params);
  ASSERT_EQ(m.trees.size(), 20u);
  for (const auto& t : m.trees)
    for (const auto& node : t.nodes) {
      if (node.feature >= 0) {
        EXPECT_TRUE(std::isfinite(node.threshold));
      } else {
        EXPECT_GT(node.counts[0] + node.counts[1], 0.0);
      }
    }
  const Matrix probe = test::random_matrix(30, 6, 12);
  const auto labels = predict(m, probe);
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    std::size_t normal = 0;
    for (const auto& t : m.trees) normal += t.predict(probe.row(i)) == Label::Normal;
    const auto anomalous = anomalous_votes(m, probe.row(i));
    EXPECT_EQ(normal + anomalous, 20u);
    EXPECT_EQ(labels[i] == Label::Anomalous, 2 * anomalous > 20);
  }
}

TEST(Forest, TieGoesToNormal) {
  Matrix x(2, 1);
  x << 0, 1;
  const std::vector<Label> y{Label::Normal, Label::Anomalous};
  // Two hand-made stumps that disagree everywhere.
  ForestModel m;
  m.n_features = 1;
  DecisionTree a, b;
  a.nodes.push_back({-1, 0.0, -1, -1, {1.0, 0.0}});
  b.nodes.push_back({-1, 0.0, -1, -1, {0.0, 1.0}});
  m.trees = {a, b};
  for (auto l : predict(m, x)) EXPECT_EQ(l, Label::Normal);
}

TEST(Forest, SingleClassGivesTrivialTrees) {
  const Matrix x = test::random_matrix(10, 2, 1);
  const std::vector<Label> y(10, Label::Anomalous);
  const auto m = train_forest(x, y);
  for (const auto& t : m.trees) EXPECT_EQ(t.nodes.size(), 1u);
  for (auto l : predict(m, test::random_matrix(4, 2, 2))) EXPECT_EQ(l, Label::Anomalous);
}

TEST(Forest, DeterministicPerSeed) {
  const auto p = random_problem(100, 5, 8);
  ForestParams params;
  params.seed = 99;
  const auto a = train_forest(p.x, p.y, params);
  const auto b = train_forest(p.x, p.y, params);
  ASSERT_EQ(a.trees.size(), b.trees.size());
  EXPECT_EQ(a.tree_seeds, b.tree_seeds);
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    ASSERT_EQ(a.trees[t].nodes.size(), b.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      EXPECT_EQ(a.trees[t].nodes[k].feature, b.trees[t].nodes[k].feature);
      EXPECT_EQ(a.trees[t].nodes[k].threshold, b.trees[t].nodes[k].threshold);
    }
  }
  EXPECT_TRUE(predict(a, Matrix(0, 5)).empty());
}

TEST(Forest, SuddenDRootSplitsBelowMinus85) {
  const auto labeled = inject(generate_synthetic(300, 4), AnomalySpec{AnomalyKind::SuddenD, 0.33, -95.0});
  std::vector<RssiTrace> traces;
  std::vector<Label> y;
  for (const auto& l : labeled) {
    traces.push_back(l.trace);
    y.push_back(l.label);
  }
  ForestParams params;
  params.seed = 1;
  const auto m = train_forest(featurize(traces, Representation::TimeValue), y, params);
  for (const auto& t : m.trees) {
    ASSERT_GE(t.nodes[0].feature, 0);
    EXPECT_LT(t.nodes[0].threshold, -85.0);
  }
}

// ---------------------------------------------------------------------------
// SVM

TEST(Svm, TwoPointMaxMargin) {
  Matrix x(2, 1);
  x << 0, 1;
  const std::vector<Label> y{Label::Normal, Label::Anomalous};
  SvmParams params;
  params.C = 1e3;
  params.kernel = KernelKind::Linear;
  const auto m = train_svm(x, y, params);
  // f(x) = w x - rho crosses zero at rho / w
  Matrix probe(2, 1);
  probe << 0, 1;
  const Vector f = decision_function(m, probe);
  const double w = f(1) - f(0);
  EXPECT_NEAR(-f(0) / w, 0.5, 1e-3);
}

TEST(Svm, MatchesScikitLearnDecisionValues) {
  const auto p = reference_problem();
  struct Ref {
    double C;
    KernelKind kernel;
    std::array<double, 5> f;
    std::size_t n_sv;
  };
  // sklearn.svm.SVC(C=C, kernel=kernel, gamma='scale', tol=1e-8).decision_function(X[:5])
  const std::vector<Ref> refs{
      {1.0, KernelKind::Rbf, {0.9999999888415586, 1.2238224159590392, 0.8077847357076892, 0.1141927219099903, 1.3048891326225012}, 19},
      {10.0, KernelKind::Linear, {3.8096007332954622, 9.080351499303704, 2.953232617404667, -0.022760837912237042, 7.613767742257901}, 10},
      {100.0, KernelKind::Rbf, {0.999999539717698, 4.683387893865872, 3.968097303570244, 1.0000032812456103, 6.328513581166042}, 13},
  };
  for (const auto& r : refs) {
    SvmParams params;
    params.C = r.C;
    params.kernel = r.kernel;
    params.gamma_mode = GammaMode::Scale;
    params.tol = 1e-8;
    const auto m = train_svm(p.x, p.y, params);
    EXPECT_TRUE(m.converged);
    const Vector f = decision_function(m, p.x.topRows(5));
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(f(i), r.f[i], 1e-5) << r.C;
    EXPECT_EQ(static_cast<std::size_t>(m.support_vectors.rows()), r.n_sv);
  }
}

TEST(Svm, DualBeatsRandomFeasiblePoints) {
  const auto p = random_problem(60, 3, 21);
  const Vector y = signed_labels(p.y);
  std::mt19937_64 rng(5);
  for (auto kernel : {KernelKind::Linear, KernelKind::Rbf}) {
    SvmParams params;
    params.C = 2.0;
    params.kernel = kernel;
    const auto m = train_svm(p.x, p.y, params);
    const Matrix k = m.kernel.cross(p.x, p.x);
    // Recover alpha per training row from the support vectors.
    Vector alpha = Vector::Zero(p.x.rows());
    for (Eigen::Index s = 0; s < m.support_vectors.rows(); ++s)
      for (Eigen::Index i = 0; i < p.x.rows(); ++i)
        if (p.x.row(i) == m.support_vectors.row(s)) alpha(i) = std::abs(m.dual_coef(s));
    EXPECT_NEAR(alpha.dot(y), 0.0, 1e-9);
    EXPECT_LE(alpha.maxCoeff(), params.C + 1e-12);
    const double best = svm_dual(alpha, y, k);
    std::uniform_real_distribution<double> u(0.0, params.C);
    for (int trial = 0; trial < 1000; ++trial) {
      Vector a(p.x.rows());
      for (auto& v : a) v = u(rng);
      // Shrink the heavier class so that y'a = 0.
      double pos = 0, neg = 0;
      for (Eigen::Index i = 0; i < a.size(); ++i) (y(i) > 0 ? pos : neg) += a(i);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (y(i) > 0 && pos > neg) a(i) *= neg / pos;
        if (y(i) < 0 && neg > pos) a(i) *= pos / neg;
      }
      ASSERT_NEAR(a.dot(y), 0.0, 1e-9);
      EXPECT_GE(best, svm_dual(a, y, k) - 1e-9);
    }
  }
}

TEST(Svm, FreeSupportVectorsSitOnTheMargin) {
  const auto p = random_problem(80, 4, 31);
  SvmParams params;
  params.C = 5.0;
  params.tol = 1e-6;
  const auto m = train_svm(p.x, p.y, params);
  const Vector f = decision_function(m, m.support_vectors);
  std::size_t free_count = 0;
  for (Eigen::Index s = 0; s < m.dual_coef.size(); ++s) {
    const double a = std::abs(m.dual_coef(s));
    EXPECT_LE(a, params.C + 1e-12);
    if (a > 1e-8 && a < params.C - 1e-8) {
      ++free_count;
      EXPECT_NEAR(std::abs(f(s)), 1.0, 1e-3);
      EXPECT_EQ(f(s) > 0, m.dual_coef(s) > 0);
    }
  }
  EXPECT_GT(free_count, 0u);
}

TEST(Svm, KernelIdentityAndGamma) {
  const Matrix x = test::random_matrix(20, 5, 3, 4.0);
  const Kernel rbf{KernelKind::Rbf, 0.7};
  for (Eigen::Index i = 0; i < x.rows(); ++i) EXPECT_EQ(rbf(x.row(i), x.row(i)), 1.0);
  const Matrix k = rbf.cross(x, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) EXPECT_NEAR(k(i, i), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(resolve_gamma(GammaMode::Auto, x), 0.2);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  EXPECT_DOUBLE_EQ(resolve_gamma(GammaMode::Scale, x), 1.0 / (5 * var));
  EXPECT_DOUBLE_EQ(resolve_gamma(GammaMode::Scale, Matrix::Constant(3, 2, 4.0)), 0.5);
}

TEST(Svm, IterationCapCarriesBestModel) {
  const auto p = random_problem(60, 3, 41);
  SvmParams params;
  params.C = 100.0;
  params.max_iterations = 3;
  try {
    train_svm(p.x, p.y, params);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError<SvmModel>& e) {
    EXPECT_FALSE(e.best_so_far().converged);
    EXPECT_EQ(e.best_so_far().iterations, 3u);
    const Vector f = decision_function(e.best_so_far(), p.x);
    EXPECT_TRUE(f.allFinite());
  }
}

TEST(Svm, EdgeCasesAndDeterminism) {
  const auto p = random_problem(50, 3, 51);
  const auto a = train_svm(p.x, p.y);
  const auto b = train_svm(p.x, p.y);
  EXPECT_EQ(a.dual_coef, b.dual_coef);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_TRUE(predict(a, Matrix(0, 3)).empty());
  EXPECT_THROW(train_svm(p.x, std::vector<Label>(50, Label::Normal)), TrainingError);
  EXPECT_GE(accuracy(predict(a, p.x), p.y), 0.8);
}
