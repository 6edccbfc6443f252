#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "linkscope/error.hpp"
#include "linkscope/unsupervised.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace linkscope;

namespace {

// Same deterministic 40 x 3 matrix as the supervised reference problem.
Matrix reference_points() {
  Matrix x(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = std::sin(1.7 * i + 0.9 * j) * (1 + 0.1 * j) + std::cos(0.3 * i * j);
  return x;
}

Matrix reference_queries() {
  Matrix q(4, 3);
  for (int i = 0; i < 4; ++i) q.row(i) << 0.1 * i - 0.5, std::cos(i), 0.3 * i;
  return q;
}

double harmonic(std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / i;
  return h;
}

Matrix uniform_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// LOF

TEST(Lof, MatchesScikitLearn) {
  const Matrix x = reference_points();
  const Matrix q = reference_queries();
  struct Ref {
    std::size_t k;
    int p;
    std::array<double, 5> train;
    std::array<double, 4> query;
  };
  // sklearn.neighbors.LocalOutlierFactor(n_neighbors=k, p=p, novelty=True, algorithm='brute'):
  // -negative_outlier_factor_[:5] and -score_samples(Q)
  const std::vector<Ref> refs{
      {5, 2, {1.5267241810880892, 1.0319377347411693, 0.97392980504631, 1.046271444653421, 1.0479446157377574},
       {1.2609929497211418, 1.0316289970990105, 0.9577048701479185, 0.9932326422630267}},
      {10, 1, {1.30281904466783, 0.9850396424992252, 0.9457400666140607, 0.9666494857031148, 0.9748524054163676},
       {1.0610859091765428, 1.0313830768063403, 1.0024570905467935, 1.0102662366034187}},
  };
  for (const auto& r : refs) {
    LofParams params;
    params.n_neighbors = r.k;
    params.p = r.p;
    const auto m = train_lof(x, params);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(m.training_scores(i), r.train[i], 1e-9);
    const Vector s = lof_scores(m, q);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(s(i), r.query[i], 1e-9);
  }
}

TEST(Lof, MatchesBruteForceReferenceProperty) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 12; ++round) {
    const std::size_t n = 10 + rng() % 191;
    const std::size_t d = 1 + rng() % 6;
    const std::size_t k = 1 + rng() % std::min<std::size_t>(n - 1, 40);
    const int p = 1 + static_cast<int>(rng() % 2);
    const Matrix x = test::random_matrix(n, d, rng());
    const Matrix q = test::random_matrix(15, d, rng(), 1.5);
    LofParams params;
    params.n_neighbors = k;
    params.p = p;
    const auto m = train_lof(x, params);
    const test::BruteLof ref(x, k, p);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(m.lrd(i), ref.lrd[i], 1e-9 * ref.lrd[i]);
      EXPECT_NEAR(m.training_scores(i), ref.score(x.row(i), static_cast<std::ptrdiff_t>(i)),
                  1e-9 * m.training_scores(i));
    }
    const Vector s = lof_scores(m, q);
    for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(s(i), ref.score(q.row(i)), 1e-9 * s(i));
  }
}

TEST(Lof, GridPlusFarPoint) {
  Matrix x(101, 2);
  for (int i = 0; i < 100; ++i) x.row(i) << i % 10, i / 10;
  x.row(100) << 104.5, 4.5;
  LofParams params;
  params.n_neighbors = 10;
  const auto m = train_lof(x, params);
  EXPECT_GT(m.training_scores(100), 2.0);
  EXPECT_LT(m.training_scores.head(100).maxCoeff(), 1.2);
  // sklearn LocalOutlierFactor(n_neighbors=10, algorithm='brute')
  EXPECT_NEAR(m.training_scores(100), 42.8659033924023, 1e-9);
  EXPECT_NEAR(m.training_scores.head(100).maxCoeff(), 1.127207127074137, 1e-9);
  const auto labels = predict(m, x.bottomRows(1));
  EXPECT_EQ(labels[0], Label::Anomalous);
}

TEST(Lof, DuplicateCloudScoresOne) {
  const Matrix x = Matrix::Constant(30, 3, 2.5);
  const auto m = train_lof(x, LofParams{5, 2, 1.5});
  for (Eigen::Index i = 0; i < 30; ++i) EXPECT_NEAR(m.training_scores(i), 1.0, 1e-9);
  EXPECT_NEAR(lof_scores(m, x.topRows(1))(0), 1.0, 1e-9);
  for (auto l : predict(m, x)) EXPECT_EQ(l, Label::Normal);
}

TEST(Lof, TranslationInvariant) {
  const Matrix x = test::random_matrix(80, 4, 3);
  const Matrix q = test::random_matrix(10, 4, 4);
  const RowVector shift = RowVector::LinSpaced(4, -50.0, 70.0);
  const auto a = train_lof(x, LofParams{10, 2, 1.5});
  const auto b = train_lof(x.rowwise() + shift, LofParams{10, 2, 1.5});
  EXPECT_LT((a.training_scores - b.training_scores).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((lof_scores(a, q) - lof_scores(b, q.rowwise() + shift)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Lof, NeighbourCountIsCapped) {
  const Matrix x = test::random_matrix(6, 2, 1);
  const auto m = train_lof(x, LofParams{80, 2, 1.5});
  EXPECT_EQ(m.k, 5u);
  EXPECT_THROW(train_lof(x.topRows(1)), ArgumentError);
  EXPECT_THROW(train_lof(x, LofParams{5, 3, 1.5}), ArgumentError);
}

// ---------------------------------------------------------------------------
// Isolation forest

TEST(IForest, AveragePathLengthFormula) {
  EXPECT_EQ(average_path_length(1), 0.0);
  EXPECT_EQ(average_path_length(2), 1.0);
  for (std::size_t n : {3u, 10u, 256u, 1000u})
    EXPECT_NEAR(average_path_length(n), 2.0 * harmonic(n - 1) - 2.0 * (n - 1.0) / n, 1e-12);
}

TEST(IForest, ScoreMidpointAndMonotonicity) {
  // A single external node holding psi points scores c(psi)/c(psi) -> 0.5.
  IForestModel m;
  m.psi = 256;
  m.n_features = 1;
  IsolationTree t;
  t.nodes.push_back({-1, 0.0, -1, -1, 256});
  m.trees.push_back(t);
  const RowVector x = RowVector::Zero(1);
  EXPECT_EQ(mean_path_length(m, x), average_path_length(256));
  EXPECT_EQ(iforest_score(m, x), 0.5);

  // Deeper leaves mean longer paths and strictly smaller scores.
  double previous = 2.0;
  for (std::uint32_t size : {1u, 2u, 5u, 40u, 200u, 256u}) {
    m.trees[0].nodes[0].size = size;
    const double s = iforest_score(m, x);
    EXPECT_LT(s, previous);
    previous = s;
  }
}

TEST(IForest, FarPointScoresHigherOverSeeds) {
  Matrix x = test::random_matrix(300, 2, 5, 0.5);
  x.row(299) << 8.0, -8.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    IForestParams params;
    params.seed = seed;
    params.n_estimators = 50;
    const auto m = train_iforest(x, params);
    const Vector s = iforest_scores(m, x);
    EXPECT_GT(s(299), s.head(299).maxCoeff()) << seed;
  }
}

TEST(IForest, HeightCapRangeAndSanityBand) {
  const Matrix x = uniform_points(1000, 3, 9);
  IForestParams params;
  params.seed = 3;
  const auto m = train_iforest(x, params);
  EXPECT_EQ(m.psi, 256u);
  ASSERT_EQ(m.trees.size(), 100u);
  for (const auto& t : m.trees) EXPECT_LE(t.height(), 8u);
  const Vector s = iforest_scores(m, x);
  EXPECT_GT(s.minCoeff(), 0.0);
  EXPECT_LT(s.maxCoeff(), 1.0);
  EXPECT_GE(s.mean(), 0.3);
  EXPECT_LE(s.mean(), 0.6);
}

TEST(IForest, SmallSampleUsesAllRows) {
  const Matrix x = uniform_points(40, 2, 1);
  const auto m = train_iforest(x, IForestParams{10, 256, 7, 0.5});
  EXPECT_EQ(m.psi, 40u);
  for (const auto& t : m.trees) {
    EXPECT_LE(t.height(), 6u);
    std::uint32_t total = 0;
    for (const auto& n : t.nodes)
      if (n.feature < 0) total += n.size;
    EXPECT_EQ(total, 40u);
  }
}

TEST(IForest, DeterministicPerSeed) {
  const Matrix x = uniform_points(500, 4, 2);
  const auto a = iforest_scores(train_iforest(x, IForestParams{30, 256, 11, 0.5}), x);
  const auto b = iforest_scores(train_iforest(x, IForestParams{30, 256, 11, 0.5}), x);
  const auto c = iforest_scores(train_iforest(x, IForestParams{30, 256, 12, 0.5}), x);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(IForest, ConstantDataGivesLeafOnlyTrees) {
  const Matrix x = Matrix::Constant(50, 3, -60.0);
  const auto m = train_iforest(x, IForestParams{5, 256, 1, 0.5});
  for (const auto& t : m.trees) EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(iforest_score(m, x.row(0)), 0.5);
}

// ---------------------------------------------------------------------------
// One-class SVM

TEST(OcSvm, MatchesScikitLearnUpToScaling) {
  const Matrix x = reference_points();
  struct Ref {
    double nu;
    KernelKind kernel;
    GammaMode gamma;
    std::array<double, 5> f;
    double rho;
  };
  // sklearn.svm.OneClassSVM(nu, kernel, gamma, tol=1e-8): decision_function(X[:5]) and offset_.
  // libsvm keeps sum(alpha) = nu n; this model normalises it to 1.
  const std::vector<Ref> refs{
      {0.1, KernelKind::Rbf, GammaMode::Scale,
       {6.273120911615138e-10, 0.03108671941835195, 0.20013466398320157, -7.190047668359512e-09, 0.0796253983950479},
       0.9898823367411842},
      {0.5, KernelKind::Rbf, GammaMode::Auto,
       {-1.3561154623685616, -0.030287046552224695, 0.9471156517239576, -0.055267740341798266, 0.20068079038030984},
       5.047434935073139},
      {0.3, KernelKind::Linear, GammaMode::Scale,
       {4.0184782790220197e-07, 2.914727690934867, 7.565912207851966e-08, -2.36988310716563, 1.0107827043221462},
       2.5162156280091144},
  };
  for (const auto& r : refs) {
    OcSvmParams params;
    params.nu = r.nu;
    params.kernel = r.kernel;
    params.gamma_mode = r.gamma;
    params.tol = 1e-8;
    const auto m = train_ocsvm(x, params);
    const double scale = r.nu * 40;
    EXPECT_NEAR(m.rho * scale, r.rho, 1e-5 * r.rho);
    const Vector f = ocsvm_decision(m, x.topRows(5));
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(f(i) * scale, r.f[i], 1e-5) << r.nu;
  }
}

// Free support vectors sit on f = 0 up to solver tolerance, so the count is only
// tight once they are a small share of the sample (n in the hundreds and up).
// The linear kernel is fit away from the origin; with the origin inside the hull
// the optimum is w = 0 and the sign of f is rounding noise.
TEST(OcSvm, NuPropertyAndAlphaBounds) {
  std::mt19937_64 rng(4);
  for (int round = 0; round < 12; ++round) {
    const std::size_t n = 500 + rng() % 1000;
    Matrix x = test::random_matrix(n, 1 + rng() % 5, rng());
    if (round % 3 == 0) x.array() += 3.0;
    for (double nu : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
      OcSvmParams params;
      params.nu = nu;
      params.kernel = round % 3 == 0 ? KernelKind::Linear : KernelKind::Rbf;
      params.gamma_mode = round % 2 ? GammaMode::Auto : GammaMode::Scale;
      const auto m = train_ocsvm(x, params);
      EXPECT_NEAR(m.alpha.sum(), 1.0, 1e-9);
      EXPECT_GE(m.alpha.minCoeff(), 0.0);
      EXPECT_LE(m.alpha.maxCoeff(), 1.0 / (nu * n) + 1e-12);
      const Vector f = ocsvm_decision(m, x);
      const double outside = static_cast<double>((f.array() < 0).count()) / n;
      EXPECT_LE(outside, nu + 0.05) << nu << " n=" << n;
    }
  }
}

TEST(OcSvm, SinglePointIsInside) {
  Matrix x(1, 3);
  x << 0.3, -1.0, 2.0;
  const auto m = train_ocsvm(x, OcSvmParams{0.5, KernelKind::Rbf, GammaMode::Scale});
  EXPECT_GE(ocsvm_decision(m, x)(0), 0.0);
}

TEST(OcSvm, DuplicatedTrainingSetGivesSameLabels) {
  const Matrix x = test::random_matrix(60, 3, 8);
  Matrix twice(120, 3);
  twice << x, x;
  const Matrix probe = test::random_matrix(40, 3, 9, 2.0);
  for (double nu : {0.1, 0.5}) {
    OcSvmParams params;
    params.nu = nu;
    params.tol = 1e-8;
    const auto a = train_ocsvm(x, params);
    const auto b = train_ocsvm(twice, params);
    EXPECT_EQ(predict(a, probe), predict(b, probe));
    EXPECT_LT((ocsvm_decision(a, probe) - ocsvm_decision(b, probe)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(OcSvm, LinearSignRotationInvariant) {
  Matrix x = test::random_matrix(80, 3, 10);
  x.rowwise() -= x.colwise().mean();
  // Rotation about the z axis followed by one about the x axis.
  const double a = 0.7, b = -1.1;
  Matrix r1(3, 3), r2(3, 3);
  r1 << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  r2 << 1, 0, 0, 0, std::cos(b), -std::sin(b), 0, std::sin(b), std::cos(b);
  const Matrix rot = r1 * r2;
  const Matrix probe = test::random_matrix(30, 3, 11);
  OcSvmParams params;
  params.kernel = KernelKind::Linear;
  params.nu = 0.3;
  params.tol = 1e-8;
  const auto m1 = train_ocsvm(x, params);
  const auto m2 = train_ocsvm(x * rot, params);
  EXPECT_EQ(predict(m1, probe), predict(m2, probe * rot));
}

TEST(OcSvm, IterationCapCarriesBestModel) {
  OcSvmParams params;
  params.max_iterations = 2;
  try {
    train_ocsvm(test::random_matrix(50, 2, 3), params);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError<OcSvmModel>& e) {
    EXPECT_FALSE(e.best_so_far().converged);
    EXPECT_NEAR(e.best_so_far().alpha.sum(), 1.0, 1e-9);
  }
}

TEST(OcSvm, Deterministic) {
  const Matrix x = test::random_matrix(70, 4, 12);
  const auto a = train_ocsvm(x);
  const auto b = train_ocsvm(x);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_THROW(train_ocsvm(x, OcSvmParams{0.0}), ArgumentError);
  EXPECT_THROW(train_ocsvm(x, OcSvmParams{1.5}), ArgumentError);
}
