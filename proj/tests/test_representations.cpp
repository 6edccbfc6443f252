#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "linkscope/error.hpp"
#include "linkscope/representations.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace linkscope;

namespace {

RssiTrace trace_of(const Samples& s) { return RssiTrace("x", 1, 2, 0, s); }

RssiTrace constant_trace(double v) {
  Samples s;
  s.fill(v);
  return trace_of(s);
}

RssiTrace random_trace(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-100.0, -30.0);
  Samples s;
  for (auto& v : s) v = u(rng);
  return trace_of(s);
}

}  // namespace

TEST(TimeValue, CopiesSamples) {
  std::mt19937_64 rng(1);
  const auto t = random_trace(rng);
  const auto v = time_value(t);
  ASSERT_EQ(v.values.size(), 300u);
  EXPECT_EQ(v.representation, Representation::TimeValue);
  for (std::size_t i = 0; i < 300; ++i) EXPECT_EQ(v.values[i], t[i]);
  for (double x : time_value(constant_trace(-60)).values) EXPECT_EQ(x, -60.0);
}

TEST(TimeValue, SurvivesCanonicalCsv) {
  test::TempDir dir;
  const auto d = generate_synthetic(5, 4);
  write_canonical_csv(d, dir.path() / "d.csv");
  const auto back = read_canonical_csv(dir.path() / "d.csv");
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(time_value(back[i]).values, time_value(d[i]).values);
}

TEST(Aggregated, ConstantTrace) {
  const auto v = aggregated(constant_trace(-60)).values;
  EXPECT_EQ(v, (std::vector<double>{-60, 0, -60, -60, -60, -60, -60}));
}

TEST(Aggregated, ArithmeticSeries) {
  // samples -i/3 for i = 1..300: closed forms of the arithmetic series
  Samples s;
  for (std::size_t i = 0; i < 300; ++i) s[i] = -static_cast<double>(i + 1) / 3.0;
  const auto v = aggregated(trace_of(s)).values;
  EXPECT_NEAR(v[0], -150.5 / 3.0, 1e-12);
  EXPECT_NEAR(v[1], std::sqrt((300.0 * 300.0 - 1.0) / 12.0) / 3.0, 1e-12);
  EXPECT_EQ(v[2], -100.0);
  EXPECT_NEAR(v[4], -150.5 / 3.0, 1e-12);
  EXPECT_NEAR(v[6], -1.0 / 3.0, 1e-15);
  // Q25 position 0.25 * 299 = 74.75 in the ascending order -100, -99.67, ...
  EXPECT_NEAR(v[3], -(300.0 - 74.75) / 3.0, 1e-12);
  EXPECT_NEAR(v[5], -(300.0 - 224.25) / 3.0, 1e-12);
}

TEST(Quantile, BruteForceOneToThreeHundred) {
  std::vector<double> x(300);
  for (std::size_t i = 0; i < 300; ++i) x[i] = static_cast<double>(300 - i);
  EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.5), 150.5);
  EXPECT_DOUBLE_EQ(quantile(x, 1.0), 300.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.25), 75.75);
}

TEST(Aggregated, OrderProperty) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 200; ++round) {
    Samples s;
    std::uniform_real_distribution<double> u(-110.0, 0.0);
    const int mode = round % 3;
    for (auto& v : s) v = mode == 0 ? u(rng) : mode == 1 ? std::round(u(rng)) : -60.0 + (rng() % 3);
    const auto v = aggregated(trace_of(s)).values;
    EXPECT_LE(v[2], v[3]);
    EXPECT_LE(v[3], v[4]);
    EXPECT_LE(v[4], v[5]);
    EXPECT_LE(v[5], v[6]);
    EXPECT_LE(v[2], v[0] + 1e-9);
    EXPECT_LE(v[0], v[6] + 1e-9);
    EXPECT_GE(v[1], 0.0);
  }
}

TEST(Histogram, PointMassAtLo) {
  const auto v = histogram(constant_trace(-90), -90, -50).values;
  ASSERT_EQ(v.size(), 10u);
  EXPECT_EQ(v[0], 1.0);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(Histogram, TwoPointMasses) {
  Samples s;
  for (std::size_t i = 0; i < 300; ++i) s[i] = i < 150 ? -90.0 : -50.0;
  const auto v = histogram(trace_of(s), -90, -50).values;
  EXPECT_EQ(v[0], 0.5);
  EXPECT_EQ(v[9], 0.5);
  for (std::size_t i = 1; i < 9; ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(Histogram, BruteForceBinningAndNormalization) {
  std::mt19937_64 rng(23);
  for (int round = 0; round < 100; ++round) {
    const auto t = random_trace(rng);
    const double lo = -95.0, hi = -35.0;
    const auto v = histogram(t, lo, hi).values;
    std::vector<double> ref(10, 0.0);
    for (double x : t.samples()) {
      // bin k covers [lo + k*w, lo + (k+1)*w), last bin closed
      std::size_t k = 0;
      while (k < 9 && x >= lo + (k + 1) * (hi - lo) / 10.0) ++k;
      ref[k] += 1.0 / 300.0;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
      EXPECT_NEAR(v[k], ref[k], 1e-12);
      EXPECT_GE(v[k], 0.0);
      sum += v[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Histogram, OutOfRangeClampsToEdges) {
  Samples s;
  for (std::size_t i = 0; i < 300; ++i) s[i] = i < 100 ? -100.0 : i < 200 ? -70.0 : -20.0;
  const auto v = histogram(trace_of(s), -90, -50).values;
  EXPECT_NEAR(v[0], 1.0 / 3, 1e-12);
  EXPECT_NEAR(v[9], 1.0 / 3, 1e-12);
  EXPECT_NEAR(v[5], 1.0 / 3, 1e-12);
  EXPECT_THROW(histogram(trace_of(s), -50, -50), ArgumentError);
}

TEST(Fft, ConstantIsDcOnly) {
  const auto v = fft_magnitude(constant_trace(-60)).values;
  ASSERT_EQ(v.size(), 151u);
  EXPECT_NEAR(v[0], 300 * 60.0, 300 * 60.0 * 1e-6);
  for (std::size_t k = 1; k < 151; ++k) EXPECT_LT(v[k], 300 * 60.0 * 1e-6);
}

TEST(Fft, PureCosine) {
  const double a = 7.5;
  Samples s;
  for (std::size_t t = 0; t < 300; ++t) s[t] = -60.0 + a * std::cos(2.0 * std::numbers::pi * 10.0 * t / 300.0);
  const auto v = fft_magnitude(trace_of(s)).values;
  const auto ref = test::brute_force_dft_magnitude(s);
  EXPECT_NEAR(v[10], 150.0 * a, 150.0 * a * 1e-6);
  EXPECT_NEAR(ref[10], 150.0 * a, 150.0 * a * 1e-6);
  for (std::size_t k = 1; k < 151; ++k)
    if (k != 10) {
      EXPECT_LT(v[k], 1e-6 * 150.0 * a);
    }
}

TEST(Fft, MatchesBruteForceDft) {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 20; ++round) {
    const auto t = random_trace(rng);
    const auto v = fft_magnitude(t).values;
    const auto ref = test::brute_force_dft_magnitude(t.samples());
    double scale = *std::max_element(ref.begin(), ref.end());
    for (std::size_t k = 0; k < 151; ++k) EXPECT_LE(std::abs(v[k] - ref[k]), 1e-6 * std::max(ref[k], 1e-3 * scale)) << k;
  }
}

TEST(Fft, Parseval) {
  std::mt19937_64 rng(6);
  for (int round = 0; round < 20; ++round) {
    const auto t = random_trace(rng);
    const auto v = fft_magnitude(t).values;
    double energy = 0.0;
    for (double x : t.samples()) energy += x * x;
    double spec = v[0] * v[0] + v[150] * v[150];
    for (std::size_t k = 1; k < 150; ++k) spec += 2.0 * v[k] * v[k];
    EXPECT_NEAR(spec / 300.0, energy, energy * 1e-6);
  }
}

TEST(Fft, CircularShiftKeepsMagnitudes) {
  Samples s, shifted;
  for (std::size_t t = 0; t < 300; ++t) s[t] = -60.0 + 4.0 * std::sin(2.0 * std::numbers::pi * 17.0 * t / 300.0);
  for (std::size_t t = 0; t < 300; ++t) shifted[t] = s[(t + 37) % 300];
  const auto a = fft_magnitude(trace_of(s)).values;
  const auto b = fft_magnitude(trace_of(shifted)).values;
  for (std::size_t k = 0; k < 151; ++k) EXPECT_NEAR(a[k], b[k], 1e-6 * a[0]);
}

TEST(Featurize, ShapesAndHistogramRange) {
  const auto d = generate_synthetic(12, 3);
  const auto& tr = d.traces();
  for (auto rep : kManualRepresentations) {
    const auto m = featurize(tr, rep);
    EXPECT_EQ(static_cast<std::size_t>(m.rows()), 12u);
    EXPECT_EQ(static_cast<std::size_t>(m.cols()), arity(rep));
  }
  const auto [lo, hi] = global_range(tr);
  const auto h = featurize(tr, Representation::Histogram);
  for (Eigen::Index i = 0; i < h.rows(); ++i) EXPECT_NEAR(h.row(i).sum(), 1.0, 1e-9);
  const auto direct = histogram(tr[4], lo, hi).values;
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(h(4, k), direct[k]);
  EXPECT_THROW(featurize(tr, Representation::Encoded), ArgumentError);
}

TEST(Scaler, Definitions) {
  Matrix x(4, 3);
  x << 1, 5, 2,  //
      2, 5, 4,   //
      3, 5, 6,   //
      10, 5, 8;
  const auto none = fit_scaler(ScalerKind::None, x).apply(x);
  EXPECT_EQ(none, x);

  const auto mean = fit_scaler(ScalerKind::MeanStdCenterOnly, x).apply(x);
  EXPECT_NEAR(mean(0, 0), 1 - 4.0, 1e-12);
  EXPECT_EQ(mean(2, 1), 0.0);

  const auto robust_c = fit_scaler(ScalerKind::RobustCenterOnly, x).apply(x);
  EXPECT_NEAR(robust_c(0, 0), 1 - 2.5, 1e-12);

  // column 0: Q25 = 1.75, Q75 = 4.75 -> IQR 3
  const auto robust = fit_scaler(ScalerKind::RobustFull, x).apply(x);
  EXPECT_NEAR(robust(3, 0), (10 - 2.5) / 3.0, 1e-12);
  EXPECT_EQ(robust(1, 1), 0.0);

  const auto mm = fit_scaler(ScalerKind::MinMax, x).apply(x);
  EXPECT_NEAR(mm(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(mm(3, 0), 1.0, 1e-15);
  EXPECT_NEAR(mm(1, 2), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(mm(0, 1), 0.0);
}

TEST(Scaler, StandardizationProperty) {
  std::mt19937_64 rng(8);
  for (int round = 0; round < 30; ++round) {
    const auto x = test::random_matrix(5 + rng() % 40, 1 + rng() % 8, rng(), 1.0 + rng() % 50);
    const auto y = fit_scaler(ScalerKind::MeanStdFull, x).apply(x);
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const double m = y.col(j).mean();
      const double sd = std::sqrt((y.col(j).array() - m).square().mean());
      EXPECT_NEAR(m, 0.0, 1e-9);
      EXPECT_NEAR(sd, 1.0, 1e-9);
    }
    const auto mm = fit_scaler(ScalerKind::MinMax, x).apply(x);
    EXPECT_GE(mm.minCoeff(), 0.0);
    EXPECT_LE(mm.maxCoeff(), 1.0);
  }
}

TEST(Scaler, ArgExtremaPreservedProperty) {
  std::mt19937_64 rng(9);
  for (int round = 0; round < 30; ++round) {
    const auto x = test::random_matrix(6 + rng() % 30, 1 + rng() % 5, rng());
    for (auto kind : kAllScalers) {
      const auto s = fit_scaler(kind, x);
      for (Eigen::Index j = 0; j < x.cols(); ++j) EXPECT_GT(s.scale()(j), 0.0);
      const auto y = s.apply(x);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Eigen::Index a, b;
        x.col(j).maxCoeff(&a);
        y.col(j).maxCoeff(&b);
        EXPECT_EQ(a, b);
        x.col(j).minCoeff(&a);
        y.col(j).minCoeff(&b);
        EXPECT_EQ(a, b);
      }
    }
  }
}

TEST(Scaler, ConstantFeatureMapsToZero) {
  Matrix x = Matrix::Constant(7, 2, -42.0);
  x.col(1) << 1, 2, 3, 4, 5, 6, 7;
  for (auto kind : kAllScalers) {
    if (kind == ScalerKind::None) continue;
    const auto s = fit_scaler(kind, x);
    EXPECT_EQ(s.scale()(0), 1.0) << to_string(kind);
    const auto y = s.apply(x);
    for (Eigen::Index i = 0; i < 7; ++i) EXPECT_EQ(y(i, 0), 0.0) << to_string(kind);
  }
}

TEST(Scaler, UnfittedOrMismatchedIsStateError) {
  Scaler s(ScalerKind::MeanStdFull);
  EXPECT_THROW(s.apply(Matrix::Zero(2, 2)), StateError);
  FeatureVector v;
  v.values = {1.0, 2.0};
  EXPECT_THROW(apply_scaler(s, v), StateError);
}

TEST(Scaler, FeatureVectorApplyRecordsKind) {
  const auto x = test::random_matrix(10, 7, 1);
  const auto s = fit_scaler(ScalerKind::RobustFull, x);
  FeatureVector v{std::vector<double>(7, 0.5), Representation::Aggregated, ScalerKind::None};
  const auto out = apply_scaler(s, v);
  EXPECT_EQ(out.scaler, ScalerKind::RobustFull);
  EXPECT_EQ(out.representation, Representation::Aggregated);
  for (std::size_t j = 0; j < 7; ++j) EXPECT_DOUBLE_EQ(out.values[j], (0.5 - s.center()(j)) / s.scale()(j));
}

TEST(FeatureTable, RoundTrip) {
  test::TempDir dir;
  FeatureTable t;
  t.link_ids = {"a", "b", "c"};
  t.labels = {Label::Normal, Label::Anomalous, Label::Normal};
  t.values = test::random_matrix(3, 4, 2);
  t.representation = Representation::Encoded;
  t.encoded = true;
  write_feature_table(t, dir.path() / "f.csv", dir.path() / "f.json");
  const auto back = read_feature_table(dir.path() / "f.csv", dir.path() / "f.json");
  EXPECT_EQ(back.link_ids, t.link_ids);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.representation, t.representation);
  EXPECT_TRUE(back.encoded);
}
