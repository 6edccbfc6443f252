#include "linkscope/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linkscope/error.hpp"

namespace linkscope {

void ThresholdConfig::validate() const {
  if (!(p_threshold > 0.0 && p_threshold < 1.0)) throw ConfigError("p_threshold must lie in (0, 1)");
  if (!(mean_median_gap_db > 0.0)) throw ConfigError("mean_median_gap_db must be positive");
  if (!(two_sigma_db > 0.0)) throw ConfigError("two_sigma_db must be positive");
  if (!std::isfinite(histogram_cut_dbm)) throw ConfigError("histogram_cut_dbm must be finite");
  if (!(histogram_min_fraction >= 0.0 && histogram_min_fraction < 1.0))
    throw ConfigError("histogram_min_fraction must lie in [0, 1)");
}

namespace {

struct Moments {
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
};

Moments central_moments(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  Moments m;
  for (double v : x) {
    const double d = v - mean;
    const double d2 = d * d;
    m.m2 += d2;
    m.m3 += d2 * d;
    m.m4 += d2 * d2;
  }
  const auto n = static_cast<double>(x.size());
  m.m2 /= n;
  m.m3 /= n;
  m.m4 /= n;
  return m;
}

double skew_z(double b1, double n) {
  double y = b1 * std::sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)));
  const double beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) /
                       ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
  const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
  const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
  const double alpha = std::sqrt(2.0 / (w2 - 1.0));
  if (y == 0.0) y = 1.0;
  return delta * std::asinh(y / alpha);
}

double kurtosis_z(double b2, double n) {
  const double e = 3.0 * (n - 1.0) / (n + 1.0);
  const double var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
  const double x = (b2 - e) / std::sqrt(var);
  const double sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0)) *
                            std::sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)));
  const double a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + std::sqrt(1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)));
  const double term1 = 1.0 - 2.0 / (9.0 * a);
  const double denom = 1.0 + x * std::sqrt(2.0 / (a - 4.0));
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  const double term2 = std::copysign(std::cbrt((1.0 - 2.0 / a) / std::abs(denom)), denom);
  return (term1 - term2) / std::sqrt(2.0 / (9.0 * a));
}

void check_samples(std::span<const double> samples) {
  if (samples.size() < 20)
    throw ArgumentError("normality test needs at least 20 samples, got " + std::to_string(samples.size()));
  for (double v : samples)
    if (!std::isfinite(v)) throw ArgumentError("normality test needs finite samples");
}

}  // namespace

double normality_statistic(std::span<const double> samples) {
  check_samples(samples);
  const auto m = central_moments(samples);
  if (m.m2 == 0.0) return std::numeric_limits<double>::infinity();
  const auto n = static_cast<double>(samples.size());
  const double zs = skew_z(m.m3 / std::pow(m.m2, 1.5), n);
  const double zk = kurtosis_z(m.m4 / (m.m2 * m.m2), n);
  return zs * zs + zk * zk;
}

double normality_pvalue(std::span<const double> samples) {
  const double k2 = normality_statistic(samples);
  // Survival function of chi-squared with two degrees of freedom.
  return std::isfinite(k2) ? std::exp(-0.5 * k2) : 0.0;
}

Label detect_time_value(const RssiTrace& t, const ThresholdConfig& cfg) {
  return normality_pvalue(t.samples()) < cfg.p_threshold ? Label::Anomalous : Label::Normal;
}

Label detect_aggregated(const FeatureVector& v, const ThresholdConfig& cfg) {
  if (v.representation != Representation::Aggregated || v.values.size() != arity(Representation::Aggregated))
    throw ArgumentError("detect_aggregated needs an aggregated feature vector");
  if (v.scaler != ScalerKind::None) throw ArgumentError("threshold rules apply to unscaled features");
  const double mean = v.values[0];
  const double std = v.values[1];
  const double median = v.values[4];
  const bool gap = std::abs(mean - median) > cfg.mean_median_gap_db;
  const bool spread = 2.0 * std > cfg.two_sigma_db;
  return gap || spread ? Label::Anomalous : Label::Normal;
}

Label detect_aggregated(const RssiTrace& t, const ThresholdConfig& cfg) { return detect_aggregated(aggregated(t), cfg); }

Label detect_histogram(const RssiTrace& t, const ThresholdConfig& cfg) {
  const auto s = t.samples();
  const auto below = std::count_if(s.begin(), s.end(), [&](double v) { return v < cfg.histogram_cut_dbm; });
  const double fraction = static_cast<double>(below) / static_cast<double>(s.size());
  return fraction > cfg.histogram_min_fraction ? Label::Anomalous : Label::Normal;
}

Label detect_threshold(const RssiTrace& t, Representation rep, const ThresholdConfig& cfg) {
  switch (rep) {
    case Representation::TimeValue: return detect_time_value(t, cfg);
    case Representation::Aggregated: return detect_aggregated(t, cfg);
    case Representation::Histogram: return detect_histogram(t, cfg);
    default: throw ArgumentError("no threshold rule for the " + std::string(to_string(rep)) + " representation");
  }
}

}  // namespace linkscope
