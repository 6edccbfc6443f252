#pragma once

#include <span>

#include "linkscope/representations.hpp"
#include "linkscope/trace.hpp"

namespace linkscope {

struct ThresholdConfig {
  double p_threshold = 1e-3;
  double mean_median_gap_db = 3.0;
  double two_sigma_db = 2.5;
  double histogram_cut_dbm = -85.0;
  // A trace is flagged when the fraction of samples below the cut exceeds this.
  double histogram_min_fraction = 0.0;

  void validate() const;
};

// D'Agostino-Pearson omnibus test. Needs at least 20 finite samples; a constant
// sample returns 0.
double normality_pvalue(std::span<const double> samples);

// The omnibus statistic itself, K^2 = Z_skew^2 + Z_kurt^2.
double normality_statistic(std::span<const double> samples);

Label detect_time_value(const RssiTrace& t, const ThresholdConfig& cfg = {});
Label detect_aggregated(const FeatureVector& v, const ThresholdConfig& cfg = {});
Label detect_aggregated(const RssiTrace& t, const ThresholdConfig& cfg = {});
Label detect_histogram(const RssiTrace& t, const ThresholdConfig& cfg = {});

// Dispatch on the representation; FFT and encoded features have no rule and throw.
Label detect_threshold(const RssiTrace& t, Representation rep, const ThresholdConfig& cfg = {});

}  // namespace linkscope
