#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linkscope/linalg.hpp"
#include "linkscope/trace.hpp"

namespace linkscope {

enum class Representation { TimeValue, Aggregated, Histogram, Fft, Encoded };

inline constexpr std::array<Representation, 4> kManualRepresentations{
    Representation::TimeValue, Representation::Aggregated, Representation::Histogram, Representation::Fft};

std::size_t arity(Representation rep);
std::string_view to_string(Representation rep);  // time_value, aggregated, histogram, fft, encoded
Representation parse_representation(std::string_view text);

enum class ScalerKind { None, MeanStdCenterOnly, MeanStdFull, RobustCenterOnly, RobustFull, MinMax };

inline constexpr std::array<ScalerKind, 6> kAllScalers{ScalerKind::None,           ScalerKind::MeanStdCenterOnly,
                                                       ScalerKind::MeanStdFull,    ScalerKind::RobustCenterOnly,
                                                       ScalerKind::RobustFull,     ScalerKind::MinMax};

std::string_view to_string(ScalerKind kind);  // none, mean, standard, robust_center, robust, minmax
ScalerKind parse_scaler(std::string_view text);

struct FeatureVector {
  std::vector<double> values;
  Representation representation = Representation::TimeValue;
  ScalerKind scaler = ScalerKind::None;
};

FeatureVector time_value(const RssiTrace& t);

// [mean, population std, min, Q25, median, Q75, max]; linearly interpolated quantiles.
FeatureVector aggregated(const RssiTrace& t);

// Fractions of the 300 samples in ten equal bins over [lo, hi]; the last bin is
// right-closed and out-of-range samples fall into the nearest edge bin.
FeatureVector histogram(const RssiTrace& t, double lo, double hi);

// One-sided DFT magnitudes, DC through Nyquist (151 values).
FeatureVector fft_magnitude(const RssiTrace& t);

// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::span<const double> values, double q);

// Global [min, max] over every sample of a set of lossless traces.
std::pair<double, double> global_range(std::span<const RssiTrace> traces);

// global_range, widened to [lo, lo + 1] when every sample is equal.
std::pair<double, double> histogram_range(std::span<const RssiTrace> traces);

// Feature matrix for one representation; histogram uses histogram_range(traces).
Matrix featurize(std::span<const RssiTrace> traces, Representation rep);
// Same, with histogram bins over an explicit range (ignored by the others).
Matrix featurize(std::span<const RssiTrace> traces, Representation rep, std::pair<double, double> range);

// Per-feature affine normaliser: y = (x - center) / scale.
class Scaler {
 public:
  Scaler() = default;
  explicit Scaler(ScalerKind kind) : kind_(kind) {}

  // Rows of `training` are vectors. Zero spreads get scale 1.
  static Scaler fit(ScalerKind kind, const Matrix& training);

  ScalerKind kind() const { return kind_; }
  bool fitted() const { return fitted_; }
  const Vector& center() const { return center_; }
  const Vector& scale() const { return scale_; }

  Matrix apply(const Matrix& x) const;
  FeatureVector apply(const FeatureVector& v) const;

 private:
  void require_fitted(std::size_t dims) const;

  ScalerKind kind_ = ScalerKind::None;
  bool fitted_ = false;
  Vector center_;
  Vector scale_;
};

Scaler fit_scaler(ScalerKind kind, const Matrix& training);
FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& v);

// Feature matrix CSV `link_id,label,f000,...` plus a JSON sidecar manifest.
struct FeatureTable {
  std::vector<std::string> link_ids;
  std::vector<Label> labels;
  Matrix values;
  Representation representation = Representation::TimeValue;
  bool encoded = false;
  ScalerKind scaler = ScalerKind::None;
};

void write_feature_table(const FeatureTable& table, const std::filesystem::path& csv_path,
                         const std::filesystem::path& manifest_path);
FeatureTable read_feature_table(const std::filesystem::path& csv_path, const std::filesystem::path& manifest_path);

}  // namespace linkscope
