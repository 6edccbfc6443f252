#include "linkscope/representations.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "linkscope/checksum.hpp"
#include "linkscope/error.hpp"

namespace linkscope {

std::size_t arity(Representation rep) {
  switch (rep) {
    case Representation::TimeValue: return kTraceLength;
    case Representation::Aggregated: return 7;
    case Representation::Histogram: return 10;
    case Representation::Fft: return kTraceLength / 2 + 1;
    case Representation::Encoded: return 4;
  }
  return 0;
}

std::string_view to_string(Representation rep) {
  switch (rep) {
    case Representation::TimeValue: return "time_value";
    case Representation::Aggregated: return "aggregated";
    case Representation::Histogram: return "histogram";
    case Representation::Fft: return "fft";
    case Representation::Encoded: return "encoded";
  }
  return "?";
}

Representation parse_representation(std::string_view text) {
  for (auto r : {Representation::TimeValue, Representation::Aggregated, Representation::Histogram, Representation::Fft,
                 Representation::Encoded})
    if (to_string(r) == text) return r;
  throw ArgumentError("unknown representation '" + std::string(text) + "'");
}

std::string_view to_string(ScalerKind kind) {
  switch (kind) {
    case ScalerKind::None: return "none";
    case ScalerKind::MeanStdCenterOnly: return "mean";
    case ScalerKind::MeanStdFull: return "standard";
    case ScalerKind::RobustCenterOnly: return "robust_center";
    case ScalerKind::RobustFull: return "robust";
    case ScalerKind::MinMax: return "minmax";
  }
  return "?";
}

ScalerKind parse_scaler(std::string_view text) {
  for (auto k : kAllScalers)
    if (to_string(k) == text) return k;
  throw ArgumentError("unknown scaler '" + std::string(text) + "'");
}

namespace {

void require_lossless(const RssiTrace& t) {
  if (t.has_loss()) throw ArgumentError("representation of " + t.link_id() + " requires a lossless trace");
}

// Quantile of already-sorted data.
double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ArgumentError("quantile of empty data");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, q);
}

FeatureVector time_value(const RssiTrace& t) {
  require_lossless(t);
  return {std::vector<double>(t.samples().begin(), t.samples().end()), Representation::TimeValue, ScalerKind::None};
}

FeatureVector aggregated(const RssiTrace& t) {
  require_lossless(t);
  std::vector<double> s(t.samples().begin(), t.samples().end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s) ss += (v - mean) * (v - mean);
  // Clamp the mean into [min, max]; summation rounding can leave it an ulp outside.
  const double clamped_mean = std::clamp(mean, s.front(), s.back());
  return {{clamped_mean, std::sqrt(ss / n), s.front(), sorted_quantile(s, 0.25), sorted_quantile(s, 0.5),
           sorted_quantile(s, 0.75), s.back()},
          Representation::Aggregated,
          ScalerKind::None};
}

FeatureVector histogram(const RssiTrace& t, double lo, double hi) {
  require_lossless(t);
  if (!(lo < hi)) throw ArgumentError("histogram requires lo < hi");
  constexpr std::size_t kBins = 10;
  std::vector<double> bins(kBins, 0.0);
  const double width = (hi - lo) / static_cast<double>(kBins);
  for (double s : t.samples()) {
    const double pos = std::floor((s - lo) / width);
    const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(kBins - 1)));
    bins[b] += 1.0;
  }
  for (auto& b : bins) b /= static_cast<double>(kTraceLength);
  return {std::move(bins), Representation::Histogram, ScalerKind::None};
}

namespace {

struct FftwPlan {
  fftw_plan plan = nullptr;
  FftwPlan() {
    double* in = fftw_alloc_real(kTraceLength);
    fftw_complex* out = fftw_alloc_complex(kTraceLength / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kTraceLength), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~FftwPlan() { fftw_destroy_plan(plan); }
};

const FftwPlan& fft_plan() {
  // Plan creation is not thread-safe in FFTW; execution with fresh arrays is.
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  static const FftwPlan plan;
  return plan;
}

}  // namespace

FeatureVector fft_magnitude(const RssiTrace& t) {
  require_lossless(t);
  const auto& plan = fft_plan();
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(kTraceLength), &fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(kTraceLength / 2 + 1), &fftw_free);
  std::copy(t.samples().begin(), t.samples().end(), in.get());
  fftw_execute_dft_r2c(plan.plan, in.get(), out.get());
  std::vector<double> mag(kTraceLength / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
  return {std::move(mag), Representation::Fft, ScalerKind::None};
}

std::pair<double, double> global_range(std::span<const RssiTrace> traces) {
  if (traces.empty()) throw ArgumentError("global_range of empty dataset");
  double lo = traces.front()[0];
  double hi = lo;
  for (const auto& t : traces) {
    require_lossless(t);
    const auto [mn, mx] = std::minmax_element(t.samples().begin(), t.samples().end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }
  return {lo, hi};
}

std::pair<double, double> histogram_range(std::span<const RssiTrace> traces) {
  auto range = global_range(traces);
  // A dataset of identical constant traces has no spread; widen so lo < hi.
  if (!(range.first < range.second)) range.second = range.first + 1.0;
  return range;
}

Matrix featurize(std::span<const RssiTrace> traces, Representation rep) {
  if (rep == Representation::Histogram && !traces.empty()) return featurize(traces, rep, histogram_range(traces));
  return featurize(traces, rep, {0.0, 1.0});
}

Matrix featurize(std::span<const RssiTrace> traces, Representation rep, std::pair<double, double> range) {
  if (rep == Representation::Encoded) throw ArgumentError("encoded features come from an autoencoder");
  if (rep == Representation::Histogram && !(range.first < range.second))
    throw ArgumentError("histogram range must satisfy lo < hi");
  Matrix m(static_cast<Eigen::Index>(traces.size()), static_cast<Eigen::Index>(arity(rep)));
  for (std::size_t i = 0; i < traces.size(); ++i) {
    FeatureVector v;
    switch (rep) {
      case Representation::TimeValue: v = time_value(traces[i]); break;
      case Representation::Aggregated: v = aggregated(traces[i]); break;
      case Representation::Histogram: v = histogram(traces[i], range.first, range.second); break;
      case Representation::Fft: v = fft_magnitude(traces[i]); break;
      case Representation::Encoded: break;
    }
    m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const RowVector>(v.values.data(), static_cast<Eigen::Index>(v.values.size()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scalers

Scaler Scaler::fit(ScalerKind kind, const Matrix& training) {
  if (training.rows() == 0) throw ArgumentError("cannot fit a scaler on zero vectors");
  const auto d = training.cols();
  Scaler s(kind);
  s.center_ = Vector::Zero(d);
  s.scale_ = Vector::Ones(d);
  const auto n = static_cast<double>(training.rows());
  std::vector<double> column(static_cast<std::size_t>(training.rows()));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < training.rows(); ++i) column[static_cast<std::size_t>(i)] = training(i, j);
    double center = 0.0;
    double spread = 1.0;
    switch (kind) {
      case ScalerKind::None: break;
      case ScalerKind::MeanStdCenterOnly:
      case ScalerKind::MeanStdFull: {
        center = std::accumulate(column.begin(), column.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : column) ss += (v - center) * (v - center);
        spread = std::sqrt(ss / n);
        break;
      }
      case ScalerKind::RobustCenterOnly:
      case ScalerKind::RobustFull: {
        std::sort(column.begin(), column.end());
        center = sorted_quantile(column, 0.5);
        spread = sorted_quantile(column, 0.75) - sorted_quantile(column, 0.25);
        break;
      }
      case ScalerKind::MinMax: {
        const auto [mn, mx] = std::minmax_element(column.begin(), column.end());
        center = *mn;
        spread = *mx - *mn;
        break;
      }
    }
    const bool divides = kind == ScalerKind::MeanStdFull || kind == ScalerKind::RobustFull || kind == ScalerKind::MinMax;
    s.center_[j] = center;
    s.scale_[j] = divides && spread > 0.0 && std::isfinite(spread) ? spread : 1.0;
  }
  s.fitted_ = true;
  return s;
}

void Scaler::require_fitted(std::size_t dims) const {
  if (!fitted_) throw StateError("scaler '" + std::string(to_string(kind_)) + "' applied before fitting");
  if (static_cast<Eigen::Index>(dims) != center_.size())
    throw ArgumentError("scaler fitted on " + std::to_string(center_.size()) + " features, got " + std::to_string(dims));
}

Matrix Scaler::apply(const Matrix& x) const {
  require_fitted(static_cast<std::size_t>(x.cols()));
  Matrix out = x;
  out.rowwise() -= center_.transpose();
  out.array().rowwise() /= scale_.transpose().array();
  return out;
}

FeatureVector Scaler::apply(const FeatureVector& v) const {
  require_fitted(v.values.size());
  FeatureVector out = v;
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out.values[j] = (out.values[j] - center_[jj]) / scale_[jj];
  }
  out.scaler = kind_;
  return out;
}

Scaler fit_scaler(ScalerKind kind, const Matrix& training) { return Scaler::fit(kind, training); }

FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& v) { return scaler.apply(v); }

// ---------------------------------------------------------------------------
// Feature table I/O

void write_feature_table(const FeatureTable& table, const std::filesystem::path& csv_path,
                         const std::filesystem::path& manifest_path) {
  const auto rows = static_cast<std::size_t>(table.values.rows());
  if (table.link_ids.size() != rows || table.labels.size() != rows)
    throw ArgumentError("feature table: ids/labels/rows mismatch");
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + csv_path.string());
  out << "link_id,label";
  char name[32];
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    std::snprintf(name, sizeof name, ",f%03ld", static_cast<long>(j));
    out << name;
  }
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    out << detail::escape_field(table.link_ids[i]) << ',' << to_string(table.labels[i]);
    for (Eigen::Index j = 0; j < table.values.cols(); ++j)
      out << ',' << detail::format_exact(table.values(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  out.close();
  if (!out) throw IngestError("write failed for " + csv_path.string());

  nlohmann::ordered_json manifest;
  manifest["representation"] = to_string(table.representation);
  manifest["encoded"] = table.encoded;
  manifest["scaler"] = to_string(table.scaler);
  manifest["arity"] = table.values.cols();
  manifest["rows"] = rows;
  manifest["csv"] = csv_path.filename().string();
  manifest["checksum"] = file_checksum(csv_path);
  std::ofstream m(manifest_path, std::ios::binary);
  if (!m) throw IngestError("cannot write " + manifest_path.string());
  m << manifest.dump(2) << '\n';
}

FeatureTable read_feature_table(const std::filesystem::path& csv_path, const std::filesystem::path& manifest_path) {
  std::ifstream m(manifest_path);
  if (!m) throw IngestError("cannot read " + manifest_path.string());
  nlohmann::json manifest;
  try {
    m >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid feature manifest " + manifest_path.string() + ": " + e.what());
  }
  FeatureTable table;
  table.representation = parse_representation(manifest.at("representation").get<std::string>());
  table.encoded = manifest.at("encoded").get<bool>();
  table.scaler = parse_scaler(manifest.at("scaler").get<std::string>());
  const auto dims = manifest.at("arity").get<std::size_t>();

  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IngestError("cannot read " + csv_path.string());
  std::string line;
  std::getline(in, line);
  detail::strip_cr(line);
  if (detail::split_csv(line).size() != dims + 2) throw FormatError("feature header arity mismatch", 1);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != dims + 2) throw FormatError("feature row arity mismatch", line_no);
    table.link_ids.push_back(f[0]);
    table.labels.push_back(parse_label(f[1]));
    std::vector<double> r(dims);
    for (std::size_t j = 0; j < dims; ++j) r[j] = detail::parse_double(f[j + 2], line_no);
    rows.push_back(std::move(r));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dims));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < dims; ++j) table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

}  // namespace linkscope
