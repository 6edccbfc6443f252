#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "linkscope/trace.hpp"

namespace linkscope {

enum class AnomalyKind { SuddenD, SuddenR, InstaD, SlowD };

inline constexpr std::array<AnomalyKind, 4> kAllAnomalies{AnomalyKind::SuddenD, AnomalyKind::SuddenR,
                                                         AnomalyKind::InstaD, AnomalyKind::SlowD};

// Lower-case CLI/file names: suddend, suddenr, instad, slowd.
std::string_view to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(std::string_view text);

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::SuddenD;
  double affected_fraction = 0.33;
  double floor_dbm = -95.0;
  double spike_prob = 0.01;                      // InstaD
  std::pair<double, double> slope_range{0.5, 1.5};  // SlowD, dB per sample
  std::uint64_t seed = 0;

  void validate() const;  // throws ArgumentError
};

// Where and how deep one injection went. Indices are 0-based.
struct InjectionReport {
  std::size_t onset = 0;
  std::size_t duration = 0;  // remainder of the trace for SuddenD
  std::optional<double> slope;
  std::optional<std::vector<std::size_t>> spike_indices;

  friend bool operator==(const InjectionReport&, const InjectionReport&) = default;
};

struct LabeledTrace {
  LabeledTrace(RssiTrace trace, Label label, std::optional<AnomalyKind> kind = std::nullopt,
               std::optional<InjectionReport> report = std::nullopt);

  RssiTrace trace;
  Label label;
  std::optional<AnomalyKind> kind;
  std::optional<InjectionReport> report;

  friend bool operator==(const LabeledTrace&, const LabeledTrace&) = default;
};

using Rng = std::mt19937_64;

// Deterministic per-link stream derived from (seed, link_id), so injection results
// do not depend on processing order.
Rng link_rng(std::uint64_t seed, std::string_view link_id);

// Pure kernels with explicit parameters. Samples already below floor_dbm are kept.
std::pair<RssiTrace, InjectionReport> apply_sudden_d(const RssiTrace& t, std::size_t onset, double floor_dbm);
std::pair<RssiTrace, InjectionReport> apply_sudden_r(const RssiTrace& t, std::size_t onset, std::size_t duration,
                                                     double floor_dbm);
std::pair<RssiTrace, InjectionReport> apply_insta_d(const RssiTrace& t, std::vector<std::size_t> spike_indices,
                                                    double floor_dbm);
// Ramp of `slope` dB/sample from `onset` for `duration` samples, clipped at the
// floor; after the window the drop reached at its last sample is held.
std::pair<RssiTrace, InjectionReport> apply_slow_d(const RssiTrace& t, std::size_t onset, std::size_t duration,
                                                   double slope, double floor_dbm);

// Randomised kernels. Packet ranges are 1-based in the anomaly definitions and
// converted here: SuddenD onset packets [200, 280] -> indices [199, 279];
// SuddenR onset [25, 275] -> [24, 274] with duration U{5..20};
// SlowD onset [1, 20] -> [0, 19] with duration U{150..180}.
std::pair<RssiTrace, InjectionReport> inject_sudden_d(const RssiTrace& t, const AnomalySpec& spec, Rng& rng);
std::pair<RssiTrace, InjectionReport> inject_sudden_r(const RssiTrace& t, const AnomalySpec& spec, Rng& rng);
std::pair<RssiTrace, InjectionReport> inject_insta_d(const RssiTrace& t, const AnomalySpec& spec, Rng& rng);
std::pair<RssiTrace, InjectionReport> inject_slow_d(const RssiTrace& t, const AnomalySpec& spec, Rng& rng);

// Number of links an injection affects: floor(fraction * n), which yields the
// reference census of 700 of 2123 links at fraction 0.33.
std::size_t affected_count(double fraction, std::size_t n);

// Picks affected_count() links with spec.seed and applies the kind's kernel.
// Output order follows the dataset (sorted by link_id).
std::vector<LabeledTrace> inject(const Dataset& dataset, const AnomalySpec& spec);

// Sidecar labels CSV: `link_id,label,kind,onset,duration,slope`.
void write_labels_csv(const std::vector<LabeledTrace>& labeled, const std::filesystem::path& path);

// Rejoins a canonical CSV with its labels sidecar. Spike indices are not part of
// the sidecar and come back empty.
std::vector<LabeledTrace> read_labeled(const std::filesystem::path& traces_csv, const std::filesystem::path& labels_csv);

Dataset traces_of(const std::vector<LabeledTrace>& labeled);

}  // namespace linkscope
