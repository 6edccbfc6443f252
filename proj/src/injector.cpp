#include "linkscope/injector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "csv_util.hpp"
#include "linkscope/checksum.hpp"
#include "linkscope/error.hpp"

namespace linkscope {

std::string_view to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::SuddenD: return "suddend";
    case AnomalyKind::SuddenR: return "suddenr";
    case AnomalyKind::InstaD: return "instad";
    case AnomalyKind::SlowD: return "slowd";
  }
  return "?";
}

AnomalyKind parse_anomaly_kind(std::string_view text) {
  for (auto k : kAllAnomalies)
    if (to_string(k) == text) return k;
  throw ArgumentError("unknown anomaly kind '" + std::string(text) + "' (expected suddend|suddenr|instad|slowd)");
}

void AnomalySpec::validate() const {
  if (!(affected_fraction > 0.0 && affected_fraction <= 1.0))
    throw ArgumentError("affected_fraction must lie in (0, 1]");
  if (!(spike_prob > 0.0 && spike_prob < 1.0)) throw ArgumentError("spike_prob must lie in (0, 1)");
  if (!(slope_range.first < slope_range.second)) throw ArgumentError("slope_range requires low < high");
  if (!std::isfinite(floor_dbm) || floor_dbm < kMinDbm || floor_dbm > kMaxDbm)
    throw ArgumentError("floor_dbm must lie in [-110, 0]");
}

LabeledTrace::LabeledTrace(RssiTrace trace_, Label label_, std::optional<AnomalyKind> kind_,
                           std::optional<InjectionReport> report_)
    : trace(std::move(trace_)), label(label_), kind(kind_), report(std::move(report_)) {
  const bool anomalous = label == Label::Anomalous;
  if (anomalous != kind.has_value() || anomalous != report.has_value())
    throw ArgumentError("labeled trace " + trace.link_id() + ": ANOMALOUS iff kind iff report");
}

Rng link_rng(std::uint64_t seed, std::string_view link_id) {
  const std::uint64_t h = fnv1a(link_id);
  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(sseq);
}

namespace {

Samples copy_samples(const RssiTrace& t) {
  Samples s;
  std::copy(t.samples().begin(), t.samples().end(), s.begin());
  return s;
}

void check_onset(std::size_t onset) {
  if (onset >= kTraceLength) throw ArgumentError("onset outside the trace");
}

// Drives one sample to the floor without ever raising it.
double floored(double sample, double floor_dbm) { return std::min(sample, floor_dbm); }

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

std::pair<RssiTrace, InjectionReport> apply_sudden_d(const RssiTrace& t, std::size_t onset, double floor_dbm) {
  check_onset(onset);
  auto s = copy_samples(t);
  for (std::size_t i = onset; i < kTraceLength; ++i) s[i] = floored(s[i], floor_dbm);
  return {t.with_samples(s), InjectionReport{onset, kTraceLength - onset, std::nullopt, std::nullopt}};
}

std::pair<RssiTrace, InjectionReport> apply_sudden_r(const RssiTrace& t, std::size_t onset, std::size_t duration,
                                                     double floor_dbm) {
  check_onset(onset);
  auto s = copy_samples(t);
  const std::size_t end = std::min(kTraceLength, onset + duration);
  for (std::size_t i = onset; i < end; ++i) s[i] = floored(s[i], floor_dbm);
  return {t.with_samples(s), InjectionReport{onset, duration, std::nullopt, std::nullopt}};
}

std::pair<RssiTrace, InjectionReport> apply_insta_d(const RssiTrace& t, std::vector<std::size_t> spike_indices,
                                                    double floor_dbm) {
  if (spike_indices.empty()) throw ArgumentError("InstaD needs at least one spike");
  std::sort(spike_indices.begin(), spike_indices.end());
  spike_indices.erase(std::unique(spike_indices.begin(), spike_indices.end()), spike_indices.end());
  auto s = copy_samples(t);
  for (auto i : spike_indices) {
    check_onset(i);
    s[i] = floored(s[i], floor_dbm);
  }
  InjectionReport report{spike_indices.front(), 1, std::nullopt, spike_indices};
  return {t.with_samples(s), std::move(report)};
}

std::pair<RssiTrace, InjectionReport> apply_slow_d(const RssiTrace& t, std::size_t onset, std::size_t duration,
                                                   double slope, double floor_dbm) {
  check_onset(onset);
  if (duration == 0) throw ArgumentError("SlowD duration must be positive");
  auto s = copy_samples(t);
  const double held_drop = slope * static_cast<double>(duration - 1);
  for (std::size_t x = onset; x < kTraceLength; ++x) {
    const double drop = x < onset + duration ? slope * static_cast<double>(x - onset) : held_drop;
    s[x] = std::min(s[x], quantize_dbm(std::max(floor_dbm, s[x] - drop)));
  }
  return {t.with_samples(s), InjectionReport{onset, duration, slope, std::nullopt}};
}

std::pair<RssiTrace, InjectionReport> inject_sudden_d(const RssiTrace& t, const AnomalySpec& spec, Rng& rng) {
  return apply_sudden_d(t, uniform_index(rng, 199, 279), spec.floor_dbm);
}

std::pair<RssiTrace, InjectionReport> inject_sudden_r(const RssiTrace& t, const AnomalySpec& spec, Rng& rng) {
  const auto onset = uniform_index(rng, 24, 274);
  const auto duration = uniform_index(rng, 5, 20);
  return apply_sudden_r(t, onset, duration, spec.floor_dbm);
}

std::pair<RssiTrace, InjectionReport> inject_insta_d(const RssiTrace& t, const AnomalySpec& spec, Rng& rng) {
  std::vector<std::size_t> hits;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < kTraceLength; ++i)
    if (u(rng) < spec.spike_prob) hits.push_back(i);
  if (hits.empty()) hits.push_back(uniform_index(rng, 0, kTraceLength - 1));
  return apply_insta_d(t, std::move(hits), spec.floor_dbm);
}

std::pair<RssiTrace, InjectionReport> inject_slow_d(const RssiTrace& t, const AnomalySpec& spec, Rng& rng) {
  const auto onset = uniform_index(rng, 0, 19);
  const double slope = std::uniform_real_distribution<double>(spec.slope_range.first, spec.slope_range.second)(rng);
  const auto duration = uniform_index(rng, 150, 180);
  return apply_slow_d(t, onset, duration, slope, spec.floor_dbm);
}

std::size_t affected_count(double fraction, std::size_t n) {
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
}

std::vector<LabeledTrace> inject(const Dataset& dataset, const AnomalySpec& spec) {
  spec.validate();
  if (dataset.size() < 2) throw ArgumentError("inject needs at least 2 traces");
  for (const auto& t : dataset)
    if (t.has_loss()) throw ArgumentError("inject requires a lossless dataset; " + t.link_id() + " has LOSS");

  const std::size_t n = dataset.size();
  const std::size_t k = affected_count(spec.affected_fraction, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng selector(spec.seed);
  std::shuffle(order.begin(), order.end(), selector);
  std::vector<bool> affected(n, false);
  for (std::size_t i = 0; i < k; ++i) affected[order[i]] = true;

  std::vector<LabeledTrace> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = dataset[i];
    if (!affected[i]) {
      out.emplace_back(t, Label::Normal);
      continue;
    }
    Rng rng = link_rng(spec.seed, t.link_id());
    std::pair<RssiTrace, InjectionReport> r = [&] {
      switch (spec.kind) {
        case AnomalyKind::SuddenD: return inject_sudden_d(t, spec, rng);
        case AnomalyKind::SuddenR: return inject_sudden_r(t, spec, rng);
        case AnomalyKind::InstaD: return inject_insta_d(t, spec, rng);
        case AnomalyKind::SlowD: return inject_slow_d(t, spec, rng);
      }
      throw ArgumentError("unknown anomaly kind");
    }();
    out.emplace_back(std::move(r.first), Label::Anomalous, spec.kind, std::move(r.second));
  }
  return out;
}

void write_labels_csv(const std::vector<LabeledTrace>& labeled, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "link_id,label,kind,onset,duration,slope\n";
  for (const auto& lt : labeled) {
    out << detail::escape_field(lt.trace.link_id()) << ',' << to_string(lt.label) << ',';
    if (lt.kind) out << to_string(*lt.kind);
    out << ',';
    if (lt.report) out << lt.report->onset << ',' << lt.report->duration;
    else out << ',';
    out << ',';
    if (lt.report && lt.report->slope) out << detail::format_exact(*lt.report->slope);
    out << '\n';
  }
  if (!out) throw IngestError("write failed for " + path.string());
}

std::vector<LabeledTrace> read_labeled(const std::filesystem::path& traces_csv, const std::filesystem::path& labels_csv) {
  const Dataset traces = read_canonical_csv(traces_csv);
  std::ifstream in(labels_csv, std::ios::binary);
  if (!in) throw IngestError("cannot read " + labels_csv.string());
  std::string line;
  std::getline(in, line);
  detail::strip_cr(line);
  if (line != "link_id,label,kind,onset,duration,slope") throw FormatError("unexpected labels header", 1);
  std::map<std::string, std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() != 6) throw FormatError("labels row needs 6 columns", line_no);
    rows[f[0]] = std::move(f);
  }
  std::vector<LabeledTrace> out;
  out.reserve(traces.size());
  for (const auto& t : traces) {
    const auto it = rows.find(t.link_id());
    if (it == rows.end()) throw FormatError("no label for link " + t.link_id());
    const auto& f = it->second;
    const Label label = parse_label(f[1]);
    if (label == Label::Normal) {
      out.emplace_back(t, label);
      continue;
    }
    InjectionReport report;
    report.onset = static_cast<std::size_t>(detail::parse_int(f[3], 0));
    report.duration = static_cast<std::size_t>(detail::parse_int(f[4], 0));
    if (!f[5].empty()) report.slope = detail::parse_double(f[5], 0);
    out.emplace_back(t, label, parse_anomaly_kind(f[2]), report);
  }
  if (rows.size() != out.size()) throw FormatError("labels file lists links missing from the traces file");
  return out;
}

Dataset traces_of(const std::vector<LabeledTrace>& labeled) {
  std::vector<RssiTrace> traces;
  traces.reserve(labeled.size());
  for (const auto& lt : labeled) traces.push_back(lt.trace);
  return Dataset(std::move(traces), Provenance::CanonicalCsv);
}

}  // namespace linkscope
