#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace linkscope {

inline constexpr std::size_t kTraceLength = 300;
inline constexpr double kMinDbm = -110.0;
inline constexpr double kMaxDbm = 0.0;
inline constexpr double kDefaultDbmOffset = -95.0;

// LOSS is stored as a quiet NaN; use is_loss() rather than comparing.
inline constexpr double kLoss = std::numeric_limits<double>::quiet_NaN();
inline bool is_loss(double sample) { return std::isnan(sample); }

// Rounds to the 0.01 dB resolution of the canonical CSV so that every value the
// toolkit produces survives a write/read cycle bit-exactly.
inline double quantize_dbm(double dbm) { return std::nearbyint(dbm * 100.0) / 100.0; }

using Samples = std::array<double, kTraceLength>;

// One link recording. Immutable after construction; the constructor enforces
// the sample range invariant.
class RssiTrace {
 public:
  RssiTrace(std::string link_id, int tx_node, int rx_node, int noise_level_dbm, const Samples& samples);

  const std::string& link_id() const { return link_id_; }
  int tx_node() const { return tx_node_; }
  int rx_node() const { return rx_node_; }
  int noise_level_dbm() const { return noise_level_dbm_; }
  std::span<const double> samples() const { return samples_; }
  double operator[](std::size_t i) const { return samples_[i]; }

  bool has_loss() const;
  std::size_t loss_count() const;

  // Same identity, new samples (used by the injector).
  RssiTrace with_samples(const Samples& samples) const;

  // LOSS-aware, bit-exact equality.
  friend bool operator==(const RssiTrace& a, const RssiTrace& b);

 private:
  std::string link_id_;
  int tx_node_;
  int rx_node_;
  int noise_level_dbm_;
  Samples samples_;
};

enum class Provenance { RutgersRaw, CanonicalCsv, Synthetic };

// Ordered collection of traces. Always sorted by link_id; (tx, rx, noise) unique.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<RssiTrace> traces, Provenance provenance, std::optional<std::uint64_t> seed = std::nullopt);

  const std::vector<RssiTrace>& traces() const { return traces_; }
  std::size_t size() const { return traces_.size(); }
  bool empty() const { return traces_.empty(); }
  const RssiTrace& operator[](std::size_t i) const { return traces_[i]; }
  auto begin() const { return traces_.begin(); }
  auto end() const { return traces_.end(); }

  Provenance provenance() const { return provenance_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

  // Equality of the trace content; provenance is metadata and not compared.
  friend bool operator==(const Dataset& a, const Dataset& b) { return a.traces_ == b.traces_; }

 private:
  std::vector<RssiTrace> traces_;
  Provenance provenance_ = Provenance::CanonicalCsv;
  std::optional<std::uint64_t> seed_;
};

enum class Label { Normal, Anomalous };

const char* to_string(Label label);
Label parse_label(std::string_view text);

// Reads a directory of Rutgers-style per-link files.
//
// Layout: <root>/<noise dir>/<file>. The noise level is the signed integer in the
// noise directory name ("noise-70", "-70", "n0"); the transmitter and receiver are
// the last two integers in the file name ("12_5.txt", "node12-node5"). Files placed
// directly in <root> get noise level 0. Each line holds either "rssi" (sequence
// number implied by the line index) or "seq rssi". Raw 128, a missing sequence
// number, or a file shorter than 300 samples yields LOSS.
Dataset ingest_rutgers(const std::filesystem::path& root, double dbm_offset = kDefaultDbmOffset);

Dataset filter_lossless(const Dataset& dataset);

// Per link: base level ~ U[-80, -55] dBm plus i.i.d. N(0, 1.5^2) jitter, clipped to
// [-95, -40] and quantized to 0.01 dB. Pure function of (n_links, seed).
Dataset generate_synthetic(std::size_t n_links, std::uint64_t seed);

// Canonical CSV: `link_id,tx,rx,noise_dbm,s000,...,s299`, two decimals, LOSS empty.
void write_canonical_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_canonical_csv(const std::filesystem::path& path);

}  // namespace linkscope
