#include "linkscope/trace.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "csv_util.hpp"
#include "linkscope/error.hpp"

namespace linkscope {

RssiTrace::RssiTrace(std::string link_id, int tx_node, int rx_node, int noise_level_dbm, const Samples& samples)
    : link_id_(std::move(link_id)),
      tx_node_(tx_node),
      rx_node_(rx_node),
      noise_level_dbm_(noise_level_dbm),
      samples_(samples) {
  if (link_id_.empty()) throw ArgumentError("trace link_id must not be empty");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const double s = samples_[i];
    if (!is_loss(s) && (s < kMinDbm || s > kMaxDbm)) {
      throw ArgumentError("trace " + link_id_ + ": sample " + std::to_string(i) + " = " + std::to_string(s) +
                          " dBm outside [-110, 0]");
    }
  }
}

bool RssiTrace::has_loss() const {
  return std::any_of(samples_.begin(), samples_.end(), [](double s) { return is_loss(s); });
}

std::size_t RssiTrace::loss_count() const {
  return static_cast<std::size_t>(std::count_if(samples_.begin(), samples_.end(), [](double s) { return is_loss(s); }));
}

RssiTrace RssiTrace::with_samples(const Samples& samples) const {
  return RssiTrace(link_id_, tx_node_, rx_node_, noise_level_dbm_, samples);
}

bool operator==(const RssiTrace& a, const RssiTrace& b) {
  if (a.link_id_ != b.link_id_ || a.tx_node_ != b.tx_node_ || a.rx_node_ != b.rx_node_ ||
      a.noise_level_dbm_ != b.noise_level_dbm_)
    return false;
  for (std::size_t i = 0; i < kTraceLength; ++i) {
    const double x = a.samples_[i];
    const double y = b.samples_[i];
    if (is_loss(x) || is_loss(y)) {
      if (is_loss(x) != is_loss(y)) return false;
    } else if (std::bit_cast<std::uint64_t>(x) != std::bit_cast<std::uint64_t>(y)) {
      return false;
    }
  }
  return true;
}

Dataset::Dataset(std::vector<RssiTrace> traces, Provenance provenance, std::optional<std::uint64_t> seed)
    : traces_(std::move(traces)), provenance_(provenance), seed_(seed) {
  std::sort(traces_.begin(), traces_.end(),
            [](const RssiTrace& a, const RssiTrace& b) { return a.link_id() < b.link_id(); });
  std::set<std::tuple<int, int, int>> identities;
  for (std::size_t i = 0; i < traces_.size(); ++i) {
    if (i > 0 && traces_[i].link_id() == traces_[i - 1].link_id())
      throw ArgumentError("duplicate link_id " + traces_[i].link_id());
    const auto& t = traces_[i];
    if (!identities.emplace(t.tx_node(), t.rx_node(), t.noise_level_dbm()).second) {
      throw ArgumentError("duplicate (tx, rx, noise) identity for link " + t.link_id());
    }
  }
}

const char* to_string(Label label) { return label == Label::Anomalous ? "ANOMALOUS" : "NORMAL"; }

Label parse_label(std::string_view text) {
  if (text == "ANOMALOUS") return Label::Anomalous;
  if (text == "NORMAL") return Label::Normal;
  throw FormatError("unknown label '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Rutgers ingestion

namespace {

std::vector<long> integers_in(std::string_view text, bool allow_sign) {
  std::vector<long> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool digit = std::isdigit(static_cast<unsigned char>(text[i])) != 0;
    const bool signed_digit = allow_sign && text[i] == '-' && i + 1 < text.size() &&
                              std::isdigit(static_cast<unsigned char>(text[i + 1])) != 0;
    if (!digit && !signed_digit) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    long value = 0;
    std::from_chars(text.data() + i, text.data() + j, value);
    out.push_back(value);
    i = j;
  }
  return out;
}

RssiTrace read_rutgers_file(const std::filesystem::path& file, const std::filesystem::path& root, double dbm_offset) {
  const auto rel = std::filesystem::relative(file, root);
  const auto stem_ints = integers_in(file.stem().string(), false);
  if (stem_ints.size() < 2) throw FormatError("cannot derive tx/rx node ids from file name " + rel.string());
  const int tx = static_cast<int>(stem_ints[stem_ints.size() - 2]);
  const int rx = static_cast<int>(stem_ints.back());
  int noise = 0;
  if (rel.has_parent_path() && !rel.parent_path().empty()) {
    const auto noise_ints = integers_in(rel.parent_path().filename().string(), true);
    if (noise_ints.empty()) throw FormatError("cannot derive noise level from directory of " + rel.string());
    noise = static_cast<int>(noise_ints.front());
  }

  std::ifstream in(file);
  if (!in) throw IngestError("cannot read Rutgers file " + file.string());
  Samples samples;
  samples.fill(kLoss);
  std::string line;
  std::size_t line_no = 0;
  std::size_t implicit_seq = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::vector<long> values;
    std::string tok;
    while (fields >> tok) {
      long v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw FormatError("non-integer token '" + tok + "' in " + file.string(), line_no);
      values.push_back(v);
    }
    long seq = 0;
    long raw = 0;
    if (values.size() == 1) {
      seq = static_cast<long>(implicit_seq++);
      raw = values[0];
    } else if (values.size() == 2) {
      seq = values[0];
      raw = values[1];
    } else {
      throw FormatError("expected 'rssi' or 'seq rssi' in " + file.string(), line_no);
    }
    if (raw < 0 || raw > 128) throw FormatError("raw RSSI " + std::to_string(raw) + " outside [0,128] in " + file.string(), line_no);
    if (seq < 0 || seq >= static_cast<long>(kTraceLength)) continue;  // beyond the recording window
    if (raw == 128) continue;                                           // explicit loss marker
    const double dbm = quantize_dbm(static_cast<double>(raw) + dbm_offset);
    if (dbm < kMinDbm || dbm > kMaxDbm)
      throw FormatError("raw RSSI " + std::to_string(raw) + " maps outside [-110, 0] dBm in " + file.string(), line_no);
    samples[static_cast<std::size_t>(seq)] = dbm;
  }
  std::string link_id = rel.generic_string();
  return RssiTrace(std::move(link_id), tx, rx, noise, samples);
}

}  // namespace

Dataset ingest_rutgers(const std::filesystem::path& root, double dbm_offset) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) throw IngestError("not a directory: " + root.string());
  std::vector<std::filesystem::path> files;
  for (auto it = std::filesystem::recursive_directory_iterator(root, ec); it != std::filesystem::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec) throw IngestError("cannot list " + root.string() + ": " + ec.message());
    if (!it->is_regular_file()) continue;
    const auto name = it->path().filename().string();
    if (!name.empty() && name.front() == '.') continue;
    files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RssiTrace> traces;
  traces.reserve(files.size());
  for (const auto& f : files) traces.push_back(read_rutgers_file(f, root, dbm_offset));
  return Dataset(std::move(traces), Provenance::RutgersRaw);
}

Dataset filter_lossless(const Dataset& dataset) {
  std::vector<RssiTrace> kept;
  for (const auto& t : dataset)
    if (!t.has_loss()) kept.push_back(t);
  return Dataset(std::move(kept), dataset.provenance(), dataset.seed());
}

// ---------------------------------------------------------------------------
// Synthetic fallback

Dataset generate_synthetic(std::size_t n_links, std::uint64_t seed) {
  if (n_links == 0) throw ArgumentError("generate_synthetic: n_links must be >= 1");
  static constexpr std::array<int, 5> kNoiseLevels{0, -10, -20, -30, -40};
  std::vector<RssiTrace> traces;
  traces.reserve(n_links);
  for (std::size_t i = 0; i < n_links; ++i) {
    std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(sseq);
    std::uniform_real_distribution<double> base_dist(-80.0, -55.0);
    std::normal_distribution<double> jitter(0.0, 1.5);
    const double base = base_dist(rng);
    Samples s;
    for (auto& v : s) v = quantize_dbm(std::clamp(base + jitter(rng), -95.0, -40.0));

    // 29 nodes give 29*28 ordered pairs per noise level; larger datasets keep counting.
    const std::size_t pair = i / kNoiseLevels.size();
    const int tx = static_cast<int>(pair / 28) + 1;
    int rx = static_cast<int>(pair % 28) + 1;
    if (rx >= tx) ++rx;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%07zu", i);
    traces.emplace_back(id, tx, rx, kNoiseLevels[i % kNoiseLevels.size()], s);
  }
  return Dataset(std::move(traces), Provenance::Synthetic, seed);
}

// ---------------------------------------------------------------------------
// Canonical CSV

void write_canonical_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  std::string line = "link_id,tx,rx,noise_dbm";
  for (std::size_t i = 0; i < kTraceLength; ++i) line += detail::sample_column(i);
  out << line << '\n';
  for (const auto& t : dataset) {
    line = detail::escape_field(t.link_id());
    line += ',' + std::to_string(t.tx_node()) + ',' + std::to_string(t.rx_node()) + ',' + std::to_string(t.noise_level_dbm());
    for (double s : t.samples()) {
      line += ',';
      if (!is_loss(s)) line += detail::format_fixed(s, 2);
    }
    out << line << '\n';
  }
  if (!out) throw IngestError("write failed for " + path.string());
}

Dataset read_canonical_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header in " + path.string(), 1);
  detail::strip_cr(line);
  const auto header = detail::split_csv(line);
  if (header.size() != 4 + kTraceLength || header[0] != "link_id" || header[1] != "tx" || header[2] != "rx" ||
      header[3] != "noise_dbm" || header[4] != "s000" || header.back() != "s299")
    throw FormatError("unexpected canonical CSV header in " + path.string(), 1);
  std::vector<RssiTrace> traces;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 4 + kTraceLength)
      throw FormatError("expected " + std::to_string(4 + kTraceLength) + " columns, got " + std::to_string(fields.size()),
                        line_no);
    Samples s;
    for (std::size_t i = 0; i < kTraceLength; ++i) {
      const auto& f = fields[4 + i];
      s[i] = f.empty() ? kLoss : detail::parse_double(f, line_no);
    }
    try {
      traces.emplace_back(fields[0], detail::parse_int(fields[1], line_no), detail::parse_int(fields[2], line_no),
                          detail::parse_int(fields[3], line_no), s);
    } catch (const ArgumentError& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return Dataset(std::move(traces), Provenance::CanonicalCsv);
}

}  // namespace linkscope
