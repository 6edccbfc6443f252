#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "linkscope/error.hpp"
#include "linkscope/trace.hpp"
#include "test_util.hpp"

using namespace linkscope;

namespace {

Samples constant(double v) {
  Samples s;
  s.fill(v);
  return s;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST(RssiTrace, RejectsOutOfRangeSamples) {
  auto s = constant(-60.0);
  s[3] = 1.0;
  EXPECT_THROW(RssiTrace("a", 1, 2, 0, s), ArgumentError);
  s[3] = -110.5;
  EXPECT_THROW(RssiTrace("a", 1, 2, 0, s), ArgumentError);
  s[3] = kLoss;
  RssiTrace t("a", 1, 2, 0, s);
  EXPECT_TRUE(t.has_loss());
  EXPECT_EQ(t.loss_count(), 1u);
}

TEST(Dataset, SortsByLinkIdAndRejectsDuplicateIdentity) {
  Dataset d({RssiTrace("b", 1, 2, 0, constant(-60)), RssiTrace("a", 2, 1, 0, constant(-61))}, Provenance::Synthetic);
  EXPECT_EQ(d[0].link_id(), "a");
  EXPECT_EQ(d[1].link_id(), "b");
  EXPECT_THROW(Dataset({RssiTrace("a", 1, 2, 0, constant(-60)), RssiTrace("b", 1, 2, 0, constant(-60))},
                       Provenance::Synthetic),
               ArgumentError);
}

TEST(IngestRutgers, ConstantFileMapsThroughOffset) {
  test::TempDir dir;
  write_lines(dir.path() / "noise-70" / "3_4.txt", std::vector<std::string>(300, "45"));
  const auto d = ingest_rutgers(dir.path(), -95.0);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].tx_node(), 3);
  EXPECT_EQ(d[0].rx_node(), 4);
  EXPECT_EQ(d[0].noise_level_dbm(), -70);
  EXPECT_EQ(d[0].loss_count(), 0u);
  for (double v : d[0].samples()) EXPECT_EQ(v, -50.0);
}

TEST(IngestRutgers, EmptyDirectoryGivesEmptyDataset) {
  test::TempDir dir;
  EXPECT_TRUE(ingest_rutgers(dir.path()).empty());
}

TEST(IngestRutgers, LossMarkers) {
  test::TempDir dir;
  std::vector<std::string> lines(300, "40");
  lines[7] = "128";
  write_lines(dir.path() / "n0" / "1_2.txt", lines);
  // explicit sequence numbers with a gap at 10, and a short file
  std::vector<std::string> seq;
  for (int i = 0; i < 300; ++i)
    if (i != 10) seq.push_back(std::to_string(i) + " 50");
  write_lines(dir.path() / "n0" / "2_1.txt", seq);
  write_lines(dir.path() / "n0" / "5_6.txt", std::vector<std::string>(250, "30"));
  const auto d = ingest_rutgers(dir.path());
  ASSERT_EQ(d.size(), 3u);
  std::map<int, const RssiTrace*> by_tx;
  for (const auto& t : d) by_tx[t.tx_node()] = &t;
  EXPECT_EQ(by_tx[1]->loss_count(), 1u);
  EXPECT_TRUE(is_loss((*by_tx[1])[7]));
  EXPECT_EQ(by_tx[2]->loss_count(), 1u);
  EXPECT_TRUE(is_loss((*by_tx[2])[10]));
  EXPECT_EQ((*by_tx[2])[11], -45.0);
  EXPECT_EQ(by_tx[5]->loss_count(), 50u);
  EXPECT_EQ(filter_lossless(d).size(), 0u);
}

TEST(IngestRutgers, RawValueOutOfRangeIsFormatError) {
  test::TempDir dir;
  std::vector<std::string> lines(300, "40");
  lines[20] = "129";
  write_lines(dir.path() / "n0" / "1_2.txt", lines);
  EXPECT_THROW(ingest_rutgers(dir.path()), FormatError);
}

TEST(IngestRutgers, MissingRootIsIngestError) {
  EXPECT_THROW(ingest_rutgers("/nonexistent/linkscope/root"), IngestError);
}

TEST(FilterLossless, DropsLossyTracesAndIsIdempotent) {
  auto lossy = constant(-60);
  lossy[100] = kLoss;
  Dataset d({RssiTrace("a", 1, 2, 0, constant(-60)), RssiTrace("b", 1, 3, 0, lossy),
             RssiTrace("c", 1, 4, 0, constant(-70))},
            Provenance::CanonicalCsv);
  const auto f = filter_lossless(d);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].link_id(), "a");
  EXPECT_EQ(f[1].link_id(), "c");
  EXPECT_EQ(filter_lossless(f), f);
}

TEST(FilterLossless, LosslessDatasetUnchanged) {
  const auto d = generate_synthetic(20, 3);
  EXPECT_EQ(filter_lossless(d), d);
}

TEST(Synthetic, RangeAndDeterminism) {
  const auto one = generate_synthetic(1, 0);
  ASSERT_EQ(one.size(), 1u);
  for (double v : one[0].samples()) {
    EXPECT_GE(v, -95.0);
    EXPECT_LE(v, -40.0);
  }
  EXPECT_EQ(generate_synthetic(2123, 7), generate_synthetic(2123, 7));
  EXPECT_FALSE(generate_synthetic(50, 7) == generate_synthetic(50, 8));
  EXPECT_THROW(generate_synthetic(0, 1), ArgumentError);
}

TEST(Synthetic, BaseLevelMeanWithinDrawRange) {
  // The per-link sample mean estimates the base level (jitter averages out).
  const auto d = generate_synthetic(100, 1);
  double total = 0.0;
  for (const auto& t : d) {
    double s = 0.0;
    for (double v : t.samples()) s += v;
    total += s / kTraceLength;
  }
  const double mean = total / d.size();
  EXPECT_GE(mean, -80.0);
  EXPECT_LE(mean, -55.0);
}

TEST(Synthetic, UniqueIdentities) {
  const auto d = generate_synthetic(2123, 7);
  std::set<std::tuple<int, int, int>> ids;
  for (const auto& t : d) ids.insert({t.tx_node(), t.rx_node(), t.noise_level_dbm()});
  EXPECT_EQ(ids.size(), d.size());
}

TEST(CanonicalCsv, RoundTripProperty) {
  test::TempDir dir;
  std::mt19937_64 rng(99);
  for (int round = 0; round < 25; ++round) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<RssiTrace> traces;
    for (std::size_t i = 0; i < n; ++i) {
      Samples s;
      for (auto& v : s) {
        const auto r = rng() % 20;
        v = r == 0 ? kLoss : quantize_dbm(-110.0 + (rng() % 11001) / 100.0);
      }
      traces.emplace_back("link" + std::to_string(i), static_cast<int>(i), static_cast<int>(i + 1),
                          -static_cast<int>(rng() % 5) * 10, s);
    }
    const Dataset d(std::move(traces), Provenance::CanonicalCsv);
    const auto path = dir.path() / "rt.csv";
    write_canonical_csv(d, path);
    EXPECT_EQ(read_canonical_csv(path), d);
  }
}

TEST(CanonicalCsv, IngestRoundTripKeepsLoss) {
  test::TempDir dir;
  std::vector<std::string> lines(300, "33");
  lines[0] = "128";
  write_lines(dir.path() / "raw" / "n0" / "1_2.txt", lines);
  const auto d = ingest_rutgers(dir.path() / "raw");
  write_canonical_csv(d, dir.path() / "c.csv");
  const auto back = read_canonical_csv(dir.path() / "c.csv");
  EXPECT_EQ(back, d);
  EXPECT_TRUE(is_loss(back[0][0]));
}

TEST(CanonicalCsv, ShortRowIsParseErrorWithLine) {
  test::TempDir dir;
  const auto path = dir.path() / "bad.csv";
  write_canonical_csv(generate_synthetic(2, 1), path);
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  lines[2] = lines[2].substr(0, lines[2].rfind(','));  // 299 sample columns
  write_lines(path, lines);
  try {
    read_canonical_csv(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(CanonicalCsv, HeaderOnlyIsEmpty) {
  test::TempDir dir;
  const auto path = dir.path() / "h.csv";
  write_canonical_csv(Dataset({}, Provenance::CanonicalCsv), path);
  EXPECT_TRUE(read_canonical_csv(path).empty());
}

TEST(CanonicalCsv, HeaderFormat) {
  test::TempDir dir;
  const auto path = dir.path() / "h.csv";
  write_canonical_csv(generate_synthetic(1, 0), path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.substr(0, 28), "link_id,tx,rx,noise_dbm,s000");
  EXPECT_EQ(header.substr(header.size() - 5), ",s299");
}
