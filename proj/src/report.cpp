#include <fstream>
#include <sstream>

#include "csv_util.hpp"
#include "linkscope/error.hpp"
#include "linkscope/evaluation.hpp"

namespace linkscope {

namespace {

using detail::format_fixed;

// Values are published at two decimals; the JSON carries the same rounded number.
std::string two(double v) { return format_fixed(v, 2); }
double rounded(double v, int digits) { return std::stod(format_fixed(v, digits)); }

const char* kRecordHeader =
    "anomaly,representation,encoded,family,scaler,params,tp,fp,fn,tn,precision,recall,f1,cv_f1,status,fits,"
    "scaler_checksum,autoencoder_checksum,diagnostics";

struct Row {
  DetectorFamily family;
  bool encoded;
};

std::vector<Row> table_rows() {
  std::vector<Row> rows{{DetectorFamily::Threshold, false}};
  for (auto f : kAllFamilies) {
    if (f == DetectorFamily::Threshold) continue;
    rows.push_back({f, false});
    rows.push_back({f, true});
  }
  return rows;
}

std::string row_name(const Row& r) {
  return (r.encoded ? "encoder+" : "") + std::string(display_name(r.family));
}

std::string_view group_name(Representation rep) {
  return rep == Representation::Fft ? std::string_view("frequency") : to_string(rep);
}

const EvalRecord* find(const std::vector<EvalRecord>& records, AnomalyKind a, Representation rep, const Row& row) {
  for (const auto& r : records)
    if (r.anomaly == a && r.representation == rep && r.encoded == row.encoded && r.family == row.family) return &r;
  return nullptr;
}

bool usable(const EvalRecord* r) { return r && r->status != "failed"; }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string records_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << to_string(r.anomaly) << ',' << to_string(r.representation) << ',' << (r.encoded ? 1 : 0) << ','
        << to_string(r.family) << ',' << to_string(r.scaler) << ',' << r.params << ',' << r.counts.tp << ','
        << r.counts.fp << ',' << r.counts.fn << ',' << r.counts.tn << ',' << two(r.precision) << ',' << two(r.recall)
        << ',' << two(r.f1) << ',' << format_fixed(r.cv_f1, 4) << ',' << r.status << ',' << r.fits << ','
        << r.scaler_checksum << ',' << r.autoencoder_checksum << ',' << r.diagnostics << '\n';
  }
  return out.str();
}

nlohmann::ordered_json records_json(const std::vector<EvalRecord>& records) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    arr.push_back({{"anomaly", std::string(to_string(r.anomaly))},
                   {"representation", std::string(to_string(r.representation))},
                   {"encoded", r.encoded},
                   {"family", std::string(to_string(r.family))},
                   {"scaler", std::string(to_string(r.scaler))},
                   {"params", r.params},
                   {"tp", r.counts.tp},
                   {"fp", r.counts.fp},
                   {"fn", r.counts.fn},
                   {"tn", r.counts.tn},
                   {"precision", rounded(r.precision, 2)},
                   {"recall", rounded(r.recall, 2)},
                   {"f1", rounded(r.f1, 2)},
                   {"cv_f1", rounded(r.cv_f1, 4)},
                   {"status", r.status},
                   {"fits", r.fits},
                   {"scaler_checksum", r.scaler_checksum},
                   {"autoencoder_checksum", r.autoencoder_checksum},
                   {"diagnostics", r.diagnostics}});
  }
  return arr;
}

std::vector<EvalRecord> read_records_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read " + path.string());
  std::vector<EvalRecord> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& o : j) {
      EvalRecord r;
      r.anomaly = parse_anomaly_kind(o.at("anomaly").get<std::string>());
      r.representation = parse_representation(o.at("representation").get<std::string>());
      r.encoded = o.at("encoded").get<bool>();
      r.family = parse_family(o.at("family").get<std::string>());
      r.scaler = parse_scaler(o.at("scaler").get<std::string>());
      r.params = o.at("params").get<std::string>();
      r.counts = {o.at("tp").get<std::size_t>(), o.at("fp").get<std::size_t>(), o.at("fn").get<std::size_t>(),
                  o.at("tn").get<std::size_t>()};
      r.precision = o.at("precision").get<double>();
      r.recall = o.at("recall").get<double>();
      r.f1 = o.at("f1").get<double>();
      r.cv_f1 = o.at("cv_f1").get<double>();
      r.status = o.at("status").get<std::string>();
      r.fits = o.at("fits").get<std::size_t>();
      r.scaler_checksum = o.at("scaler_checksum").get<std::string>();
      r.autoencoder_checksum = o.at("autoencoder_checksum").get<std::string>();
      r.diagnostics = o.at("diagnostics").get<std::string>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid records file " + path.string() + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError("invalid records file " + path.string() + ": " + e.what());
  }
  return out;
}

std::string candidates_csv(const std::vector<CandidateResult>& candidates) {
  std::ostringstream out;
  out << "anomaly,representation,encoded,family,scaler,params,cv_f1,failed,diagnostics\n";
  for (const auto& c : candidates) {
    out << to_string(c.anomaly) << ',' << to_string(c.representation) << ',' << (c.encoded ? 1 : 0) << ','
        << to_string(c.candidate.family) << ',' << to_string(c.candidate.scaler) << ',' << c.candidate.describe() << ','
        << format_fixed(c.cv_f1, 4) << ',' << (c.failed ? 1 : 0) << ',' << c.diagnostics << '\n';
  }
  return out.str();
}

std::string anomaly_table_csv(const std::vector<EvalRecord>& records, AnomalyKind anomaly) {
  std::ostringstream out;
  out << "method";
  for (auto rep : kManualRepresentations)
    for (const char* m : {"prec", "rec", "f1"}) out << ',' << group_name(rep) << '_' << m;
  out << '\n';
  for (const auto& row : table_rows()) {
    out << row_name(row);
    for (auto rep : kManualRepresentations) {
      const auto* r = find(records, anomaly, rep, row);
      for (int k = 0; k < 3; ++k) {
        out << ',';
        if (!usable(r)) out << '-';
        else out << two(k == 0 ? r->precision : k == 1 ? r->recall : r->f1);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string anomaly_table_markdown(const std::vector<EvalRecord>& records, AnomalyKind anomaly) {
  std::ostringstream out;
  out << "### " << to_string(anomaly) << "\n\n| Method |";
  for (auto rep : kManualRepresentations) out << ' ' << group_name(rep) << " Prec | Rec | F1 |";
  out << "\n|---|";
  for (std::size_t i = 0; i < kManualRepresentations.size() * 3; ++i) out << "---|";
  out << '\n';
  for (const auto& row : table_rows()) {
    out << "| " << row_name(row) << " |";
    for (auto rep : kManualRepresentations) {
      const auto* r = find(records, anomaly, rep, row);
      if (!usable(r)) {
        out << " - | - | - |";
        continue;
      }
      out << ' ' << two(r->precision) << " | " << two(r->recall) << " | " << two(r->f1);
      if (r->family != DetectorFamily::Threshold) out << " (" << to_string(r->scaler) << ')';
      out << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> render_report(const std::vector<EvalRecord>& records, ReportFormat format,
                                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<AnomalyKind> anomalies;
  for (auto a : kAllAnomalies)
    for (const auto& r : records)
      if (r.anomaly == a) {
        anomalies.push_back(a);
        break;
      }
  std::vector<std::filesystem::path> written;
  switch (format) {
    case ReportFormat::Csv:
      write_file(dir / "records.csv", records_csv(records));
      written.push_back(dir / "records.csv");
      for (auto a : anomalies) {
        const auto path = dir / ("table_" + std::string(to_string(a)) + ".csv");
        write_file(path, anomaly_table_csv(records, a));
        written.push_back(path);
      }
      break;
    case ReportFormat::Json:
      write_file(dir / "records.json", records_json(records).dump(2) + "\n");
      written.push_back(dir / "records.json");
      break;
    case ReportFormat::Markdown: {
      std::string md = "# Detection results\n\nPrecision, recall and F1 on the held-out test split; the "
                       "winning scaler is shown in parentheses.\n";
      for (auto a : anomalies) md += "\n" + anomaly_table_markdown(records, a);
      write_file(dir / "report.md", md);
      written.push_back(dir / "report.md");
      break;
    }
  }
  return written;
}

std::vector<std::filesystem::path> write_run_outputs(const MatrixResult& result, const ExperimentConfig& cfg,
                                                     const std::filesystem::path& dir) {
  auto written = render_report(result.records, ReportFormat::Csv, dir);
  for (auto f : {ReportFormat::Json, ReportFormat::Markdown}) {
    auto more = render_report(result.records, f, dir);
    written.insert(written.end(), more.begin(), more.end());
  }
  write_file(dir / "candidates.csv", candidates_csv(result.candidates));
  written.push_back(dir / "candidates.csv");

  nlohmann::ordered_json m;
  m["tool_version"] = LINKSCOPE_VERSION;
  m["config"] = to_json(cfg);
  m["fits"] = result.fits;
  auto& sums = m["scenario_checksums"];
  sums = nlohmann::ordered_json::object();
  for (const auto& [kind, sum] : result.scenario_checksums) sums[std::string(to_string(kind))] = sum;
  m["records"] = result.records.size();
  m["candidates"] = result.candidates.size();
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  written.push_back(dir / "manifest.json");
  return written;
}

}  // namespace linkscope
