// linkscope: staged command-line front end.
//
//   ingest -> inject -> featurize -> encode -> evaluate -> report
//
// Every stage writes its artifacts plus `<stage>.manifest.json` into --out-dir.
// A stage whose inputs, settings and outputs match its manifest is skipped.

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "linkscope/checksum.hpp"
#include "linkscope/error.hpp"
#include "linkscope/evaluation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace linkscope;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMissingUpstream = 2;
constexpr int kExitConfig = 3;

class MissingUpstream : public Error {
 public:
  using Error::Error;
};

struct Options {
  fs::path data_dir;
  fs::path out_dir = "linkscope-out";
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string kind;
  std::optional<double> dbm_offset;
  std::optional<std::size_t> links;
  bool synthetic = false;
};

// ---------------------------------------------------------------------------
// Output directory lock

class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".linkscope.lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST) throw IngestError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
      if (!stale()) break;
      fs::remove(path_);
    }
    throw Error("output directory " + dir.string() + " is locked by another linkscope process (" + path_.string() +
                ")");
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  bool stale() const {
    std::ifstream in(path_);
    long pid = 0;
    if (!(in >> pid) || pid <= 0) return false;
    return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
  }

  fs::path path_;
};

// ---------------------------------------------------------------------------
// Stage manifests

class Stage {
 public:
  Stage(const fs::path& out_dir, std::string name, json settings)
      : out_(out_dir), name_(std::move(name)), settings_(std::move(settings)) {}

  // Registers an upstream artifact; absent artifacts abort with exit code 2.
  void input(const fs::path& file) {
    if (!fs::exists(file))
      throw MissingUpstream("stage " + name_ + " needs " + file.string() + "; run the upstream stage first");
    inputs_[file.filename().string()] = file_checksum(file);
  }
  void input_checksum(const std::string& key, const std::string& sum) { inputs_[key] = sum; }

  fs::path manifest_path() const { return out_ / (name_ + ".manifest.json"); }

  bool cached() const {
    if (!fs::exists(manifest_path())) return false;
    json m;
    try {
      std::ifstream in(manifest_path());
      m = json::parse(in);
    } catch (const json::exception&) {
      return false;
    }
    if (m.value("stage", "") != name_ || m.value("tool_version", "") != LINKSCOPE_VERSION) return false;
    if (m["inputs"] != inputs_ || m["config"] != settings_) return false;
    for (const auto& [file, sum] : m["outputs"].items()) {
      const auto path = out_ / file;
      if (!fs::exists(path) || file_checksum(path) != sum.get<std::string>()) return false;
    }
    return true;
  }

  void finish(const std::vector<fs::path>& outputs, json summary = json::object()) const {
    json m;
    m["stage"] = name_;
    m["tool_version"] = LINKSCOPE_VERSION;
    m["inputs"] = inputs_;
    m["config"] = settings_;
    json out = json::object();
    for (const auto& p : outputs) out[fs::relative(p, out_).generic_string()] = file_checksum(p);
    m["outputs"] = out;
    m["summary"] = std::move(summary);
    std::ofstream f(manifest_path(), std::ios::binary);
    f << m.dump(2) << '\n';
    if (!f) throw IngestError("cannot write " + manifest_path().string());
  }

  const std::string& name() const { return name_; }

 private:
  fs::path out_;
  std::string name_;
  json settings_;
  json inputs_ = json::object();
};

void report_stage(const Stage& s, bool hit) {
  std::cout << json{{"stage", s.name()}, {"status", "ok"}, {"cache", hit ? "hit" : "miss"}}.dump() << '\n';
}

// Runs body() unless the stage is cached; body returns the outputs and a summary.
template <class Body>
void run_stage(const Stage& s, Body&& body) {
  if (s.cached()) {
    report_stage(s, true);
    return;
  }
  auto [outputs, summary] = body();
  s.finish(outputs, std::move(summary));
  report_stage(s, false);
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig load_settings(const Options& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw IngestError("cannot read config " + o.config.string());
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + o.config.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
  }
  if (!o.profile.empty()) j["profile"] = o.profile;
  return parse_config(j);
}

std::vector<AnomalySpec> selected_anomalies(const ExperimentConfig& cfg, const Options& o) {
  std::vector<AnomalySpec> out;
  if (o.kind.empty()) {
    out = cfg.anomalies;
  } else {
    AnomalyKind kind;
    try {
      kind = parse_anomaly_kind(o.kind);
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    AnomalySpec spec;
    spec.kind = kind;
    spec.seed = 1 + static_cast<std::uint64_t>(kind);
    for (const auto& a : cfg.anomalies)
      if (a.kind == kind) spec = a;
    out.push_back(spec);
  }
  return out;
}

json spec_json(const AnomalySpec& a) {
  return {{"kind", std::string(to_string(a.kind))},
          {"seed", a.seed},
          {"affected_fraction", a.affected_fraction},
          {"floor_dbm", a.floor_dbm},
          {"spike_prob", a.spike_prob},
          {"slope_range", {a.slope_range.first, a.slope_range.second}}};
}

json split_json(const ExperimentConfig& cfg) { return to_json(cfg)["split"]; }

json representations_json(const ExperimentConfig& cfg) { return to_json(cfg)["representations"]; }

// ---------------------------------------------------------------------------
// Artifact names

fs::path traces_path(const Options& o) { return o.out_dir / "traces.csv"; }
fs::path injected_path(const Options& o, AnomalyKind k) { return o.out_dir / ("injected_" + std::string(to_string(k)) + ".csv"); }
fs::path labels_path(const Options& o, AnomalyKind k) { return o.out_dir / ("labels_" + std::string(to_string(k)) + ".csv"); }

fs::path table_path(const Options& o, const char* prefix, AnomalyKind k, Representation r, const char* ext) {
  return o.out_dir / (std::string(prefix) + "_" + std::string(to_string(k)) + "_" + std::string(to_string(r)) + ext);
}

Scenario load_scenario(const Options& o, const AnomalySpec& spec, const ExperimentConfig& cfg) {
  return scenario_from_labeled(read_labeled(injected_path(o, spec.kind), labels_path(o, spec.kind)), spec, cfg.split);
}

std::string directory_checksum(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.update(fs::relative(f, root).generic_string());
    h.update(file_checksum(f));
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(const Options& o) {
  const auto cfg = load_settings(o);
  auto source = cfg.dataset;
  if (!o.data_dir.empty()) {
    source.kind = DatasetSource::Kind::Rutgers;
    source.data_dir = o.data_dir;
  }
  if (o.synthetic) source.kind = DatasetSource::Kind::Synthetic;
  if (o.links) source.links = *o.links;
  if (o.seed) source.seed = *o.seed;
  if (o.dbm_offset) source.dbm_offset = *o.dbm_offset;
  if (source.kind == DatasetSource::Kind::Synthetic && source.links < 10)
    throw ConfigError("--links must be at least 10");

  const bool synthetic = source.kind == DatasetSource::Kind::Synthetic;
  if (!synthetic && !fs::is_directory(source.data_dir))
    throw MissingUpstream("data directory " + source.data_dir.string() + " does not exist");
  Stage stage(o.out_dir, "ingest",
              synthetic ? json{{"source", "synthetic"}, {"links", source.links}, {"seed", source.seed}}
                        : json{{"source", "rutgers"}, {"dbm_offset", source.dbm_offset}});
  if (!synthetic) stage.input_checksum("data_dir", directory_checksum(source.data_dir));

  run_stage(stage, [&] {
    json summary;
    Dataset ds;
    if (synthetic) {
      ds = generate_synthetic(source.links, source.seed);
    } else {
      const auto raw = ingest_rutgers(source.data_dir, source.dbm_offset);
      ds = filter_lossless(raw);
      summary["ingested"] = raw.size();
    }
    summary["traces"] = ds.size();
    write_canonical_csv(ds, traces_path(o));
    return std::pair{std::vector<fs::path>{traces_path(o)}, summary};
  });
}

void cmd_inject(const Options& o) {
  const auto cfg = load_settings(o);
  for (auto spec : selected_anomalies(cfg, o)) {
    if (o.seed) spec.seed = *o.seed;
    Stage stage(o.out_dir, "inject-" + std::string(to_string(spec.kind)), spec_json(spec));
    stage.input(traces_path(o));
    run_stage(stage, [&] {
      const auto labeled = inject(read_canonical_csv(traces_path(o)), spec);
      write_canonical_csv(traces_of(labeled), injected_path(o, spec.kind));
      write_labels_csv(labeled, labels_path(o, spec.kind));
      std::size_t anomalous = 0;
      for (const auto& l : labeled) anomalous += l.label == Label::Anomalous;
      return std::pair{std::vector<fs::path>{injected_path(o, spec.kind), labels_path(o, spec.kind)},
                       json{{"links", labeled.size()}, {"anomalous", anomalous}}};
    });
  }
}

void cmd_featurize(const Options& o) {
  const auto cfg = load_settings(o);
  for (const auto& spec : selected_anomalies(cfg, o)) {
    Stage stage(o.out_dir, "featurize-" + std::string(to_string(spec.kind)),
                {{"representations", representations_json(cfg)}, {"split", split_json(cfg)}});
    stage.input(injected_path(o, spec.kind));
    stage.input(labels_path(o, spec.kind));
    run_stage(stage, [&] {
      const auto sc = load_scenario(o, spec, cfg);
      std::vector<fs::path> outputs;
      for (auto rep : cfg.representations) {
        FeatureTable t;
        for (const auto& l : sc.labeled) t.link_ids.push_back(l.trace.link_id());
        t.labels = labels_of(sc.labeled);
        t.values = scenario_features(sc, rep);
        t.representation = rep;
        const auto csv = table_path(o, "features", spec.kind, rep, ".csv");
        const auto meta = table_path(o, "features", spec.kind, rep, ".json");
        write_feature_table(t, csv, meta);
        outputs.insert(outputs.end(), {csv, meta});
      }
      return std::pair{outputs, json{{"rows", sc.labeled.size()}}};
    });
  }
}

void cmd_encode(const Options& o) {
  const auto cfg = load_settings(o);
  for (const auto& spec : selected_anomalies(cfg, o)) {
    const auto j = to_json(cfg);
    Stage stage(o.out_dir, "encode-" + std::string(to_string(spec.kind)),
                {{"representations", j["representations"]},
                 {"split", j["split"]},
                 {"autoencoder", j["autoencoder"]},
                 {"seed", cfg.seed}});
    stage.input(injected_path(o, spec.kind));
    stage.input(labels_path(o, spec.kind));
    for (auto rep : cfg.representations) {
      stage.input(table_path(o, "features", spec.kind, rep, ".csv"));
      stage.input(table_path(o, "features", spec.kind, rep, ".json"));
    }
    run_stage(stage, [&] {
      const auto sc = load_scenario(o, spec, cfg);
      std::vector<fs::path> outputs;
      json losses = json::object();
      for (auto rep : cfg.representations) {
        auto t = read_feature_table(table_path(o, "features", spec.kind, rep, ".csv"),
                                    table_path(o, "features", spec.kind, rep, ".json"));
        const auto ae = autoencoder_config(cfg, spec.kind, rep, static_cast<std::size_t>(t.values.cols()));
        const auto enc = encode_scenario(t.values, sc.split.autoencoder_rows, ae);
        t.values = enc.codes;
        t.encoded = true;
        const auto csv = table_path(o, "encoded", spec.kind, rep, ".csv");
        const auto meta = table_path(o, "encoded", spec.kind, rep, ".json");
        const auto model = table_path(o, "autoencoder", spec.kind, rep, ".json");
        write_feature_table(t, csv, meta);
        enc.model.save(model);
        outputs.insert(outputs.end(), {csv, meta, model});
        losses[std::string(to_string(rep))] = enc.model.loss_history().empty() ? 0.0 : enc.model.loss_history().back();
      }
      return std::pair{outputs, json{{"final_loss", losses}}};
    });
  }
}

void cmd_evaluate(const Options& o) {
  auto cfg = load_settings(o);
  if (o.seed) cfg.seed = *o.seed;
  Stage stage(o.out_dir, "evaluate", to_json(cfg));
  for (const auto& spec : cfg.anomalies) {
    stage.input(injected_path(o, spec.kind));
    stage.input(labels_path(o, spec.kind));
    for (auto rep : cfg.representations) {
      stage.input(table_path(o, "features", spec.kind, rep, ".csv"));
      if (cfg.encoded) {
        stage.input(table_path(o, "encoded", spec.kind, rep, ".csv"));
        stage.input(table_path(o, "autoencoder", spec.kind, rep, ".json"));
      }
    }
  }
  run_stage(stage, [&] {
    std::vector<CellInput> cells;
    std::map<AnomalyKind, std::string> checksums;
    for (const auto& spec : cfg.anomalies) {
      const auto sc = load_scenario(o, spec, cfg);
      checksums[spec.kind] = sc.checksum;
      for (auto rep : cfg.representations) {
        CellInput cell;
        cell.anomaly = spec.kind;
        cell.representation = rep;
        cell.labels = labels_of(sc.labeled);
        cell.traces = trace_list(sc.labeled);
        cell.holdout = sc.split.holdout;
        cell.features = read_feature_table(table_path(o, "features", spec.kind, rep, ".csv"),
                                           table_path(o, "features", spec.kind, rep, ".json"))
                            .values;
        if (cfg.encoded) {
          CellInput enc = cell;
          enc.encoded = true;
          enc.traces.clear();
          enc.features = read_feature_table(table_path(o, "encoded", spec.kind, rep, ".csv"),
                                            table_path(o, "encoded", spec.kind, rep, ".json"))
                             .values;
          enc.autoencoder_checksum =
              AutoencoderModel::load(table_path(o, "autoencoder", spec.kind, rep, ".json")).data_checksum();
          cells.push_back(std::move(cell));
          cells.push_back(std::move(enc));
        } else {
          cells.push_back(std::move(cell));
        }
      }
    }
    auto result = evaluate_cells(cells, cfg);
    result.scenario_checksums = checksums;
    auto outputs = write_run_outputs(result, cfg, o.out_dir);
    std::size_t failed = 0;
    for (const auto& r : result.records) failed += r.status == "failed";
    return std::pair{outputs, json{{"records", result.records.size()}, {"fits", result.fits}, {"failed", failed}}};
  });
}

void cmd_report(const Options& o) {
  Stage stage(o.out_dir, "report", json::object());
  stage.input(o.out_dir / "records.json");
  run_stage(stage, [&] {
    const auto records = read_records_json(o.out_dir / "records.json");
    const auto dir = o.out_dir / "report";
    std::vector<fs::path> outputs;
    for (auto f : {ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown}) {
      auto more = render_report(records, f, dir);
      outputs.insert(outputs.end(), more.begin(), more.end());
    }
    std::set<std::string> anomalies;
    for (const auto& r : records) anomalies.insert(std::string(to_string(r.anomaly)));
    return std::pair{outputs, json{{"anomalies", anomalies}}};
  });
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly detection experiments on RSSI link traces"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--out-dir", o.out_dir, "Artifact directory")->capture_default_str();
    cmd->add_option("--config", o.config, "Experiment config (JSON)");
  };

  auto* ingest = app.add_subcommand("ingest", "Load traces (Rutgers corpus or synthetic) into traces.csv");
  common(ingest);
  ingest->add_option("--data-dir", o.data_dir, "Root of the Rutgers trace corpus");
  ingest->add_flag("--synthetic", o.synthetic, "Generate a synthetic dataset instead");
  ingest->add_option("--links", o.links, "Synthetic link count (default 2123)");
  ingest->add_option("--seed", o.seed, "Synthetic dataset seed");
  ingest->add_option("--dbm-offset", o.dbm_offset, "dBm = raw + offset (default -95)");

  auto* inject_cmd = app.add_subcommand("inject", "Inject one anomaly kind (or all) into the traces");
  common(inject_cmd);
  inject_cmd->add_option("--kind", o.kind, "suddend, suddenr, instad or slowd");
  inject_cmd->add_option("--seed", o.seed, "Injection seed");

  auto* featurize = app.add_subcommand("featurize", "Compute the manual representations");
  common(featurize);
  featurize->add_option("--kind", o.kind, "Restrict to one anomaly kind");

  auto* encode = app.add_subcommand("encode", "Train autoencoders and write encoded features");
  common(encode);
  encode->add_option("--kind", o.kind, "Restrict to one anomaly kind");

  auto* evaluate = app.add_subcommand("evaluate", "Run the detector matrix");
  common(evaluate);
  evaluate->add_option("--profile", o.profile, "fast or full (overrides the config)");
  evaluate->add_option("--seed", o.seed, "Experiment seed");

  auto* report = app.add_subcommand("report", "Render tables from records.json");
  common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitConfig);
  }

  try {
    DirectoryLock lock(o.out_dir);
    if (*ingest) cmd_ingest(o);
    else if (*inject_cmd) cmd_inject(o);
    else if (*featurize) cmd_featurize(o);
    else if (*encode) cmd_encode(o);
    else if (*evaluate) cmd_evaluate(o);
    else if (*report) cmd_report(o);
  } catch (const MissingUpstream& e) {
    return fail("missing_upstream", e.what(), kExitMissingUpstream);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const FormatError& e) {
    return fail("format", e.what(), kExitFailure);
  } catch (const std::exception& e) {
    return fail("error", e.what(), kExitFailure);
  }
  return 0;
}
