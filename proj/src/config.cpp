#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "linkscope/error.hpp"
#include "linkscope/evaluation.hpp"

namespace linkscope {

namespace {

// Published hyperparameter grids.
const std::vector<double> kRegularisationGrid{1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
const std::vector<std::size_t> kEstimatorGrid{10, 20, 30, 40, 50, 70, 100};
const std::vector<std::size_t> kNeighbourGrid{5, 10, 20, 40, 50, 80};
const std::vector<int> kMinkowskiGrid{1, 2};
const std::vector<double> kNuGrid{0.1, 0.3, 0.5, 0.7, 0.9, 1.0};

std::vector<ScalerKind> all_scalers() { return {kAllScalers.begin(), kAllScalers.end()}; }

std::vector<AnomalySpec> default_anomalies() {
  std::vector<AnomalySpec> out;
  std::uint64_t seed = 1;
  for (auto kind : kAllAnomalies) {
    AnomalySpec s;
    s.kind = kind;
    s.seed = seed++;
    out.push_back(s);
  }
  return out;
}

}  // namespace

ExperimentConfig profile_config(std::string_view profile) {
  ExperimentConfig cfg;
  cfg.profile = std::string(profile);
  cfg.anomalies = default_anomalies();
  cfg.representations = {kManualRepresentations.begin(), kManualRepresentations.end()};
  cfg.families = {kAllFamilies.begin(), kAllFamilies.end()};
  auto& g = cfg.grid;
  if (profile == "full") {
    g.lr_C = kRegularisationGrid;
    g.forest_estimators = kEstimatorGrid;
    g.svm_C = kRegularisationGrid;
    g.svm_kernels = {KernelKind::Linear, KernelKind::Rbf};
    g.svm_gammas = {GammaMode::Auto, GammaMode::Scale};
    g.lof_neighbors = kNeighbourGrid;
    g.lof_p = kMinkowskiGrid;
    g.iforest_estimators = kEstimatorGrid;
    g.ocsvm_nu = kNuGrid;
    g.ocsvm_kernels = {KernelKind::Linear, KernelKind::Rbf};
    g.ocsvm_gammas = {GammaMode::Auto, GammaMode::Scale};
    for (auto f : kAllFamilies)
      if (f != DetectorFamily::Threshold) g.scalers[f] = all_scalers();
  } else if (profile == "fast") {
    g.lr_C = {1e-2, 1.0, 100.0};
    g.forest_estimators = {10, 50};
    g.svm_C = {1.0, 100.0};
    g.svm_kernels = {KernelKind::Linear, KernelKind::Rbf};
    g.svm_gammas = {GammaMode::Scale};
    g.lof_neighbors = {10, 40};
    g.lof_p = {2};
    g.iforest_estimators = {50, 100};
    g.ocsvm_nu = {0.1, 0.3, 0.5};
    g.ocsvm_kernels = {KernelKind::Rbf};
    g.ocsvm_gammas = {GammaMode::Auto, GammaMode::Scale};
    // Trees split on order statistics, so scaling cannot change them.
    g.scalers[DetectorFamily::LogReg] = {ScalerKind::MeanStdFull};
    g.scalers[DetectorFamily::Forest] = {ScalerKind::None};
    g.scalers[DetectorFamily::Svm] = {ScalerKind::MeanStdFull};
    g.scalers[DetectorFamily::Lof] = {ScalerKind::MeanStdFull};
    g.scalers[DetectorFamily::IForest] = {ScalerKind::None};
    g.scalers[DetectorFamily::OcSvm] = {ScalerKind::MeanStdFull};
  } else {
    throw ConfigError("unknown profile '" + std::string(profile) + "' (expected fast or full)");
  }
  return cfg;
}

namespace {

template <class T>
void check_subset(const std::vector<T>& values, const std::vector<T>& allowed, bool extended, const char* what) {
  for (const auto& v : values) {
    if (extended) continue;
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const T& a) {
      if constexpr (std::is_floating_point_v<T>) return std::abs(a - v) <= 1e-12 * std::max(1.0, std::abs(a));
      else return a == v;
    });
    if (!ok) throw ConfigError(std::string(what) + " value outside the published grid; mark the family extended");
  }
}

template <class T>
void check_nonempty(const std::vector<T>& v, const char* what) {
  if (v.empty()) throw ConfigError(std::string(what) + " must not be empty");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (anomalies.empty()) throw ConfigError("anomalies must not be empty");
  std::set<AnomalyKind> kinds;
  for (const auto& a : anomalies) {
    try {
      a.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    if (!kinds.insert(a.kind).second) throw ConfigError("anomaly kinds must be distinct");
  }
  check_nonempty(representations, "representations");
  for (auto r : representations)
    if (r == Representation::Encoded) throw ConfigError("encoded features are requested with \"encoded\": true");
  check_nonempty(families, "families");
  if (split.folds < 2) throw ConfigError("split.folds must be at least 2");
  thresholds.validate();
  if (autoencoder.epochs == 0 || autoencoder.batch_size < 2 || !(autoencoder.learning_rate > 0.0))
    throw ConfigError("autoencoder epochs, batch_size (>= 2) and learning_rate must be positive");
  if (dataset.kind == DatasetSource::Kind::Synthetic && dataset.links < 10)
    throw ConfigError("dataset.links must be at least 10");

  auto ext = [&](DetectorFamily f) { return std::find(grid.extended.begin(), grid.extended.end(), f) != grid.extended.end(); };
  for (auto f : families) {
    if (f == DetectorFamily::Threshold) continue;
    auto it = grid.scalers.find(f);
    if (it == grid.scalers.end() || it->second.empty())
      throw ConfigError("grid." + std::string(to_string(f)) + ".scalers must not be empty");
    switch (f) {
      case DetectorFamily::LogReg:
        check_nonempty(grid.lr_C, "grid.lr.C");
        check_subset(grid.lr_C, kRegularisationGrid, ext(f), "grid.lr.C");
        for (double c : grid.lr_C)
          if (!(c > 0)) throw ConfigError("grid.lr.C values must be positive");
        break;
      case DetectorFamily::Forest:
        check_nonempty(grid.forest_estimators, "grid.rforest.n_estimators");
        check_subset(grid.forest_estimators, kEstimatorGrid, ext(f), "grid.rforest.n_estimators");
        for (auto n : grid.forest_estimators)
          if (n == 0) throw ConfigError("grid.rforest.n_estimators values must be positive");
        break;
      case DetectorFamily::Svm:
        check_nonempty(grid.svm_C, "grid.svm.C");
        check_nonempty(grid.svm_kernels, "grid.svm.kernel");
        check_nonempty(grid.svm_gammas, "grid.svm.gamma");
        check_subset(grid.svm_C, kRegularisationGrid, ext(f), "grid.svm.C");
        for (double c : grid.svm_C)
          if (!(c > 0)) throw ConfigError("grid.svm.C values must be positive");
        break;
      case DetectorFamily::Lof:
        check_nonempty(grid.lof_neighbors, "grid.lof.n_neighbors");
        check_nonempty(grid.lof_p, "grid.lof.p");
        check_subset(grid.lof_neighbors, kNeighbourGrid, ext(f), "grid.lof.n_neighbors");
        check_subset(grid.lof_p, kMinkowskiGrid, ext(f), "grid.lof.p");
        for (auto k : grid.lof_neighbors)
          if (k == 0) throw ConfigError("grid.lof.n_neighbors values must be positive");
        for (int p : grid.lof_p)
          if (p < 1) throw ConfigError("grid.lof.p values must be at least 1");
        break;
      case DetectorFamily::IForest:
        check_nonempty(grid.iforest_estimators, "grid.iforest.n_estimators");
        check_subset(grid.iforest_estimators, kEstimatorGrid, ext(f), "grid.iforest.n_estimators");
        if (grid.iforest_max_samples < 2) throw ConfigError("grid.iforest.max_samples must be at least 2");
        for (auto n : grid.iforest_estimators)
          if (n == 0) throw ConfigError("grid.iforest.n_estimators values must be positive");
        break;
      case DetectorFamily::OcSvm:
        check_nonempty(grid.ocsvm_nu, "grid.ocsvm.nu");
        check_nonempty(grid.ocsvm_kernels, "grid.ocsvm.kernel");
        check_nonempty(grid.ocsvm_gammas, "grid.ocsvm.gamma");
        check_subset(grid.ocsvm_nu, kNuGrid, ext(f), "grid.ocsvm.nu");
        for (double nu : grid.ocsvm_nu)
          if (!(nu > 0 && nu <= 1)) throw ConfigError("grid.ocsvm.nu values must lie in (0, 1]");
        break;
      case DetectorFamily::Threshold: break;
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

void expect_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <class T, class Parse>
void read_enum_list(const json& j, const char* key, std::vector<T>& out, Parse parse, const std::string& where) {
  if (!j.contains(key)) return;
  std::vector<std::string> names;
  read(j, key, names, where);
  out.clear();
  try {
    for (const auto& n : names) out.push_back(parse(n));
  } catch (const ArgumentError& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T, class Name>
json enum_list(const std::vector<T>& v, Name name) {
  json out = json::array();
  for (auto x : v) out.push_back(std::string(name(x)));
  return out;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  expect_keys(j, {"profile", "dataset", "anomalies", "representations", "encoded", "families", "grid", "thresholds",
                  "autoencoder", "split", "seed", "threads", "output_dir"},
              "config");
  std::string profile = "fast";
  read(j, "profile", profile, "config");
  ExperimentConfig cfg = profile_config(profile);

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    expect_keys(d, {"source", "links", "seed", "data_dir", "dbm_offset"}, "dataset");
    std::string source = "synthetic";
    read(d, "source", source, "dataset");
    if (source == "synthetic") cfg.dataset.kind = DatasetSource::Kind::Synthetic;
    else if (source == "rutgers") cfg.dataset.kind = DatasetSource::Kind::Rutgers;
    else throw ConfigError("dataset.source must be synthetic or rutgers");
    read(d, "links", cfg.dataset.links, "dataset");
    read(d, "seed", cfg.dataset.seed, "dataset");
    std::string dir;
    read(d, "data_dir", dir, "dataset");
    cfg.dataset.data_dir = dir;
    read(d, "dbm_offset", cfg.dataset.dbm_offset, "dataset");
    if (cfg.dataset.kind == DatasetSource::Kind::Rutgers && dir.empty())
      throw ConfigError("dataset.data_dir is required for the rutgers source");
  }
  if (j.contains("anomalies")) {
    if (!j["anomalies"].is_array()) throw ConfigError("anomalies must be an array");
    cfg.anomalies.clear();
    for (const auto& a : j["anomalies"]) {
      expect_keys(a, {"kind", "seed", "affected_fraction", "floor_dbm", "spike_prob", "slope_range"}, "anomalies[]");
      AnomalySpec s;
      std::string kind;
      read(a, "kind", kind, "anomalies[]");
      try {
        s.kind = parse_anomaly_kind(kind);
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("anomalies[].kind: ") + e.what());
      }
      s.seed = 1 + static_cast<std::uint64_t>(s.kind);
      read(a, "seed", s.seed, "anomalies[]");
      read(a, "affected_fraction", s.affected_fraction, "anomalies[]");
      read(a, "floor_dbm", s.floor_dbm, "anomalies[]");
      read(a, "spike_prob", s.spike_prob, "anomalies[]");
      if (a.contains("slope_range")) {
        std::vector<double> r;
        read(a, "slope_range", r, "anomalies[]");
        if (r.size() != 2) throw ConfigError("anomalies[].slope_range needs two numbers");
        s.slope_range = {r[0], r[1]};
      }
      cfg.anomalies.push_back(s);
    }
  }
  read_enum_list(j, "representations", cfg.representations, parse_representation, "config");
  read(j, "encoded", cfg.encoded, "config");
  read_enum_list(j, "families", cfg.families, parse_family, "config");
  read(j, "seed", cfg.seed, "config");
  read(j, "threads", cfg.threads, "config");
  std::string out_dir;
  read(j, "output_dir", out_dir, "config");
  cfg.output_dir = out_dir;

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    expect_keys(g, {"lr", "rforest", "svm", "lof", "iforest", "ocsvm"}, "grid");
    auto family_block = [&](const char* name, DetectorFamily f, std::initializer_list<std::string_view> keys,
                            auto&& body) {
      if (!g.contains(name)) return;
      const auto& b = g[name];
      std::vector<std::string_view> allowed(keys);
      allowed.push_back("scalers");
      allowed.push_back("extended");
      const std::string where = std::string("grid.") + name;
      if (!b.is_object()) throw ConfigError(where + " must be an object");
      for (const auto& [key, value] : b.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
          throw ConfigError("unknown key '" + key + "' in " + where);
      read_enum_list(b, "scalers", cfg.grid.scalers[f], parse_scaler, where);
      bool extended = false;
      read(b, "extended", extended, where);
      if (extended) cfg.grid.extended.push_back(f);
      body(b, where);
    };
    family_block("lr", DetectorFamily::LogReg, {"C"}, [&](const json& b, const std::string& w) {
      read(b, "C", cfg.grid.lr_C, w);
    });
    family_block("rforest", DetectorFamily::Forest, {"n_estimators"}, [&](const json& b, const std::string& w) {
      read(b, "n_estimators", cfg.grid.forest_estimators, w);
    });
    family_block("svm", DetectorFamily::Svm, {"C", "kernel", "gamma"}, [&](const json& b, const std::string& w) {
      read(b, "C", cfg.grid.svm_C, w);
      read_enum_list(b, "kernel", cfg.grid.svm_kernels, parse_kernel, w);
      read_enum_list(b, "gamma", cfg.grid.svm_gammas, parse_gamma_mode, w);
    });
    family_block("lof", DetectorFamily::Lof, {"n_neighbors", "p", "offset"}, [&](const json& b, const std::string& w) {
      read(b, "n_neighbors", cfg.grid.lof_neighbors, w);
      read(b, "p", cfg.grid.lof_p, w);
      read(b, "offset", cfg.grid.lof_offset, w);
    });
    family_block("iforest", DetectorFamily::IForest, {"n_estimators", "max_samples", "offset"},
                 [&](const json& b, const std::string& w) {
                   read(b, "n_estimators", cfg.grid.iforest_estimators, w);
                   read(b, "max_samples", cfg.grid.iforest_max_samples, w);
                   read(b, "offset", cfg.grid.iforest_offset, w);
                 });
    family_block("ocsvm", DetectorFamily::OcSvm, {"nu", "kernel", "gamma"}, [&](const json& b, const std::string& w) {
      read(b, "nu", cfg.grid.ocsvm_nu, w);
      read_enum_list(b, "kernel", cfg.grid.ocsvm_kernels, parse_kernel, w);
      read_enum_list(b, "gamma", cfg.grid.ocsvm_gammas, parse_gamma_mode, w);
    });
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    expect_keys(t, {"p_threshold", "mean_median_gap_db", "two_sigma_db", "histogram_cut_dbm", "histogram_min_fraction"},
                "thresholds");
    read(t, "p_threshold", cfg.thresholds.p_threshold, "thresholds");
    read(t, "mean_median_gap_db", cfg.thresholds.mean_median_gap_db, "thresholds");
    read(t, "two_sigma_db", cfg.thresholds.two_sigma_db, "thresholds");
    read(t, "histogram_cut_dbm", cfg.thresholds.histogram_cut_dbm, "thresholds");
    read(t, "histogram_min_fraction", cfg.thresholds.histogram_min_fraction, "thresholds");
  }
  if (j.contains("autoencoder")) {
    const auto& a = j["autoencoder"];
    expect_keys(a, {"epochs", "batch_size", "learning_rate", "patience"}, "autoencoder");
    read(a, "epochs", cfg.autoencoder.epochs, "autoencoder");
    read(a, "batch_size", cfg.autoencoder.batch_size, "autoencoder");
    read(a, "learning_rate", cfg.autoencoder.learning_rate, "autoencoder");
    read(a, "patience", cfg.autoencoder.patience, "autoencoder");
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    expect_keys(s, {"mode", "stratified", "folds", "seed"}, "split");
    std::string mode = "holdout_80_20";
    read(s, "mode", mode, "split");
    if (mode == "holdout_80_20") cfg.split.mode = SplitMode::Holdout80_20;
    else if (mode == "holdout_60_40") cfg.split.mode = SplitMode::Holdout60_40;
    else throw ConfigError("split.mode must be holdout_80_20 or holdout_60_40");
    read(s, "stratified", cfg.split.stratified, "split");
    read(s, "folds", cfg.split.folds, "split");
    read(s, "seed", cfg.split.seed, "split");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["profile"] = cfg.profile;
  auto& d = j["dataset"];
  d["source"] = cfg.dataset.kind == DatasetSource::Kind::Synthetic ? "synthetic" : "rutgers";
  if (cfg.dataset.kind == DatasetSource::Kind::Synthetic) {
    d["links"] = cfg.dataset.links;
    d["seed"] = cfg.dataset.seed;
  } else {
    d["data_dir"] = cfg.dataset.data_dir.string();
    d["dbm_offset"] = cfg.dataset.dbm_offset;
  }
  j["anomalies"] = nlohmann::ordered_json::array();
  for (const auto& a : cfg.anomalies)
    j["anomalies"].push_back({{"kind", std::string(to_string(a.kind))},
                              {"seed", a.seed},
                              {"affected_fraction", a.affected_fraction},
                              {"floor_dbm", a.floor_dbm},
                              {"spike_prob", a.spike_prob},
                              {"slope_range", {a.slope_range.first, a.slope_range.second}}});
  j["representations"] = enum_list(cfg.representations, [](Representation r) { return to_string(r); });
  j["encoded"] = cfg.encoded;
  j["families"] = enum_list(cfg.families, [](DetectorFamily f) { return to_string(f); });
  const auto& g = cfg.grid;
  auto scalers = [&](DetectorFamily f) {
    auto it = g.scalers.find(f);
    return it == g.scalers.end() ? json::array()
                                 : enum_list(it->second, [](ScalerKind s) { return to_string(s); });
  };
  auto extended = [&](DetectorFamily f) { return std::find(g.extended.begin(), g.extended.end(), f) != g.extended.end(); };
  auto kernels = [](const std::vector<KernelKind>& v) { return enum_list(v, [](KernelKind k) { return to_string(k); }); };
  auto gammas = [](const std::vector<GammaMode>& v) { return enum_list(v, [](GammaMode m) { return to_string(m); }); };
  auto& gj = j["grid"];
  gj["lr"] = {{"C", g.lr_C}, {"scalers", scalers(DetectorFamily::LogReg)}, {"extended", extended(DetectorFamily::LogReg)}};
  gj["rforest"] = {{"n_estimators", g.forest_estimators},
                   {"scalers", scalers(DetectorFamily::Forest)},
                   {"extended", extended(DetectorFamily::Forest)}};
  gj["svm"] = {{"C", g.svm_C},
               {"kernel", kernels(g.svm_kernels)},
               {"gamma", gammas(g.svm_gammas)},
               {"scalers", scalers(DetectorFamily::Svm)},
               {"extended", extended(DetectorFamily::Svm)}};
  gj["lof"] = {{"n_neighbors", g.lof_neighbors},
               {"p", g.lof_p},
               {"offset", g.lof_offset},
               {"scalers", scalers(DetectorFamily::Lof)},
               {"extended", extended(DetectorFamily::Lof)}};
  gj["iforest"] = {{"n_estimators", g.iforest_estimators},
                   {"max_samples", g.iforest_max_samples},
                   {"offset", g.iforest_offset},
                   {"scalers", scalers(DetectorFamily::IForest)},
                   {"extended", extended(DetectorFamily::IForest)}};
  gj["ocsvm"] = {{"nu", g.ocsvm_nu},
                 {"kernel", kernels(g.ocsvm_kernels)},
                 {"gamma", gammas(g.ocsvm_gammas)},
                 {"scalers", scalers(DetectorFamily::OcSvm)},
                 {"extended", extended(DetectorFamily::OcSvm)}};
  j["thresholds"] = {{"p_threshold", cfg.thresholds.p_threshold},
                     {"mean_median_gap_db", cfg.thresholds.mean_median_gap_db},
                     {"two_sigma_db", cfg.thresholds.two_sigma_db},
                     {"histogram_cut_dbm", cfg.thresholds.histogram_cut_dbm},
                     {"histogram_min_fraction", cfg.thresholds.histogram_min_fraction}};
  j["autoencoder"] = {{"epochs", cfg.autoencoder.epochs},
                      {"batch_size", cfg.autoencoder.batch_size},
                      {"learning_rate", cfg.autoencoder.learning_rate},
                      {"patience", cfg.autoencoder.patience}};
  j["split"] = {{"mode", cfg.split.mode == SplitMode::Holdout80_20 ? "holdout_80_20" : "holdout_60_40"},
                {"stratified", cfg.split.stratified},
                {"folds", cfg.split.folds},
                {"seed", cfg.split.seed}};
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace linkscope
