#include "linkscope/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "csv_util.hpp"
#include "linkscope/checksum.hpp"
#include "linkscope/error.hpp"
#include "seeds.hpp"

namespace linkscope {

// ---------------------------------------------------------------------------
// Splits

namespace {

std::vector<std::vector<std::size_t>> rows_by_class(std::span<const Label> labels) {
  std::vector<std::vector<std::size_t>> out(2);
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i] == Label::Anomalous].push_back(i);
  return out;
}

}  // namespace

Split split(std::span<const Label> labels, const SplitPlan& plan) {
  if (labels.size() < 10) throw ArgumentError("split needs at least 10 rows, got " + std::to_string(labels.size()));
  std::mt19937_64 rng(plan.seed);
  const double frac = plan.test_fraction();
  Split out;
  auto take = [&](std::vector<std::size_t> rows) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(frac * static_cast<double>(rows.size())));
    out.test.insert(out.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  };
  if (plan.stratified) {
    for (auto& rows : rows_by_class(labels)) take(std::move(rows));
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    take(std::move(all));
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const Label> labels, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ArgumentError("cross-validation needs at least 2 folds");
  if (labels.size() < k) throw ArgumentError("fewer rows than folds");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& rows : rows_by_class(labels)) {
    std::shuffle(rows.begin(), rows.end(), rng);
    for (auto r : rows) folds[next++ % k].push_back(r);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

ScenarioSplit make_scenario_split(std::span<const Label> labels, const SplitPlan& plan) {
  ScenarioSplit s;
  s.holdout = split(labels, plan);
  std::vector<Label> train_labels;
  for (auto r : s.holdout.train) train_labels.push_back(labels[r]);
  SplitPlan ae_plan{SplitMode::Holdout60_40, plan.stratified, plan.folds, detail::derive_seed(plan.seed, "autoencoder")};
  const auto sub = split(train_labels, ae_plan);
  for (auto r : sub.train) s.autoencoder_rows.push_back(s.holdout.train[r]);
  return s;
}

// ---------------------------------------------------------------------------
// Metrics

double Confusion::precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
double Confusion::recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
double Confusion::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

Confusion confusion(std::span<const Label> predicted, std::span<const Label> actual) {
  if (predicted.size() != actual.size()) throw ArgumentError("prediction and truth differ in length");
  Confusion c;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const bool p = predicted[i] == Label::Anomalous, a = actual[i] == Label::Anomalous;
    if (p && a) ++c.tp;
    else if (p) ++c.fp;
    else if (a) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Families and candidates

std::string_view to_string(DetectorFamily f) {
  switch (f) {
    case DetectorFamily::Threshold: return "threshold";
    case DetectorFamily::LogReg: return "lr";
    case DetectorFamily::Forest: return "rforest";
    case DetectorFamily::Svm: return "svm";
    case DetectorFamily::Lof: return "lof";
    case DetectorFamily::IForest: return "iforest";
    case DetectorFamily::OcSvm: return "ocsvm";
  }
  return "?";
}

std::string_view display_name(DetectorFamily f) {
  switch (f) {
    case DetectorFamily::Threshold: return "Threshold";
    case DetectorFamily::LogReg: return "LR";
    case DetectorFamily::Forest: return "RForest";
    case DetectorFamily::Svm: return "SVM";
    case DetectorFamily::Lof: return "LOF";
    case DetectorFamily::IForest: return "IForest";
    case DetectorFamily::OcSvm: return "OC-SVM";
  }
  return "?";
}

DetectorFamily parse_family(std::string_view text) {
  for (auto f : kAllFamilies)
    if (to_string(f) == text) return f;
  throw ArgumentError("unknown detector family '" + std::string(text) + "'");
}

bool is_supervised(DetectorFamily f) {
  return f == DetectorFamily::LogReg || f == DetectorFamily::Forest || f == DetectorFamily::Svm;
}

std::string Candidate::describe() const {
  using detail::format_exact;
  struct Describe {
    std::string operator()(const LogRegParams& p) const { return "C=" + format_exact(p.C); }
    std::string operator()(const ForestParams& p) const { return "n_estimators=" + std::to_string(p.n_estimators); }
    std::string operator()(const SvmParams& p) const {
      std::string s = "C=" + format_exact(p.C) + ";kernel=" + std::string(to_string(p.kernel));
      if (p.kernel == KernelKind::Rbf) s += ";gamma=" + std::string(to_string(p.gamma_mode));
      return s;
    }
    std::string operator()(const LofParams& p) const {
      return "n_neighbors=" + std::to_string(p.n_neighbors) + ";p=" + std::to_string(p.p);
    }
    std::string operator()(const IForestParams& p) const { return "n_estimators=" + std::to_string(p.n_estimators); }
    std::string operator()(const OcSvmParams& p) const {
      std::string s = "nu=" + format_exact(p.nu) + ";kernel=" + std::string(to_string(p.kernel));
      if (p.kernel == KernelKind::Rbf) s += ";gamma=" + std::string(to_string(p.gamma_mode));
      return s;
    }
  };
  return std::visit(Describe{}, params);
}

namespace {

// Kernel x gamma pairs; gamma is irrelevant to the linear kernel, so it appears once.
std::vector<std::pair<KernelKind, GammaMode>> kernel_pairs(const std::vector<KernelKind>& kernels,
                                                           const std::vector<GammaMode>& gammas) {
  std::vector<std::pair<KernelKind, GammaMode>> out;
  for (auto k : kernels) {
    if (k == KernelKind::Linear) {
      out.emplace_back(k, gammas.empty() ? GammaMode::Scale : gammas.front());
    } else {
      for (auto g : gammas) out.emplace_back(k, g);
    }
  }
  return out;
}

}  // namespace

std::vector<Candidate> DetectorGrid::candidates(DetectorFamily f, std::uint64_t seed) const {
  std::vector<Candidate> out;
  const auto it = scalers.find(f);
  if (it == scalers.end() || f == DetectorFamily::Threshold) return out;
  for (auto scaler : it->second) {
    auto add = [&](DetectorParams p) { out.push_back({f, scaler, std::move(p)}); };
    switch (f) {
      case DetectorFamily::LogReg:
        for (double c : lr_C) add(LogRegParams{c});
        break;
      case DetectorFamily::Forest:
        for (auto n : forest_estimators) add(ForestParams{n, seed});
        break;
      case DetectorFamily::Svm:
        for (double c : svm_C)
          for (auto [k, g] : kernel_pairs(svm_kernels, svm_gammas)) add(SvmParams{c, k, g});
        break;
      case DetectorFamily::Lof:
        for (auto k : lof_neighbors)
          for (int p : lof_p) add(LofParams{k, p, lof_offset});
        break;
      case DetectorFamily::IForest:
        for (auto n : iforest_estimators) add(IForestParams{n, iforest_max_samples, seed, iforest_offset});
        break;
      case DetectorFamily::OcSvm:
        for (double nu : ocsvm_nu)
          for (auto [k, g] : kernel_pairs(ocsvm_kernels, ocsvm_gammas)) add(OcSvmParams{nu, k, g});
        break;
      case DetectorFamily::Threshold: break;
    }
  }
  return out;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LINKSCOPE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("LINKSCOPE_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Cell evaluation

namespace {

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <class T>
std::vector<T> take(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

std::string matrix_checksum(const Matrix& m) {
  Fnv1a h;
  h.update(static_cast<std::uint64_t>(m.rows()));
  h.update(static_cast<std::uint64_t>(m.cols()));
  h.update(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
  return h.hex();
}

struct FitOutcome {
  std::vector<Label> predicted;
  bool converged = true;
};

template <class Model, class Train>
Model fit_tolerant(Train&& train, bool& converged) {
  try {
    return train();
  } catch (const ConvergenceError<Model>& e) {
    converged = false;
    return e.best_so_far();
  }
}

FitOutcome fit_predict(const Candidate& c, const Matrix& x, std::span<const Label> y, const Matrix& query) {
  FitOutcome out;
  struct Visitor {
    const Matrix& x;
    std::span<const Label> y;
    const Matrix& q;
    FitOutcome& out;
    void operator()(const LogRegParams& p) { out.predicted = predict(train_logreg(x, y, p), q); }
    void operator()(const ForestParams& p) { out.predicted = predict(train_forest(x, y, p), q); }
    void operator()(const SvmParams& p) {
      out.predicted = predict(fit_tolerant<SvmModel>([&] { return train_svm(x, y, p); }, out.converged), q);
    }
    void operator()(const LofParams& p) { out.predicted = predict(train_lof(x, p), q); }
    void operator()(const IForestParams& p) { out.predicted = predict(train_iforest(x, p), q); }
    void operator()(const OcSvmParams& p) {
      out.predicted = predict(fit_tolerant<OcSvmModel>([&] { return train_ocsvm(x, p); }, out.converged), q);
    }
  };
  std::visit(Visitor{x, y, query, out}, c.params);
  return out;
}

std::string clean(std::string s) {
  for (auto& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  return s;
}

EvalRecord base_record(const CellInput& cell, DetectorFamily f) {
  EvalRecord r;
  r.anomaly = cell.anomaly;
  r.representation = cell.representation;
  r.encoded = cell.encoded;
  r.family = f;
  r.autoencoder_checksum = cell.autoencoder_checksum;
  return r;
}

void set_metrics(EvalRecord& r, const Confusion& c) {
  r.counts = c;
  r.precision = c.precision();
  r.recall = c.recall();
  r.f1 = c.f1();
}

bool has_threshold_rule(Representation rep) {
  return rep == Representation::TimeValue || rep == Representation::Aggregated || rep == Representation::Histogram;
}

std::string threshold_params(Representation rep, const ThresholdConfig& t) {
  using detail::format_exact;
  switch (rep) {
    case Representation::TimeValue: return "p_threshold=" + format_exact(t.p_threshold);
    case Representation::Aggregated:
      return "mean_median_gap_db=" + format_exact(t.mean_median_gap_db) + ";two_sigma_db=" + format_exact(t.two_sigma_db);
    default:
      return "histogram_cut_dbm=" + format_exact(t.histogram_cut_dbm) +
             ";min_fraction=" + format_exact(t.histogram_min_fraction);
  }
}

void evaluate_threshold(const CellInput& cell, const ExperimentConfig& cfg, CellResult& out) {
  if (cell.encoded || !has_threshold_rule(cell.representation) || cell.traces.empty()) return;
  auto r = base_record(cell, DetectorFamily::Threshold);
  r.params = threshold_params(cell.representation, cfg.thresholds);
  auto run = [&](std::span<const std::size_t> rows) {
    std::vector<Label> pred, truth;
    for (auto i : rows) {
      pred.push_back(detect_threshold(cell.traces[i], cell.representation, cfg.thresholds));
      truth.push_back(cell.labels[i]);
    }
    return confusion(pred, truth);
  };
  try {
    r.cv_f1 = run(cell.holdout.train).f1();  // the rule is fixed; this is its training-split score
    set_metrics(r, run(cell.holdout.test));
  } catch (const std::exception& e) {
    r.status = "failed";
    r.diagnostics = clean(e.what());
  }
  out.records.push_back(std::move(r));
}

struct FoldData {
  Matrix train, val;
  std::vector<Label> train_labels, val_labels;
};

}  // namespace

CellResult evaluate_cell(const CellInput& cell, const ExperimentConfig& cfg) {
  CellResult out;
  const auto n = static_cast<std::size_t>(cell.features.rows());
  if (cell.labels.size() != n) throw ArgumentError("cell labels and features differ in length");
  const auto& holdout = cell.holdout;
  const Matrix x_train = take_rows(cell.features, holdout.train);
  const Matrix x_test = take_rows(cell.features, holdout.test);
  const auto y_train = take(cell.labels, holdout.train);
  const auto y_test = take(cell.labels, holdout.test);
  const std::string anomaly(to_string(cell.anomaly)), rep(to_string(cell.representation));
  const std::string variant = cell.encoded ? "encoded" : "plain";
  const auto folds =
      stratified_folds(y_train, cfg.split.folds, detail::derive_seed(cfg.seed, "folds", anomaly, rep, variant));

  // Raw fold partitions, scaled lazily per scaler kind.
  std::vector<std::vector<std::size_t>> fold_train(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<bool> in_val(x_train.rows(), false);
    for (auto r : folds[f]) in_val[r] = true;
    for (std::size_t r = 0; r < in_val.size(); ++r)
      if (!in_val[r]) fold_train[f].push_back(r);
  }
  std::map<ScalerKind, std::vector<FoldData>> scaled;
  auto fold_data = [&](ScalerKind kind) -> const std::vector<FoldData>& {
    auto it = scaled.find(kind);
    if (it != scaled.end()) return it->second;
    std::vector<FoldData> data;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      FoldData d;
      d.train = take_rows(x_train, fold_train[f]);
      d.val = take_rows(x_train, folds[f]);
      const auto s = fit_scaler(kind, d.train);
      d.train = s.apply(d.train);
      d.val = s.apply(d.val);
      d.train_labels = take(y_train, fold_train[f]);
      d.val_labels = take(y_train, folds[f]);
      data.push_back(std::move(d));
    }
    return scaled.emplace(kind, std::move(data)).first->second;
  };

  for (auto family : cfg.families) {
    if (family == DetectorFamily::Threshold) {
      evaluate_threshold(cell, cfg, out);
      continue;
    }
    const auto seed = detail::derive_seed(cfg.seed, "detector", anomaly, rep, variant, to_string(family));
    const auto candidates = cfg.grid.candidates(family, seed);
    if (candidates.empty()) continue;
    const std::size_t first_candidate = out.candidates.size();
    for (const auto& c : candidates) {
      CandidateResult cr{cell.anomaly, cell.representation, cell.encoded, c, 0.0, false, {}};
      try {
        double total = 0.0;
        bool converged = true;
        for (const auto& d : fold_data(c.scaler)) {
          const auto fit = fit_predict(c, d.train, d.train_labels, d.val);
          converged = converged && fit.converged;
          total += confusion(fit.predicted, d.val_labels).f1();
        }
        cr.cv_f1 = total / static_cast<double>(folds.size());
        if (!converged) cr.diagnostics = "solver hit its iteration cap on some fold";
      } catch (const std::exception& e) {
        cr.failed = true;
        cr.diagnostics = clean(e.what());
      }
      out.candidates.push_back(std::move(cr));
    }

    auto record = base_record(cell, family);
    record.fits = candidates.size() * folds.size() + 1;
    const CandidateResult* best = nullptr;
    for (std::size_t i = first_candidate; i < out.candidates.size(); ++i) {
      const auto& cr = out.candidates[i];
      if (!cr.failed && (!best || cr.cv_f1 > best->cv_f1)) best = &cr;
    }
    if (!best) {
      record.status = "failed";
      record.diagnostics = "every candidate failed: " + out.candidates[first_candidate].diagnostics;
      out.records.push_back(std::move(record));
      continue;
    }
    record.scaler = best->candidate.scaler;
    record.params = best->candidate.describe();
    record.cv_f1 = best->cv_f1;
    try {
      const auto s = fit_scaler(best->candidate.scaler, x_train);
      record.scaler_checksum = matrix_checksum(x_train);
      const auto fit = fit_predict(best->candidate, s.apply(x_train), y_train, s.apply(x_test));
      set_metrics(record, confusion(fit.predicted, y_test));
      if (!fit.converged) {
        record.status = "not_converged";
        record.diagnostics = "solver hit its iteration cap; best-so-far model used";
      }
    } catch (const std::exception& e) {
      record.status = "failed";
      record.diagnostics = clean(e.what());
    }
    out.records.push_back(std::move(record));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

auto record_key(const EvalRecord& r) {
  return std::make_tuple(static_cast<int>(r.anomaly), static_cast<int>(r.representation), r.encoded,
                         static_cast<int>(r.family));
}

}  // namespace

void normalize(std::vector<EvalRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const EvalRecord& a, const EvalRecord& b) { return record_key(a) < record_key(b); });
}

void normalize(std::vector<CandidateResult>& candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const CandidateResult& a, const CandidateResult& b) {
    return std::make_tuple(static_cast<int>(a.anomaly), static_cast<int>(a.representation), a.encoded,
                           static_cast<int>(a.candidate.family)) <
           std::make_tuple(static_cast<int>(b.anomaly), static_cast<int>(b.representation), b.encoded,
                           static_cast<int>(b.candidate.family));
  });
}

std::vector<Label> labels_of(const std::vector<LabeledTrace>& labeled) {
  std::vector<Label> out;
  out.reserve(labeled.size());
  for (const auto& l : labeled) out.push_back(l.label);
  return out;
}

std::vector<RssiTrace> trace_list(const std::vector<LabeledTrace>& labeled) {
  std::vector<RssiTrace> out;
  out.reserve(labeled.size());
  for (const auto& l : labeled) out.push_back(l.trace);
  return out;
}

Scenario prepare_scenario(const Dataset& dataset, const AnomalySpec& spec, const SplitPlan& plan) {
  return scenario_from_labeled(inject(dataset, spec), spec, plan);
}

Scenario scenario_from_labeled(std::vector<LabeledTrace> labeled, const AnomalySpec& spec, const SplitPlan& plan) {
  Scenario s;
  s.spec = spec;
  s.labeled = std::move(labeled);
  SplitPlan scenario_plan = plan;
  scenario_plan.seed = detail::derive_seed(plan.seed, "split", to_string(spec.kind));
  s.split = make_scenario_split(labels_of(s.labeled), scenario_plan);
  Fnv1a h;
  for (const auto& l : s.labeled) {
    h.update(l.trace.link_id());
    h.update(l.trace.samples());
    h.update(static_cast<std::uint64_t>(l.label));
  }
  s.checksum = h.hex();
  return s;
}

Matrix scenario_features(const Scenario& s, Representation rep) {
  const auto traces = trace_list(s.labeled);
  std::pair<double, double> range{0.0, 1.0};
  if (rep == Representation::Histogram) range = histogram_range(take(traces, s.split.holdout.train));
  return featurize(traces, rep, range);
}

AutoencoderConfig autoencoder_config(const ExperimentConfig& cfg, AnomalyKind anomaly, Representation rep,
                                     std::size_t input_dim) {
  AutoencoderConfig ae;
  ae.input_dim = input_dim;
  ae.epochs = cfg.autoencoder.epochs;
  ae.batch_size = cfg.autoencoder.batch_size;
  ae.learning_rate = cfg.autoencoder.learning_rate;
  ae.patience = cfg.autoencoder.patience;
  ae.seed = detail::derive_seed(cfg.seed, "autoencoder", to_string(anomaly), to_string(rep));
  return ae;
}

EncodedFeatures encode_scenario(const Matrix& plain, std::span<const std::size_t> autoencoder_rows,
                                const AutoencoderConfig& ae) {
  const Matrix training = take_rows(plain, autoencoder_rows);
  EncodedFeatures out{train_autoencoder(ae, training), {}, {}};
  out.codes = out.model.encode(plain);
  out.training_checksum = out.model.data_checksum();
  return out;
}

Dataset load_dataset(const DatasetSource& source) {
  if (source.kind == DatasetSource::Kind::Synthetic) return generate_synthetic(source.links, source.seed);
  return filter_lossless(ingest_rutgers(source.data_dir, source.dbm_offset));
}

namespace {

MatrixResult collect(std::vector<CellResult>& parts, MatrixResult result) {
  for (auto& u : parts) {
    for (auto& r : u.records) result.fits += r.fits;
    result.records.insert(result.records.end(), u.records.begin(), u.records.end());
    result.candidates.insert(result.candidates.end(), u.candidates.begin(), u.candidates.end());
  }
  normalize(result.records);
  normalize(result.candidates);
  return result;
}

}  // namespace

MatrixResult run_matrix(const ExperimentConfig& cfg) { return run_matrix(cfg, load_dataset(cfg.dataset)); }

MatrixResult run_matrix(const ExperimentConfig& cfg, const Dataset& dataset) {
  cfg.validate();
  MatrixResult result;
  std::vector<Scenario> scenarios;
  for (const auto& spec : cfg.anomalies) {
    scenarios.push_back(prepare_scenario(dataset, spec, cfg.split));
    result.scenario_checksums[spec.kind] = scenarios.back().checksum;
  }
  struct Unit {
    std::size_t scenario;
    Representation rep;
  };
  std::vector<Unit> units;
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    for (auto rep : cfg.representations) units.push_back({s, rep});

  std::vector<CellResult> unit_results(units.size());
  parallel_for(units.size(), resolve_threads(cfg.threads), [&](std::size_t u) {
    const auto& sc = scenarios[units[u].scenario];
    const auto rep = units[u].rep;
    CellInput cell;
    cell.anomaly = sc.spec.kind;
    cell.representation = rep;
    cell.labels = labels_of(sc.labeled);
    cell.traces = trace_list(sc.labeled);
    cell.holdout = sc.split.holdout;
    cell.features = scenario_features(sc, rep);
    auto& out = unit_results[u];
    auto plain = evaluate_cell(cell, cfg);
    out.records = std::move(plain.records);
    out.candidates = std::move(plain.candidates);
    if (!cfg.encoded) return;
    CellInput enc = cell;
    enc.encoded = true;
    enc.traces.clear();
    try {
      const auto ae = autoencoder_config(cfg, sc.spec.kind, rep, static_cast<std::size_t>(cell.features.cols()));
      auto encoded = encode_scenario(cell.features, sc.split.autoencoder_rows, ae);
      enc.features = std::move(encoded.codes);
      enc.autoencoder_checksum = encoded.training_checksum;
    } catch (const std::exception& e) {
      for (auto f : cfg.families) {
        if (f == DetectorFamily::Threshold) continue;
        auto r = base_record(enc, f);
        r.status = "failed";
        r.diagnostics = clean(std::string("autoencoder: ") + e.what());
        out.records.push_back(std::move(r));
      }
      return;
    }
    auto coded = evaluate_cell(enc, cfg);
    out.records.insert(out.records.end(), coded.records.begin(), coded.records.end());
    out.candidates.insert(out.candidates.end(), coded.candidates.begin(), coded.candidates.end());
  });
  return collect(unit_results, std::move(result));
}

MatrixResult evaluate_cells(const std::vector<CellInput>& cells, const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), resolve_threads(cfg.threads),
               [&](std::size_t i) { results[i] = evaluate_cell(cells[i], cfg); });
  return collect(results, {});
}

std::size_t count_fits(const ExperimentConfig& cfg) {
  std::size_t per_cell = 0;
  for (auto f : cfg.families) {
    if (f == DetectorFamily::Threshold) continue;
    const auto n = cfg.grid.candidates(f, 0).size();
    if (n > 0) per_cell += n * cfg.split.folds + 1;
  }
  return per_cell * cfg.anomalies.size() * cfg.representations.size() * (cfg.encoded ? 2 : 1);
}

}  // namespace linkscope
