#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "linkscope/autoencoder.hpp"
#include "linkscope/injector.hpp"
#include "linkscope/representations.hpp"
#include "linkscope/supervised.hpp"
#include "linkscope/threshold.hpp"
#include "linkscope/trace.hpp"
#include "linkscope/unsupervised.hpp"

namespace linkscope {

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { Holdout80_20, Holdout60_40 };

struct SplitPlan {
  SplitMode mode = SplitMode::Holdout80_20;
  bool stratified = true;
  std::size_t folds = 5;
  std::uint64_t seed = 0;

  double test_fraction() const { return mode == SplitMode::Holdout80_20 ? 0.2 : 0.4; }
};

struct Split {
  std::vector<std::size_t> train;  // ascending row indices
  std::vector<std::size_t> test;
};

// Needs at least 10 rows. Stratified parts keep each class within one sample of
// its global share.
Split split(std::span<const Label> labels, const SplitPlan& plan);

// Stratified k-fold assignment; returns the validation rows of each fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const Label> labels, std::size_t k,
                                                       std::uint64_t seed);

// The rows of one scenario used for training, testing and autoencoder fitting.
struct ScenarioSplit {
  Split holdout;
  std::vector<std::size_t> autoencoder_rows;  // 60% stratified part of holdout.train
};

ScenarioSplit make_scenario_split(std::span<const Label> labels, const SplitPlan& plan);

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  double precision() const;
  double recall() const;
  double f1() const;
};

Confusion confusion(std::span<const Label> predicted, std::span<const Label> actual);

// ---------------------------------------------------------------------------
// Detectors and grids

enum class DetectorFamily { Threshold, LogReg, Forest, Svm, Lof, IForest, OcSvm };
inline constexpr std::array kAllFamilies{DetectorFamily::Threshold, DetectorFamily::LogReg, DetectorFamily::Forest,
                                         DetectorFamily::Svm,       DetectorFamily::Lof,    DetectorFamily::IForest,
                                         DetectorFamily::OcSvm};

std::string_view to_string(DetectorFamily f);     // threshold, lr, rforest, svm, lof, iforest, ocsvm
std::string_view display_name(DetectorFamily f);  // Threshold, LR, RForest, SVM, LOF, IForest, OC-SVM
DetectorFamily parse_family(std::string_view text);
bool is_supervised(DetectorFamily f);

using DetectorParams = std::variant<LogRegParams, ForestParams, SvmParams, LofParams, IForestParams, OcSvmParams>;

struct Candidate {
  DetectorFamily family = DetectorFamily::LogReg;
  ScalerKind scaler = ScalerKind::None;
  DetectorParams params;

  std::string describe() const;  // e.g. "C=1;kernel=rbf;gamma=scale"
};

struct DetectorGrid {
  std::vector<double> lr_C;
  std::vector<std::size_t> forest_estimators;
  std::vector<double> svm_C;
  std::vector<KernelKind> svm_kernels;
  std::vector<GammaMode> svm_gammas;
  std::vector<std::size_t> lof_neighbors;
  std::vector<int> lof_p;
  double lof_offset = 1.5;
  std::vector<std::size_t> iforest_estimators;
  std::size_t iforest_max_samples = 256;
  double iforest_offset = 0.5;
  std::vector<double> ocsvm_nu;
  std::vector<KernelKind> ocsvm_kernels;
  std::vector<GammaMode> ocsvm_gammas;
  std::map<DetectorFamily, std::vector<ScalerKind>> scalers;
  // Families allowed to use values outside the published grids.
  std::vector<DetectorFamily> extended;

  // Every (scaler, hyperparameter) combination of one family, in a fixed order.
  std::vector<Candidate> candidates(DetectorFamily f, std::uint64_t seed) const;
};

// ---------------------------------------------------------------------------
// Experiment configuration

struct DatasetSource {
  enum class Kind { Synthetic, Rutgers } kind = Kind::Synthetic;
  std::size_t links = 2123;
  std::uint64_t seed = 7;
  std::filesystem::path data_dir;
  double dbm_offset = kDefaultDbmOffset;
};

struct AutoencoderSettings {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t patience = 20;
};

struct ExperimentConfig {
  std::string profile = "fast";
  DatasetSource dataset;
  std::vector<AnomalySpec> anomalies;
  std::vector<Representation> representations;
  bool encoded = true;
  std::vector<DetectorFamily> families;
  DetectorGrid grid;
  ThresholdConfig thresholds;
  AutoencoderSettings autoencoder;
  SplitPlan split;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: LINKSCOPE_THREADS, else hardware concurrency
  std::filesystem::path output_dir;

  // Throws ConfigError on any inconsistency, including grid values outside the
  // published grids for a family not marked extended.
  void validate() const;
};

ExperimentConfig profile_config(std::string_view profile);  // "fast" or "full"

// Reads the declarative config; unknown keys and type mismatches are ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

std::size_t resolve_threads(std::size_t requested);

// ---------------------------------------------------------------------------
// Results

struct EvalRecord {
  AnomalyKind anomaly = AnomalyKind::SuddenD;
  Representation representation = Representation::TimeValue;
  bool encoded = false;
  DetectorFamily family = DetectorFamily::Threshold;
  ScalerKind scaler = ScalerKind::None;
  std::string params;
  Confusion counts;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double cv_f1 = 0.0;  // mean validation-fold F1 of the winning candidate
  std::string status = "ok";  // ok, not_converged, failed
  std::string diagnostics;
  std::size_t fits = 0;
  std::string scaler_checksum;       // checksum of the rows the final scaler was fitted on
  std::string autoencoder_checksum;  // checksum of the autoencoder's training rows
};

struct CandidateResult {
  AnomalyKind anomaly = AnomalyKind::SuddenD;
  Representation representation = Representation::TimeValue;
  bool encoded = false;
  Candidate candidate;
  double cv_f1 = 0.0;
  bool failed = false;
  std::string diagnostics;
};

// One (anomaly, representation, encoded) dataset ready for the detectors.
struct CellInput {
  AnomalyKind anomaly = AnomalyKind::SuddenD;
  Representation representation = Representation::TimeValue;
  bool encoded = false;
  Matrix features;                      // all rows, unscaled
  std::vector<Label> labels;            // all rows
  std::vector<RssiTrace> traces;        // for the threshold rules; may be empty
  Split holdout;
  std::string autoencoder_checksum;
};

struct CellResult {
  std::vector<EvalRecord> records;
  std::vector<CandidateResult> candidates;
};

CellResult evaluate_cell(const CellInput& cell, const ExperimentConfig& cfg);

// Runs fn(i) for i in [0, n) on a bounded pool; exceptions are rethrown after all finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Canonical order: anomaly, representation, encoded, family.
void normalize(std::vector<EvalRecord>& records);
void normalize(std::vector<CandidateResult>& candidates);

// Scenario preparation shared by run_matrix and the staged pipeline.
struct Scenario {
  AnomalySpec spec;
  std::vector<LabeledTrace> labeled;
  ScenarioSplit split;
  std::string checksum;  // over traces and labels
};

Scenario prepare_scenario(const Dataset& dataset, const AnomalySpec& spec, const SplitPlan& plan);
// Same as prepare_scenario for traces that were injected earlier.
Scenario scenario_from_labeled(std::vector<LabeledTrace> labeled, const AnomalySpec& spec, const SplitPlan& plan);
std::vector<Label> labels_of(const std::vector<LabeledTrace>& labeled);
std::vector<RssiTrace> trace_list(const std::vector<LabeledTrace>& labeled);

// Plain features of every row, with histogram bins over the training rows' range.
Matrix scenario_features(const Scenario& s, Representation rep);

AutoencoderConfig autoencoder_config(const ExperimentConfig& cfg, AnomalyKind anomaly, Representation rep,
                                     std::size_t input_dim);

struct EncodedFeatures {
  AutoencoderModel model;
  Matrix codes;  // all rows
  std::string training_checksum;
};

EncodedFeatures encode_scenario(const Matrix& plain, std::span<const std::size_t> autoencoder_rows,
                                const AutoencoderConfig& ae);

struct MatrixResult {
  std::vector<EvalRecord> records;
  std::vector<CandidateResult> candidates;
  std::map<AnomalyKind, std::string> scenario_checksums;
  std::size_t fits = 0;
};

Dataset load_dataset(const DatasetSource& source);
MatrixResult run_matrix(const ExperimentConfig& cfg);
// Evaluates cells built elsewhere (e.g. from stage artifacts); scenario checksums are left empty.
MatrixResult evaluate_cells(const std::vector<CellInput>& cells, const ExperimentConfig& cfg);
MatrixResult run_matrix(const ExperimentConfig& cfg, const Dataset& dataset);

// Number of models the grid search fits, refits included.
std::size_t count_fits(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { Csv, Json, Markdown };

std::string records_csv(const std::vector<EvalRecord>& records);
nlohmann::ordered_json records_json(const std::vector<EvalRecord>& records);
std::string candidates_csv(const std::vector<CandidateResult>& candidates);
// 13 method rows x 4 representation groups x (Prec, Rec, F1); "-" where no rule exists.
std::string anomaly_table_csv(const std::vector<EvalRecord>& records, AnomalyKind anomaly);
std::string anomaly_table_markdown(const std::vector<EvalRecord>& records, AnomalyKind anomaly);

// Writes the report files for the given format into dir and returns their paths.
std::vector<std::filesystem::path> render_report(const std::vector<EvalRecord>& records, ReportFormat format,
                                                 const std::filesystem::path& dir);
std::vector<EvalRecord> read_records_json(const std::filesystem::path& path);

// records.csv, records.json, candidates.csv, table_<anomaly>.csv, report.md and
// manifest.json (config snapshot, seeds, grids, dataset checksums).
std::vector<std::filesystem::path> write_run_outputs(const MatrixResult& result, const ExperimentConfig& cfg,
                                                     const std::filesystem::path& dir);

}  // namespace linkscope
