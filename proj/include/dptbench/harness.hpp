#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dptbench/checkpoint.hpp"
#include "dptbench/dpt.hpp"
#include "dptbench/finetune.hpp"
#include "dptbench/rtd.hpp"

namespace dptbench::harness {

enum class Task { kClassification, kQa };
enum class Method { kFt, kDpt };

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "files"
  // synthetic
  int n_classes = 2;
  int n_per_class = 200;
  std::uint64_t seed = 1;  // master data seed
  Scalar cross_class_prob = 0.08;
  // files (root overridable via DPTBENCH_DATA_DIR)
  std::string dir;
  std::string train_file = "train.tsv";
  std::string dev_file = "dev.tsv";
  std::string qa_train_file = "qa_train.json";
  std::string qa_dev_file = "qa_dev.json";
  std::string subsample = "stratified";  // "stratified" | "uniform"
};

struct PretrainConfig {
  int steps = 1200;
  int batch_size = 8;
  Scalar replace_prob = 0.15;
  Scalar lr = 1e-3;
  std::uint64_t seed = 1;
  std::string checkpoint;  // load this instead of pretraining when set
};

struct TrainConfig {
  int epochs = 4;
  int batch_size = 8;
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

struct ExperimentConfig {
  Task task = Task::kClassification;
  Method method = Method::kDpt;
  dpt::ScoreMode mode = dpt::ScoreMode::kInverted;
  Scalar fraction = 1.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string output_dir = "runs/default";
  nn::EncoderConfig encoder{.hidden_dim = 48, .layers = 2, .heads = 4,
                            .ffn_dim = 96, .max_len = 64};
  TrainConfig train;
  PretrainConfig pretrain;
  DataConfig data;
  dpt::TemplateConfig template_config;
  Scalar qa_threshold = 0.6;

  void validate() const;
};

// Strict parse: unknown keys anywhere raise ConfigError, as do out-of-range
// values. All keys are optional and default as above.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& file);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// FNV-1a of the canonical config serialization, 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct TrialRecord {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string reason;                     // failure reason when !ok
  std::map<std::string, Scalar> metrics;  // "accuracy" or "em"/"f1"
};

struct AggregateStats {
  Scalar mean = 0, stddev = 0, min = 0, max = 0, best3_mean = 0;
  friend bool operator==(const AggregateStats&, const AggregateStats&) = default;
};

// stddev is the population standard deviation over completed trials;
// best3_mean averages the top min(3, n) values (the paper's 3-of-10 statistic).
AggregateStats aggregate_values(std::span<const Scalar> values);

struct ExperimentReport {
  std::string config_hash;
  std::string task, method, mode;
  Scalar fraction = 1.0;
  std::vector<TrialRecord> trials;
  std::map<std::string, AggregateStats> aggregate;
  Scalar wall_clock_seconds = 0;
};

// One trial per seed: subsample (when fraction < 1), tune, evaluate. A trial
// that throws is recorded as failed with its reason; aggregates cover the
// completed trials.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

// `seed,metric,value` rows, sorted by (seed, metric); value formatting is
// shortest-round-trip so emission is byte-stable.
std::string report_to_csv(const ExperimentReport& report);

struct Comparison {
  std::map<std::string, Scalar> delta_mean;
  std::map<std::string, Scalar> delta_stddev;
  std::map<std::string, std::vector<Scalar>> per_seed_delta;
};

// a minus b; requires the same task and the same seed list.
Comparison compare(const ExperimentReport& a, const ExperimentReport& b);

// Datasets resolved from the config; file paths honor DPTBENCH_DATA_DIR.
struct DataBundle {
  text::ClsDataset classification;
  text::QADataset qa;
  std::vector<std::string> corpus;  // unlabeled pretraining text
};

DataBundle load_data(const ExperimentConfig& cfg);

// Shared data/pretraining context so sweeps and single trials agree exactly.
struct RunContext {
  text::Vocab vocab;
  text::ClsDataset classification;
  text::QADataset qa;
  nn::ModelParams pretrained;
};

// Resolves data (synthetic or files), builds the vocab (scaffold and class
// tokens injected), and pretrains or loads the checkpoint.
RunContext prepare_run(const ExperimentConfig& cfg, std::ostream* pretrain_log = nullptr);

// One tuning trial inside a prepared context; returns the trial's metrics.
TrialRecord run_trial(const ExperimentConfig& cfg, const RunContext& ctx,
                      std::uint64_t trial_seed);

// Trial plus its tuned model, per-epoch curve, and checkpoint metadata
// (task/method/mode, class order, template, threshold).
struct TrialOutput {
  TrialRecord record;
  nn::ModelParams model;
  std::vector<dpt::EpochMetrics> epochs;
  nlohmann::json meta;
};

TrialOutput run_trial_full(const ExperimentConfig& cfg, const RunContext& ctx,
                           std::uint64_t trial_seed);

// Metrics of a tuned checkpoint on one split of the configured dataset.
std::map<std::string, Scalar> evaluate_checkpoint(const Checkpoint& ckpt,
                                                  const ExperimentConfig& cfg,
                                                  const std::string& split);

std::string to_string(Task t);
std::string to_string(Method m);
std::string to_string(dpt::ScoreMode m);

}  // namespace dptbench::harness
