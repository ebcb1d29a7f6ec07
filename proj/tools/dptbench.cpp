// Command-line front end: pretrain / tune / eval / sweep / report.
// Exit status: 0 success, 1 config error, 2 all trials failed.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dptbench/harness.hpp"

namespace fs = std::filesystem;
using namespace dptbench;

namespace {

harness::ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return harness::ExperimentConfig{};
  return harness::load_config(config_path);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

int cmd_pretrain(const std::string& config_path, std::uint64_t seed, bool seed_set) {
  harness::ExperimentConfig cfg = load_or_default(config_path);
  if (seed_set) cfg.pretrain.seed = seed;
  cfg.pretrain.checkpoint.clear();  // this command always trains

  fs::create_directories(cfg.output_dir);
  const fs::path log_path = fs::path(cfg.output_dir) / "pretrain_log.jsonl";
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write " + log_path.string());

  const harness::RunContext ctx = harness::prepare_run(cfg, &log);
  Checkpoint ckpt;
  ckpt.model = ctx.pretrained;
  ckpt.vocab = ctx.vocab;
  ckpt.meta = {{"task", "pretrain"}, {"seed", cfg.pretrain.seed}};
  const fs::path out_path = fs::path(cfg.output_dir) / "pretrained.ckpt";
  save_checkpoint(out_path, ckpt);
  std::cout << "checkpoint: " << out_path.string() << "\n"
            << "log: " << log_path.string() << "\n";
  return 0;
}

int cmd_tune(const std::string& config_path, const std::string& method,
             const std::string& mode, double fraction, bool fraction_set,
             std::uint64_t seed, bool seed_set) {
  harness::ExperimentConfig cfg = load_or_default(config_path);
  cfg.method = method == "ft" ? harness::Method::kFt : harness::Method::kDpt;
  cfg.mode = mode == "direct" ? dpt::ScoreMode::kDirect : dpt::ScoreMode::kInverted;
  if (fraction_set) cfg.fraction = fraction;
  const std::uint64_t trial_seed = seed_set ? seed : cfg.seeds.front();
  cfg.validate();

  fs::create_directories(cfg.output_dir);
  const harness::RunContext ctx = harness::prepare_run(cfg);
  const harness::TrialOutput out = harness::run_trial_full(cfg, ctx, trial_seed);
  if (!out.record.ok) {
    std::cerr << "trial failed: " << out.record.reason << "\n";
    return 2;
  }

  const std::string tag = method + "_" + mode + "_seed" + std::to_string(trial_seed);
  const fs::path ckpt_path = fs::path(cfg.output_dir) / ("tuned_" + tag + ".ckpt");
  Checkpoint ckpt;
  ckpt.model = out.model;
  ckpt.vocab = ctx.vocab;
  ckpt.meta = out.meta;
  save_checkpoint(ckpt_path, ckpt);

  std::string curve;
  for (const auto& e : out.epochs) {
    const nlohmann::json line = {
        {"epoch", e.epoch}, {"train_loss", e.train_loss}, {"eval_metric", e.eval_metric}};
    curve += line.dump() + "\n";
  }
  write_file(fs::path(cfg.output_dir) / ("tune_metrics_" + tag + ".jsonl"), curve);

  nlohmann::json result = {{"seed", trial_seed}, {"metrics", out.record.metrics},
                           {"checkpoint", ckpt_path.string()}};
  std::cout << result.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& split) {
  const harness::ExperimentConfig cfg = load_or_default(config_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto metrics = harness::evaluate_checkpoint(ckpt, cfg, split);
  std::cout << nlohmann::json(metrics).dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path) {
  const harness::ExperimentConfig cfg = harness::load_config(config_path);
  const harness::ExperimentReport report = harness::run_experiment(cfg);

  fs::create_directories(cfg.output_dir);
  const fs::path report_path = fs::path(cfg.output_dir) / "report.json";
  write_file(report_path, harness::report_to_json(report).dump(2) + "\n");

  int completed = 0;
  for (const auto& t : report.trials)
    if (t.ok) ++completed;
  std::cout << "report: " << report_path.string() << "\n";
  for (const auto& [name, s] : report.aggregate)
    std::cout << name << ": mean " << s.mean << " stddev " << s.stddev << " best3 "
              << s.best3_mean << "\n";
  std::cout << "trials completed: " << completed << "/" << report.trials.size() << "\n";
  return completed == 0 ? 2 : 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
  const fs::path report_path = fs::path(in_dir) / "report.json";
  std::ifstream in(report_path);
  if (!in) throw IoError("cannot open " + report_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(report_path.string() + ": " + e.what());
  }
  const harness::ExperimentReport report = harness::report_from_json(j);

  if (format == "csv") {
    const fs::path out_path = fs::path(in_dir) / "report.csv";
    write_file(out_path, harness::report_to_csv(report));
    std::cout << out_path.string() << "\n";
  } else {
    write_file(report_path, harness::report_to_json(report).dump(2) + "\n");
    std::cout << report_path.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replaced-token-detection pretraining and discriminative prompt tuning workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string method = "dpt";
  std::string mode = "inverted";
  std::string checkpoint;
  std::string split = "dev";
  std::string in_dir;
  std::string format = "json";
  double fraction = 1.0;
  std::uint64_t seed = 1;

  auto* pre = app.add_subcommand("pretrain", "RTD-pretrain an encoder and save a checkpoint");
  pre->add_option("--config", config_path, "experiment config JSON");
  auto* pre_seed = pre->add_option("--seed", seed, "pretraining seed");

  auto* tune = app.add_subcommand("tune", "tune one trial from the pretrained checkpoint");
  tune->add_option("--config", config_path, "experiment config JSON");
  tune->add_option("--method", method, "ft | dpt")->check(CLI::IsMember({"ft", "dpt"}));
  tune->add_option("--mode", mode, "inverted | direct")
      ->check(CLI::IsMember({"inverted", "direct"}));
  auto* tune_fraction = tune->add_option("--fraction", fraction, "training data fraction");
  auto* tune_seed = tune->add_option("--seed", seed, "trial seed");

  auto* ev = app.add_subcommand("eval", "evaluate a tuned checkpoint on a split");
  ev->add_option("--config", config_path, "experiment config JSON");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--split", split, "train | dev")->check(CLI::IsMember({"train", "dev"}));

  auto* sweep = app.add_subcommand("sweep", "run every configured seed and persist a report");
  sweep->add_option("--config", config_path, "experiment config JSON")->required();

  auto* rep = app.add_subcommand("report", "re-emit a persisted report as json or csv");
  rep->add_option("--in", in_dir, "directory containing report.json")->required();
  rep->add_option("--format", format, "json | csv")->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(config_path, seed, pre_seed->count() > 0);
    if (tune->parsed())
      return cmd_tune(config_path, method, mode, fraction, tune_fraction->count() > 0, seed,
                      tune_seed->count() > 0);
    if (ev->parsed()) return cmd_eval(config_path, checkpoint, split);
    if (sweep->parsed()) return cmd_sweep(config_path);
    if (rep->parsed()) return cmd_report(in_dir, format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
