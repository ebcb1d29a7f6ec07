#include "dptbench/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dptbench::harness {

std::string to_string(Task t) {
  return t == Task::kClassification ? "classification" : "qa";
}
std::string to_string(Method m) { return m == Method::kFt ? "ft" : "dpt"; }
std::string to_string(dpt::ScoreMode m) {
  return m == dpt::ScoreMode::kInverted ? "inverted" : "direct";
}

namespace {

Task task_from_string(const std::string& s) {
  if (s == "classification") return Task::kClassification;
  if (s == "qa") return Task::kQa;
  throw ConfigError("task must be 'classification' or 'qa', got '" + s + "'");
}

Method method_from_string(const std::string& s) {
  if (s == "ft") return Method::kFt;
  if (s == "dpt") return Method::kDpt;
  throw ConfigError("method must be 'ft' or 'dpt', got '" + s + "'");
}

dpt::ScoreMode mode_from_string(const std::string& s) {
  if (s == "inverted") return dpt::ScoreMode::kInverted;
  if (s == "direct") return dpt::ScoreMode::kDirect;
  throw ConfigError("mode must be 'inverted' or 'direct', got '" + s + "'");
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                         const char* where) {
  for (const auto& item : j.items()) {
    bool found = false;
    for (const char* k : known)
      if (item.key() == k) {
        found = true;
        break;
      }
    if (!found)
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
  }
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string format_double(Scalar v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("fraction must be in (0, 1]");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("seeds must be distinct");
  if (data.source != "synthetic" && data.source != "files")
    throw ConfigError("data.source must be 'synthetic' or 'files'");
  if (data.subsample != "stratified" && data.subsample != "uniform")
    throw ConfigError("data.subsample must be 'stratified' or 'uniform'");
  if (!(qa_threshold > 0.0 && qa_threshold < 1.0))
    throw ConfigError("qa.threshold must be in (0, 1)");
  if (train.epochs < 0 || train.batch_size <= 0)
    throw ConfigError("train.epochs/batch_size out of range");
  if (pretrain.steps < 0 || pretrain.batch_size <= 0)
    throw ConfigError("pretrain.steps/batch_size out of range");
  if (!(pretrain.replace_prob >= 0.0 && pretrain.replace_prob <= 1.0))
    throw ConfigError("pretrain.replace_prob must be in [0, 1]");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    reject_unknown_keys(j,
                        {"task", "method", "mode", "fraction", "seeds", "output_dir",
                         "encoder", "train", "pretrain", "data", "template", "qa"},
                        "config");
    if (j.contains("task")) cfg.task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("method"))
      cfg.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
    read_key(j, "fraction", cfg.fraction);
    read_key(j, "seeds", cfg.seeds);
    read_key(j, "output_dir", cfg.output_dir);

    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      reject_unknown_keys(
          e, {"hidden_dim", "layers", "heads", "ffn_dim", "max_len", "dropout", "dlm_bias"},
          "encoder");
      read_key(e, "hidden_dim", cfg.encoder.hidden_dim);
      read_key(e, "layers", cfg.encoder.layers);
      read_key(e, "heads", cfg.encoder.heads);
      read_key(e, "ffn_dim", cfg.encoder.ffn_dim);
      read_key(e, "max_len", cfg.encoder.max_len);
      read_key(e, "dropout", cfg.encoder.dropout);
      read_key(e, "dlm_bias", cfg.encoder.dlm_bias);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown_keys(t, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps"}, "train");
      read_key(t, "epochs", cfg.train.epochs);
      read_key(t, "batch_size", cfg.train.batch_size);
      read_key(t, "lr", cfg.train.lr);
      read_key(t, "beta1", cfg.train.beta1);
      read_key(t, "beta2", cfg.train.beta2);
      read_key(t, "eps", cfg.train.eps);
    }
    if (j.contains("pretrain")) {
      const auto& p = j.at("pretrain");
      reject_unknown_keys(
          p, {"steps", "batch_size", "replace_prob", "lr", "seed", "checkpoint"}, "pretrain");
      read_key(p, "steps", cfg.pretrain.steps);
      read_key(p, "batch_size", cfg.pretrain.batch_size);
      read_key(p, "replace_prob", cfg.pretrain.replace_prob);
      read_key(p, "lr", cfg.pretrain.lr);
      read_key(p, "seed", cfg.pretrain.seed);
      read_key(p, "checkpoint", cfg.pretrain.checkpoint);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown_keys(d,
                          {"source", "n_classes", "n_per_class", "seed", "cross_class_prob",
                           "dir", "train_file", "dev_file", "qa_train_file", "qa_dev_file",
                           "subsample"},
                          "data");
      read_key(d, "source", cfg.data.source);
      read_key(d, "n_classes", cfg.data.n_classes);
      read_key(d, "n_per_class", cfg.data.n_per_class);
      read_key(d, "seed", cfg.data.seed);
      read_key(d, "cross_class_prob", cfg.data.cross_class_prob);
      read_key(d, "dir", cfg.data.dir);
      read_key(d, "train_file", cfg.data.train_file);
      read_key(d, "dev_file", cfg.data.dev_file);
      read_key(d, "qa_train_file", cfg.data.qa_train_file);
      read_key(d, "qa_dev_file", cfg.data.qa_dev_file);
      read_key(d, "subsample", cfg.data.subsample);
    }
    if (j.contains("template")) {
      const auto& t = j.at("template");
      reject_unknown_keys(t, {"scaffold", "separator", "terminator"}, "template");
      read_key(t, "scaffold", cfg.template_config.scaffold);
      read_key(t, "separator", cfg.template_config.separator);
      read_key(t, "terminator", cfg.template_config.terminator);
    }
    if (j.contains("qa")) {
      const auto& q = j.at("qa");
      reject_unknown_keys(q, {"threshold"}, "qa");
      read_key(q, "threshold", cfg.qa_threshold);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  return {
      {"task", to_string(cfg.task)},
      {"method", to_string(cfg.method)},
      {"mode", to_string(cfg.mode)},
      {"fraction", cfg.fraction},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir},
      {"encoder",
       {{"hidden_dim", cfg.encoder.hidden_dim},
        {"layers", cfg.encoder.layers},
        {"heads", cfg.encoder.heads},
        {"ffn_dim", cfg.encoder.ffn_dim},
        {"max_len", cfg.encoder.max_len},
        {"dropout", cfg.encoder.dropout},
        {"dlm_bias", cfg.encoder.dlm_bias}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"lr", cfg.train.lr},
        {"beta1", cfg.train.beta1},
        {"beta2", cfg.train.beta2},
        {"eps", cfg.train.eps}}},
      {"pretrain",
       {{"steps", cfg.pretrain.steps},
        {"batch_size", cfg.pretrain.batch_size},
        {"replace_prob", cfg.pretrain.replace_prob},
        {"lr", cfg.pretrain.lr},
        {"seed", cfg.pretrain.seed},
        {"checkpoint", cfg.pretrain.checkpoint}}},
      {"data",
       {{"source", cfg.data.source},
        {"n_classes", cfg.data.n_classes},
        {"n_per_class", cfg.data.n_per_class},
        {"seed", cfg.data.seed},
        {"cross_class_prob", cfg.data.cross_class_prob},
        {"dir", cfg.data.dir},
        {"train_file", cfg.data.train_file},
        {"dev_file", cfg.data.dev_file},
        {"qa_train_file", cfg.data.qa_train_file},
        {"qa_dev_file", cfg.data.qa_dev_file},
        {"subsample", cfg.data.subsample}}},
      {"template",
       {{"scaffold", cfg.template_config.scaffold},
        {"separator", cfg.template_config.separator},
        {"terminator", cfg.template_config.terminator}}},
      {"qa", {{"threshold", cfg.qa_threshold}}},
  };
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x00000100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

AggregateStats aggregate_values(std::span<const Scalar> values) {
  if (values.empty()) throw ContractError("aggregate_values: no values");
  AggregateStats s;
  s.min = values[0];
  s.max = values[0];
  Scalar total = 0.0;
  for (Scalar v : values) {
    total += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = total / static_cast<Scalar>(values.size());
  Scalar sq = 0.0;
  for (Scalar v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<Scalar>(values.size()));
  std::vector<Scalar> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t k = std::min<std::size_t>(3, sorted.size());
  Scalar top = 0.0;
  for (std::size_t i = 0; i < k; ++i) top += sorted[i];
  s.best3_mean = top / static_cast<Scalar>(k);
  return s;
}

DataBundle load_data(const ExperimentConfig& cfg) {
  DataBundle out;
  if (cfg.data.source == "synthetic") {
    text::SynthOptions opts;
    opts.cross_class_prob = cfg.data.cross_class_prob;
    text::SynthCorpus synth =
        text::synth_corpus(cfg.data.n_classes, cfg.data.n_per_class, cfg.data.seed, opts);
    out.classification = std::move(synth.classification);
    out.qa = std::move(synth.qa);
    out.corpus = std::move(synth.unlabeled);
  } else {
    std::filesystem::path root = cfg.data.dir;
    if (const char* env = std::getenv("DPTBENCH_DATA_DIR"); env && *env) root = env;
    if (cfg.task == Task::kClassification) {
      out.classification =
          text::load_classification_tsv(root / cfg.data.train_file, root / cfg.data.dev_file);
      for (const auto& rec : out.classification.train) out.corpus.push_back(rec.text);
    } else {
      out.qa = text::load_qa_json(root / cfg.data.qa_train_file, root / cfg.data.qa_dev_file);
      for (const auto& rec : out.qa.train) {
        out.corpus.push_back(rec.question);
        out.corpus.push_back(rec.paragraph);
      }
    }
  }
  return out;
}

RunContext prepare_run(const ExperimentConfig& cfg, std::ostream* pretrain_log) {
  cfg.validate();
  RunContext ctx;
  DataBundle bundle = load_data(cfg);
  ctx.classification = std::move(bundle.classification);
  ctx.qa = std::move(bundle.qa);
  std::vector<std::string> corpus = std::move(bundle.corpus);

  if (!cfg.pretrain.checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(cfg.pretrain.checkpoint);
    ctx.vocab = std::move(ckpt.vocab);
    ctx.pretrained = std::move(ckpt.model);
  } else {
    ctx.vocab = text::Vocab::build(corpus, 1);
    text::inject_text_tokens(ctx.vocab, cfg.template_config.scaffold);
    text::inject_text_tokens(ctx.vocab, cfg.template_config.separator);
    text::inject_text_tokens(ctx.vocab, cfg.template_config.terminator);
    for (const std::string& name : ctx.classification.classes.names)
      text::inject_text_tokens(ctx.vocab, name);

    nn::EncoderConfig ecfg = cfg.encoder;
    ecfg.vocab_size = ctx.vocab.size();
    std::vector<text::TokenSequence> seqs;
    seqs.reserve(corpus.size());
    for (const std::string& line : corpus) seqs.push_back(text::tokenize(line, ctx.vocab));

    rtd::PretrainConfig pcfg;
    pcfg.steps = cfg.pretrain.steps;
    pcfg.batch_size = cfg.pretrain.batch_size;
    pcfg.replace_prob = cfg.pretrain.replace_prob;
    pcfg.adam.lr = cfg.pretrain.lr;
    pcfg.log_every = std::max(1, cfg.pretrain.steps / 100);
    ctx.pretrained = rtd::pretrain(seqs, ecfg, pcfg, cfg.pretrain.seed, pretrain_log);
  }

  if (cfg.method == Method::kDpt && !ctx.pretrained.dlm)
    throw ConfigError("DPT requires a pretrained DLM head");
  return ctx;
}

namespace {

text::SubsampleMode subsample_mode(const ExperimentConfig& cfg) {
  return cfg.data.subsample == "uniform" ? text::SubsampleMode::kUniform
                                         : text::SubsampleMode::kStratified;
}

nn::AdamConfig adam_config(const TrainConfig& t) {
  return {.lr = t.lr, .beta1 = t.beta1, .beta2 = t.beta2, .eps = t.eps};
}

}  // namespace

TrialOutput run_trial_full(const ExperimentConfig& cfg, const RunContext& ctx,
                           std::uint64_t trial_seed) {
  TrialOutput out;
  out.record.seed = trial_seed;
  out.meta = {{"task", to_string(cfg.task)},
              {"method", to_string(cfg.method)},
              {"mode", to_string(cfg.mode)},
              {"qa_threshold", cfg.qa_threshold},
              {"template",
               {{"scaffold", cfg.template_config.scaffold},
                {"separator", cfg.template_config.separator},
                {"terminator", cfg.template_config.terminator}}}};
  // Each trial derives its streams from (master data seed, trial seed).
  const std::uint64_t subsample_seed = mix_seed(cfg.data.seed, trial_seed, 1);
  const std::uint64_t tune_seed = mix_seed(cfg.data.seed, trial_seed, 2);
  try {
    if (cfg.task == Task::kClassification) {
      text::ClsDataset data = cfg.fraction < 1.0
                                  ? text::subsample(ctx.classification, cfg.fraction,
                                                    subsample_seed, subsample_mode(cfg))
                                  : ctx.classification;
      out.meta["classes"] = data.classes.names;
      if (cfg.method == Method::kDpt) {
        dpt::TuneConfig tc;
        tc.epochs = cfg.train.epochs;
        tc.batch_size = cfg.train.batch_size;
        tc.adam = adam_config(cfg.train);
        tc.mode = cfg.mode;
        tc.template_config = cfg.template_config;
        tc.qa_threshold = cfg.qa_threshold;
        dpt::TuneResult res = dpt::tune_dpt(data, ctx.vocab, ctx.pretrained, tc, tune_seed);
        out.record.metrics["accuracy"] = res.final_metric;
        out.meta["template_classes"] = res.classes.ordered.names;
        out.meta["template_class_canonical"] = res.classes.canonical;
        out.epochs = std::move(res.epochs);
        out.model = std::move(res.model);
      } else {
        ft::TuneConfig tc;
        tc.epochs = cfg.train.epochs;
        tc.batch_size = cfg.train.batch_size;
        tc.adam = adam_config(cfg.train);
        ft::TuneResult res = ft::tune_ft(data, ctx.vocab, ctx.pretrained, tc, tune_seed);
        out.record.metrics["accuracy"] = res.final_metric;
        out.epochs = std::move(res.epochs);
        out.model = std::move(res.model);
      }
    } else {
      text::QADataset data = cfg.fraction < 1.0
                                 ? text::subsample(ctx.qa, cfg.fraction, subsample_seed)
                                 : ctx.qa;
      if (cfg.method == Method::kDpt) {
        dpt::TuneConfig tc;
        tc.epochs = cfg.train.epochs;
        tc.batch_size = cfg.train.batch_size;
        tc.adam = adam_config(cfg.train);
        tc.mode = cfg.mode;
        tc.qa_threshold = cfg.qa_threshold;
        dpt::TuneResult res = dpt::tune_dpt_qa(data, ctx.vocab, ctx.pretrained, tc, tune_seed);
        const dpt::QAMetrics qm =
            dpt::qa_metrics(res.model, ctx.vocab, data.dev, cfg.qa_threshold);
        out.record.metrics["em"] = qm.em;
        out.record.metrics["f1"] = qm.f1;
        out.epochs = std::move(res.epochs);
        out.model = std::move(res.model);
      } else {
        ft::TuneConfig tc;
        tc.epochs = cfg.train.epochs;
        tc.batch_size = cfg.train.batch_size;
        tc.adam = adam_config(cfg.train);
        ft::TuneResult res = ft::tune_ft_qa(data, ctx.vocab, ctx.pretrained, tc, tune_seed);
        const dpt::QAMetrics qm = ft::qa_metrics(res.model, ctx.vocab, data.dev);
        out.record.metrics["em"] = qm.em;
        out.record.metrics["f1"] = qm.f1;
        out.epochs = std::move(res.epochs);
        out.model = std::move(res.model);
      }
    }
    out.record.ok = true;
  } catch (const std::exception& e) {
    out.record.ok = false;
    out.record.reason = e.what();
    out.record.metrics.clear();
  }
  return out;
}

TrialRecord run_trial(const ExperimentConfig& cfg, const RunContext& ctx,
                      std::uint64_t trial_seed) {
  return run_trial_full(cfg, ctx, trial_seed).record;
}

std::map<std::string, Scalar> evaluate_checkpoint(const Checkpoint& ckpt,
                                                  const ExperimentConfig& cfg,
                                                  const std::string& split) {
  if (split != "train" && split != "dev")
    throw ConfigError("split must be 'train' or 'dev', got '" + split + "'");
  const DataBundle data = load_data(cfg);
  const std::string task = ckpt.meta.value("task", "");
  const std::string method = ckpt.meta.value("method", "");
  std::map<std::string, Scalar> out;

  if (task == "classification") {
    const auto& records =
        split == "train" ? data.classification.train : data.classification.dev;
    if (method == "dpt") {
      dpt::RunClasses rc;
      rc.ordered.names = ckpt.meta.at("template_classes").get<std::vector<std::string>>();
      rc.canonical = ckpt.meta.at("template_class_canonical").get<std::vector<int>>();
      dpt::TemplateConfig tc;
      tc.scaffold = ckpt.meta.at("template").at("scaffold").get<std::string>();
      tc.separator = ckpt.meta.at("template").at("separator").get<std::string>();
      tc.terminator = ckpt.meta.at("template").at("terminator").get<std::string>();
      const auto mode = mode_from_string(ckpt.meta.at("mode").get<std::string>());
      out["accuracy"] =
          dpt::classification_accuracy(ckpt.model, ckpt.vocab, rc, records, mode, tc);
    } else if (method == "ft") {
      out["accuracy"] = ft::classification_accuracy(ckpt.model, ckpt.vocab, records);
    } else {
      throw ConfigError("checkpoint has no tuned task head (method '" + method + "')");
    }
  } else if (task == "qa") {
    const auto& records = split == "train" ? data.qa.train : data.qa.dev;
    if (method == "dpt") {
      const Scalar threshold = ckpt.meta.value("qa_threshold", cfg.qa_threshold);
      const dpt::QAMetrics qm = dpt::qa_metrics(ckpt.model, ckpt.vocab, records, threshold);
      out["em"] = qm.em;
      out["f1"] = qm.f1;
    } else if (method == "ft") {
      const dpt::QAMetrics qm = ft::qa_metrics(ckpt.model, ckpt.vocab, records);
      out["em"] = qm.em;
      out["f1"] = qm.f1;
    } else {
      throw ConfigError("checkpoint has no tuned task head (method '" + method + "')");
    }
  } else {
    throw ConfigError("checkpoint metadata lacks a tunable task (task '" + task + "')");
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const RunContext ctx = prepare_run(cfg);

  ExperimentReport rep;
  rep.config_hash = config_hash(cfg);
  rep.task = to_string(cfg.task);
  rep.method = to_string(cfg.method);
  rep.mode = to_string(cfg.mode);
  rep.fraction = cfg.fraction;
  for (std::uint64_t seed : cfg.seeds) rep.trials.push_back(run_trial(cfg, ctx, seed));

  std::map<std::string, std::vector<Scalar>> by_metric;
  for (const TrialRecord& t : rep.trials)
    if (t.ok)
      for (const auto& [name, value] : t.metrics) by_metric[name].push_back(value);
  for (const auto& [name, values] : by_metric) rep.aggregate[name] = aggregate_values(values);

  rep.wall_clock_seconds =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json trials = nlohmann::json::array();
  for (const TrialRecord& t : report.trials) {
    trials.push_back({{"seed", t.seed},
                      {"ok", t.ok},
                      {"reason", t.reason},
                      {"metrics", t.metrics}});
  }
  nlohmann::json aggregate = nlohmann::json::object();
  for (const auto& [name, s] : report.aggregate) {
    aggregate[name] = {{"mean", s.mean},
                       {"stddev", s.stddev},
                       {"min", s.min},
                       {"max", s.max},
                       {"best3_mean", s.best3_mean}};
  }
  return {{"config_hash", report.config_hash},
          {"task", report.task},
          {"method", report.method},
          {"mode", report.mode},
          {"fraction", report.fraction},
          {"trials", trials},
          {"aggregate", aggregate},
          {"wall_clock_seconds", report.wall_clock_seconds}};
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport rep;
  try {
    rep.config_hash = j.at("config_hash").get<std::string>();
    rep.task = j.at("task").get<std::string>();
    rep.method = j.at("method").get<std::string>();
    rep.mode = j.at("mode").get<std::string>();
    rep.fraction = j.at("fraction").get<Scalar>();
    for (const auto& t : j.at("trials")) {
      TrialRecord rec;
      rec.seed = t.at("seed").get<std::uint64_t>();
      rec.ok = t.at("ok").get<bool>();
      rec.reason = t.at("reason").get<std::string>();
      rec.metrics = t.at("metrics").get<std::map<std::string, Scalar>>();
      rep.trials.push_back(std::move(rec));
    }
    for (const auto& item : j.at("aggregate").items()) {
      AggregateStats s;
      s.mean = item.value().at("mean").get<Scalar>();
      s.stddev = item.value().at("stddev").get<Scalar>();
      s.min = item.value().at("min").get<Scalar>();
      s.max = item.value().at("max").get<Scalar>();
      s.best3_mean = item.value().at("best3_mean").get<Scalar>();
      rep.aggregate[item.key()] = s;
    }
    rep.wall_clock_seconds = j.at("wall_clock_seconds").get<Scalar>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return rep;
}

std::string report_to_csv(const ExperimentReport& report) {
  std::vector<const TrialRecord*> sorted;
  for (const TrialRecord& t : report.trials)
    if (t.ok) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const TrialRecord* a, const TrialRecord* b) { return a->seed < b->seed; });
  std::string out = "seed,metric,value\n";
  for (const TrialRecord* t : sorted)
    for (const auto& [name, value] : t->metrics)
      out += std::to_string(t->seed) + "," + name + "," + format_double(value) + "\n";
  return out;
}

Comparison compare(const ExperimentReport& a, const ExperimentReport& b) {
  if (a.task != b.task) throw ContractError("compare: task mismatch");
  std::vector<std::uint64_t> sa, sb;
  for (const auto& t : a.trials) sa.push_back(t.seed);
  for (const auto& t : b.trials) sb.push_back(t.seed);
  if (sa != sb) throw ContractError("compare: seed lists differ");

  Comparison cmp;
  for (const auto& [name, stats] : a.aggregate) {
    const auto it = b.aggregate.find(name);
    if (it == b.aggregate.end()) continue;
    cmp.delta_mean[name] = stats.mean - it->second.mean;
    cmp.delta_stddev[name] = stats.stddev - it->second.stddev;
    std::vector<Scalar> deltas;
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
      const TrialRecord& ta = a.trials[i];
      const TrialRecord& tb = b.trials[i];
      if (ta.ok && tb.ok && ta.metrics.count(name) && tb.metrics.count(name))
        deltas.push_back(ta.metrics.at(name) - tb.metrics.at(name));
    }
    cmp.per_seed_delta[name] = std::move(deltas);
  }
  return cmp;
}

}  // namespace dptbench::harness
