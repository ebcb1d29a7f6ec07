#pragma once

#include <span>
#include <string_view>

#include "dptbench/adam.hpp"
#include "dptbench/encoder.hpp"
#include "dptbench/span_set.hpp"
#include "dptbench/text.hpp"

namespace dptbench::dpt {

// Inverted scoring s = 1 - sigma(logit) matches pretraining semantics, where
// original (correct) tokens get small inner products. Direct s = sigma(logit)
// is the ablation mode.
enum class ScoreMode { kInverted, kDirect };

struct TemplateConfig {
  std::string scaffold = "class :";
  std::string separator = ",";
  std::string terminator = ".";
};

// Rendered template `[CLS] x class : c1 , c2 , ... , cn . [SEP]` plus the
// position of each class's first token, in class order.
struct TemplatedExample {
  text::TokenSequence ids;
  std::vector<Index> class_token_positions;
  bool truncated = false;  // input text was right-truncated to fit max_len
};

// Renders the template. The input text loses tokens from its right end when
// the sequence would exceed max_len; the scaffold and class tokens always
// survive, and a template that cannot fit even with empty text is an error.
TemplatedExample build_template(std::string_view input_text, const text::ClassSet& classes,
                                const text::Vocab& vocab, Index max_len,
                                const TemplateConfig& tc = {});

struct ClassScores {
  std::vector<Scalar> values;  // one per class, each in (0,1)
  ScoreMode mode = ScoreMode::kInverted;
};

ClassScores class_scores(const nn::ModelParams& model, const TemplatedExample& te,
                         ScoreMode mode);

// Sum over all classes of bce(s_i, y_i) with y_gold = 1, others 0.
Scalar dpt_loss(const ClassScores& scores, int gold);

// argmax of the scores; ties break to the lowest index.
int predict_class(const ClassScores& scores);

// sigma(dlm_logit(h_t)) for every paragraph token of `[CLS] q [SEP] p [SEP]`.
// Question and special positions are excluded from the output. Over-length
// input is an error; QA never truncates silently.
std::vector<Scalar> qa_token_scores(const nn::ModelParams& model,
                                    std::span<const int> question,
                                    std::span<const int> paragraph);

// Answer positions are {t : score_t < threshold}; spans are their maximal
// contiguous runs. An empty SpanSet is a valid result.
SpanSet extract_spans(std::span<const Scalar> scores, Scalar threshold);

// Fixed class order for one run: a seed-derived permutation of the canonical
// classes (the paper observes that a random order works well).
struct RunClasses {
  text::ClassSet ordered;      // template order
  std::vector<int> canonical;  // template slot -> canonical class index
  std::vector<int> slot_of;    // canonical class index -> template slot
};

RunClasses permute_classes(const text::ClassSet& canonical, std::uint64_t seed,
                           bool permute = true);

struct TuneConfig {
  int epochs = 4;
  int batch_size = 8;
  nn::AdamConfig adam{};
  ScoreMode mode = ScoreMode::kInverted;
  TemplateConfig template_config{};
  Scalar qa_threshold = 0.6;
  bool permute_class_order = true;
};

struct EpochMetrics {
  int epoch = 0;
  Scalar train_loss = 0.0;
  Scalar eval_metric = 0.0;  // accuracy (classification) or F1 (QA)
};

struct TuneResult {
  nn::ModelParams model;
  RunClasses classes;  // classification runs only
  std::vector<EpochMetrics> epochs;
  Scalar final_metric = 0.0;
};

// Prompt tuning from a pretrained checkpoint; the DLM head is reused, never
// reinitialized, and is tuned together with the encoder.
TuneResult tune_dpt(const text::ClsDataset& data, const text::Vocab& vocab,
                    const nn::ModelParams& pretrained, const TuneConfig& cfg,
                    std::uint64_t seed);

// QA variant: per-token bce over paragraph tokens, answer tokens labeled 0
// ("original") under the sigma convention.
TuneResult tune_dpt_qa(const text::QADataset& data, const text::Vocab& vocab,
                       const nn::ModelParams& pretrained, const TuneConfig& cfg,
                       std::uint64_t seed);

Scalar classification_accuracy(const nn::ModelParams& model, const text::Vocab& vocab,
                               const RunClasses& classes,
                               std::span<const text::ExampleRecord> records,
                               ScoreMode mode, const TemplateConfig& tc = {});

struct QAMetrics {
  Scalar em = 0.0;
  Scalar f1 = 0.0;
};

QAMetrics qa_metrics(const nn::ModelParams& model, const text::Vocab& vocab,
                     std::span<const text::QARecord> records, Scalar threshold);

}  // namespace dptbench::dpt
