#pragma once

#include <span>
#include <string_view>

#include "dptbench/adam.hpp"
#include "dptbench/dpt.hpp"
#include "dptbench/encoder.hpp"
#include "dptbench/text.hpp"

namespace dptbench::ft {

// Softmax class probabilities from the fresh CLS head applied to h_[CLS] of
// `[CLS] x [SEP]`. No class tokens enter the input.
std::vector<Scalar> classify_probs(const nn::ModelParams& model, const text::Vocab& vocab,
                                   std::string_view input_text);

// sigma(head . h_t) per paragraph token of `[CLS] q [SEP] p [SEP]`; a token
// is predicted as answer when its probability is strictly above 0.5.
std::vector<Scalar> qa_label_probs(const nn::ModelParams& model,
                                   std::span<const int> question,
                                   std::span<const int> paragraph);

SpanSet qa_predict_spans(std::span<const Scalar> probs);

struct TuneConfig {
  int epochs = 4;
  int batch_size = 8;
  nn::AdamConfig adam{};
};

struct TuneResult {
  nn::ModelParams model;
  std::vector<dpt::EpochMetrics> epochs;
  Scalar final_metric = 0.0;
};

// Vanilla fine-tuning: fresh task head (init std 0.02, seed-derived), DLM
// head never read or trained.
TuneResult tune_ft(const text::ClsDataset& data, const text::Vocab& vocab,
                   const nn::ModelParams& pretrained, const TuneConfig& cfg,
                   std::uint64_t seed);

TuneResult tune_ft_qa(const text::QADataset& data, const text::Vocab& vocab,
                      const nn::ModelParams& pretrained, const TuneConfig& cfg,
                      std::uint64_t seed);

Scalar classification_accuracy(const nn::ModelParams& model, const text::Vocab& vocab,
                               std::span<const text::ExampleRecord> records);

dpt::QAMetrics qa_metrics(const nn::ModelParams& model, const text::Vocab& vocab,
                          std::span<const text::QARecord> records);

}  // namespace dptbench::ft
