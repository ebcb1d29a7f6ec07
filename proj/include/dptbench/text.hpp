#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dptbench/errors.hpp"
#include "dptbench/rng.hpp"
#include "dptbench/span_set.hpp"

namespace dptbench::text {

// Vocabulary ids; framing specials occupy fixed slots 0..4.
using TokenSequence = std::vector<int>;

class Vocab {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;
  static const std::array<std::string, kNumSpecials>& specials();

  Vocab();

  // Tokens counted across the corpus, kept when count >= min_count, ordered
  // by (descending count, lexicographic) after the specials. Line order of
  // the corpus does not affect the result.
  static Vocab build(std::span<const std::string> corpus, int min_count = 1);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(std::string_view token) const;
  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;

  // Appends a token if absent; returns its id either way.
  int add_token(const std::string& token);

  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Lowercases ASCII, splits punctuation into single-character tokens, and
// passes special-token literals ([CLS] etc., case-insensitive) through
// unchanged. Deterministic; whitespace never produces tokens.
std::vector<std::string> split_words(std::string_view text);

TokenSequence tokenize(std::string_view text, const Vocab& vocab);

// Inverse up to unknown words: ids joined with single spaces.
std::string detokenize(std::span<const int> ids, const Vocab& vocab);

// Splits `words` out of free text and appends any that the vocab lacks.
void inject_text_tokens(Vocab& vocab, std::string_view text);

// Ordered class names; order is fixed once chosen for a run.
struct ClassSet {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
  void validate() const;
};

enum class Split { kTrain, kDev };

struct ExampleRecord {
  std::string text;
  int gold = 0;
  Split split = Split::kTrain;
};

struct QARecord {
  std::string question;
  std::string paragraph;
  SpanSet answer_spans;  // over split_words(paragraph) indices
};

struct ClsDataset {
  ClassSet classes;
  std::vector<ExampleRecord> train;
  std::vector<ExampleRecord> dev;
};

struct QADataset {
  std::vector<QARecord> train;
  std::vector<QARecord> dev;
};

// Class-conditional synthetic text. Class k owns content tokens c{k}w0..,
// all classes share filler tokens f0..; the class name of k is "c{k}w0".
// Every draw is reproducible from the seed.
struct SynthOptions {
  int content_tokens_per_class = 20;
  int filler_tokens = 10;
  Scalar content_prob = 0.8;       // chance a position draws a content token
  Scalar cross_class_prob = 0.08;  // content draws taken from a random class
  int min_sentence_len = 8;
  int max_sentence_len = 14;
  int qa_sentences_per_paragraph = 3;
  int qa_question_tokens = 3;
};

struct SynthCorpus {
  std::vector<std::string> unlabeled;
  ClsDataset classification;
  QADataset qa;
};

SynthCorpus synth_corpus(int n_classes, int n_per_class, std::uint64_t seed,
                         const SynthOptions& options = {});

enum class SubsampleMode { kStratified, kUniform };

// Training-split subsample; evaluation split is returned untouched.
// Stratified keeps round(fraction * |class|) per class, at least 1.
ClsDataset subsample(const ClsDataset& data, Scalar fraction, std::uint64_t seed,
                     SubsampleMode mode = SubsampleMode::kStratified);
QADataset subsample(const QADataset& data, Scalar fraction, std::uint64_t seed);

// `label<TAB>text`, one example per line, UTF-8. Classes are the sorted
// union of labels seen in both files.
ClsDataset load_classification_tsv(const std::filesystem::path& train_file,
                                   const std::filesystem::path& dev_file);

// JSON array of {question, paragraph, answer_spans: [[start,end], ...]},
// token indices 0-based inclusive over the tokenized paragraph.
QADataset load_qa_json(const std::filesystem::path& train_file,
                       const std::filesystem::path& dev_file);

}  // namespace dptbench::text
