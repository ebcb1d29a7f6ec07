#pragma once

#include <iosfwd>
#include <span>

#include "dptbench/adam.hpp"
#include "dptbench/encoder.hpp"
#include "dptbench/text.hpp"

namespace dptbench::rtd {

// A corrupted sequence with per-token {original, replaced} labels. Framing
// specials are never replaced and never enter the loss.
struct CorruptedSequence {
  text::TokenSequence ids;
  std::vector<std::uint8_t> replaced;  // 1 = replaced, aligned with ids
  std::vector<Index> eligible;         // non-special positions, loss mask
};

class TokenSampler {
 public:
  virtual ~TokenSampler() = default;
  virtual int sample(RngStream& rng) const = 0;
};

// Draws token ids proportionally to corpus frequency; specials have zero mass.
class UnigramSampler : public TokenSampler {
 public:
  explicit UnigramSampler(std::vector<Scalar> probs);
  static UnigramSampler from_corpus(std::span<const text::TokenSequence> corpus,
                                    int vocab_size);
  int sample(RngStream& rng) const override;
  const std::vector<Scalar>& probabilities() const { return probs_; }

 private:
  std::vector<Scalar> probs_;
  std::vector<Scalar> cdf_;
};

// Independently replaces each non-special position with probability
// replace_prob by a sampler draw. A draw equal to the original token keeps
// its "original" label (replacement is semantic, not positional). Stream
// discipline, so a reference re-run can reproduce the exact position set:
// one uniform per eligible position decides replacement, then the sampler
// draws only when replacing; the stream is mt19937_64(seed).
CorruptedSequence corrupt(std::span<const int> seq, Scalar replace_prob,
                          const TokenSampler& sampler, std::uint64_t seed);

// Mean over eligible positions of bce(sigma(dlm_logit(h_t)), label),
// replaced = 1. Errors when nothing is eligible.
ad::Value rtd_loss(ad::Graph& g, const nn::EncoderParams& encoder,
                   const nn::DlmHead& head, const CorruptedSequence& seq);

Scalar rtd_loss_eval(const nn::ModelParams& model, const CorruptedSequence& seq);

struct PretrainConfig {
  int steps = 1500;
  int batch_size = 8;
  Scalar replace_prob = 0.15;
  nn::AdamConfig adam{};  // lr 1e-3; tiny models want larger steps than full-size ones
  int log_every = 1;
};

// RTD pretraining over unframed token sequences (framed internally with
// [CLS]/[SEP]). Returns encoder + DLM head. Writes one JSON line per
// logged step {"loss": .., "seed": .., "step": ..} when `log` is given.
// Aborts with TrainingDiverged if the loss goes non-finite.
nn::ModelParams pretrain(std::span<const text::TokenSequence> corpus,
                         const nn::EncoderConfig& config, const PretrainConfig& pcfg,
                         std::uint64_t seed, std::ostream* log = nullptr);

// Frames a sentence as [CLS] tokens [SEP].
text::TokenSequence frame(std::span<const int> tokens);

// Discriminator accuracy over eligible positions, predicting replaced when
// sigma(logit) > 0.5.
Scalar rtd_accuracy(const nn::ModelParams& model,
                    std::span<const CorruptedSequence> sequences);

// Accuracy of always answering the more frequent label; the chance baseline.
Scalar majority_label_accuracy(std::span<const CorruptedSequence> sequences);

}  // namespace dptbench::rtd
