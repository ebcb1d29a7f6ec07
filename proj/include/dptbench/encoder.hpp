#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dptbench/graph.hpp"
#include "dptbench/rng.hpp"

namespace dptbench::nn {

using ad::Tensor;

struct EncoderConfig {
  Index vocab_size = 0;
  Index hidden_dim = 64;
  Index layers = 2;
  Index heads = 4;
  Index ffn_dim = 128;
  Index max_len = 128;
  Scalar dropout = 0.0;
  bool dlm_bias = true;  // Eq-style discriminator logit carries a scalar bias

  Index head_dim() const { return hidden_dim / heads; }
  void validate() const;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct EncoderParams {
  EncoderConfig config;
  Tensor token_embedding;     // (vocab, d)
  Tensor position_embedding;  // (max_len, d)
  std::vector<LayerParams> layers;
  Tensor final_gain, final_bias;  // (1, d)
};

// Binary discrimination head learned during pretraining and reused by prompt
// tuning; logit = weight . h (+ bias when enabled).
struct DlmHead {
  Tensor weight;  // (d, 1)
  Tensor bias;    // (1, 1)
  bool use_bias = true;
};

// Fresh classification head over h_[CLS]; never pretrained.
struct ClsHead {
  Tensor weight;  // (d, n)
  Tensor bias;    // (1, n)
};

// Fresh binary token-labeling head for sequence-labeling QA.
struct TokenLabelHead {
  Tensor weight;  // (d, 1)
  Tensor bias;    // (1, 1)
};

struct ModelParams {
  EncoderParams encoder;
  std::optional<DlmHead> dlm;
  std::optional<ClsHead> cls;
  std::optional<TokenLabelHead> token_label;
};

// Truncated normal (std 0.02, clipped at 2 sigma) for weights and embeddings,
// ones for normalization gains, zeros for biases. Each component draws from
// its own seed-derived stream, so adding a head never shifts encoder draws.
EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);
DlmHead init_dlm_head(const EncoderConfig& config, std::uint64_t seed);
ClsHead init_cls_head(Index hidden_dim, Index n_classes, std::uint64_t seed);
TokenLabelHead init_token_label_head(Index hidden_dim, std::uint64_t seed);

// Encoder plus DLM head, the pretraining starting point.
ModelParams init_params(const EncoderConfig& config, std::uint64_t seed);

template <class EP, class F>
void visit_encoder(EP& p, F&& fn) {
  fn("token_embedding", p.token_embedding);
  fn("position_embedding", p.position_embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    fn(prefix + "ln1_gain", layer.ln1_gain);
    fn(prefix + "ln1_bias", layer.ln1_bias);
    fn(prefix + "wq", layer.wq);
    fn(prefix + "bq", layer.bq);
    fn(prefix + "wk", layer.wk);
    fn(prefix + "bk", layer.bk);
    fn(prefix + "wv", layer.wv);
    fn(prefix + "bv", layer.bv);
    fn(prefix + "wo", layer.wo);
    fn(prefix + "bo", layer.bo);
    fn(prefix + "ln2_gain", layer.ln2_gain);
    fn(prefix + "ln2_bias", layer.ln2_bias);
    fn(prefix + "ffn_w1", layer.ffn_w1);
    fn(prefix + "ffn_b1", layer.ffn_b1);
    fn(prefix + "ffn_w2", layer.ffn_w2);
    fn(prefix + "ffn_b2", layer.ffn_b2);
  }
  fn("final_gain", p.final_gain);
  fn("final_bias", p.final_bias);
}

template <class MP, class F>
void visit_model(MP& m, F&& fn) {
  visit_encoder(m.encoder, fn);
  if (m.dlm) {
    fn("dlm.weight", m.dlm->weight);
    fn("dlm.bias", m.dlm->bias);
  }
  if (m.cls) {
    fn("cls.weight", m.cls->weight);
    fn("cls.bias", m.cls->bias);
  }
  if (m.token_label) {
    fn("token_label.weight", m.token_label->weight);
    fn("token_label.bias", m.token_label->bias);
  }
}

struct TrainSelection {
  bool dlm = false;
  bool cls = false;
  bool token_label = false;
};

// Encoder tensors plus the selected heads, in visit order.
std::vector<Tensor*> trainable_tensors(ModelParams& m, const TrainSelection& sel);

struct EncodeOptions {
  bool train = false;          // enables dropout when config.dropout > 0
  RngStream* rng = nullptr;    // required when dropout is active
  std::vector<ad::Value>* attention = nullptr;  // per layer*head softmax rows
};

struct Encoded {
  ad::Value hidden;  // (m, d), one row per input position
  bool truncated = false;
};

// Pre-norm transformer encoder over the full input sequence (the caller
// frames it with [CLS]/[SEP]). Inputs longer than max_len keep their first
// max_len tokens and set `truncated`.
Encoded encode(ad::Graph& g, const EncoderParams& params, std::span<const int> ids,
               const EncodeOptions& options = {});

// Evaluation-mode hidden states (dropout off), one row per position.
Mat encode_eval(const EncoderParams& params, std::span<const int> ids);

Scalar dlm_logit(const DlmHead& head, const Vec& h);

// (m, 1) discriminator logits for every row of `hidden`.
ad::Value dlm_logits(ad::Graph& g, const DlmHead& head, ad::Value hidden);

}  // namespace dptbench::nn
