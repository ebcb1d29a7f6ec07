#include "dptbench/encoder.hpp"

#include <cmath>

namespace dptbench::nn {

namespace {

constexpr Scalar kInitStd = 0.02;

Tensor trunc_normal(Index rows, Index cols, RngStream& rng) {
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.truncated_normal(kInitStd);
  return Tensor(std::move(m));
}

Tensor zeros(Index rows, Index cols) { return Tensor::zeros(rows, cols); }
Tensor ones(Index rows, Index cols) { return Tensor(Mat::Ones(rows, cols)); }

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= 0) throw ContractError("EncoderConfig: vocab_size must be positive");
  if (hidden_dim <= 0 || layers <= 0 || heads <= 0 || ffn_dim <= 0 || max_len <= 0)
    throw ContractError("EncoderConfig: dimensions must be positive");
  if (hidden_dim % heads != 0)
    throw ContractError("EncoderConfig: hidden_dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ContractError("EncoderConfig: dropout must be in [0, 1)");
}

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  RngStream rng(mix_seed(seed, 100));
  EncoderParams p;
  p.config = config;
  const Index d = config.hidden_dim;
  p.token_embedding = trunc_normal(config.vocab_size, d, rng);
  p.position_embedding = trunc_normal(config.max_len, d, rng);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (LayerParams& l : p.layers) {
    l.ln1_gain = ones(1, d);
    l.ln1_bias = zeros(1, d);
    l.wq = trunc_normal(d, d, rng);
    l.bq = zeros(1, d);
    l.wk = trunc_normal(d, d, rng);
    l.bk = zeros(1, d);
    l.wv = trunc_normal(d, d, rng);
    l.bv = zeros(1, d);
    l.wo = trunc_normal(d, d, rng);
    l.bo = zeros(1, d);
    l.ln2_gain = ones(1, d);
    l.ln2_bias = zeros(1, d);
    l.ffn_w1 = trunc_normal(d, config.ffn_dim, rng);
    l.ffn_b1 = zeros(1, config.ffn_dim);
    l.ffn_w2 = trunc_normal(config.ffn_dim, d, rng);
    l.ffn_b2 = zeros(1, d);
  }
  p.final_gain = ones(1, d);
  p.final_bias = zeros(1, d);
  return p;
}

DlmHead init_dlm_head(const EncoderConfig& config, std::uint64_t seed) {
  RngStream rng(mix_seed(seed, 101));
  DlmHead h;
  h.weight = trunc_normal(config.hidden_dim, 1, rng);
  h.bias = zeros(1, 1);
  h.use_bias = config.dlm_bias;
  return h;
}

ClsHead init_cls_head(Index hidden_dim, Index n_classes, std::uint64_t seed) {
  RngStream rng(mix_seed(seed, 102));
  ClsHead h;
  h.weight = trunc_normal(hidden_dim, n_classes, rng);
  h.bias = zeros(1, n_classes);
  return h;
}

TokenLabelHead init_token_label_head(Index hidden_dim, std::uint64_t seed) {
  RngStream rng(mix_seed(seed, 103));
  TokenLabelHead h;
  h.weight = trunc_normal(hidden_dim, 1, rng);
  h.bias = zeros(1, 1);
  return h;
}

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  ModelParams m;
  m.encoder = init_encoder(config, seed);
  m.dlm = init_dlm_head(config, seed);
  return m;
}

std::vector<Tensor*> trainable_tensors(ModelParams& m, const TrainSelection& sel) {
  std::vector<Tensor*> out;
  visit_encoder(m.encoder, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  if (sel.dlm) {
    if (!m.dlm) throw ContractError("trainable_tensors: DLM head absent");
    out.push_back(&m.dlm->weight);
    if (m.dlm->use_bias) out.push_back(&m.dlm->bias);
  }
  if (sel.cls) {
    if (!m.cls) throw ContractError("trainable_tensors: CLS head absent");
    out.push_back(&m.cls->weight);
    out.push_back(&m.cls->bias);
  }
  if (sel.token_label) {
    if (!m.token_label) throw ContractError("trainable_tensors: token-label head absent");
    out.push_back(&m.token_label->weight);
    out.push_back(&m.token_label->bias);
  }
  return out;
}

namespace {

ad::Value apply_dropout(ad::Graph& g, ad::Value x, Scalar rate, RngStream& rng) {
  Mat mask(x.rows(), x.cols());
  const Scalar keep_scale = 1.0 / (1.0 - rate);
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c)
      mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, g.constant(Tensor(std::move(mask))));
}

}  // namespace

Encoded encode(ad::Graph& g, const EncoderParams& params, std::span<const int> ids,
               const EncodeOptions& options) {
  const EncoderConfig& cfg = params.config;
  Encoded result;

  std::size_t len = ids.size();
  if (static_cast<Index>(len) > cfg.max_len) {
    len = static_cast<std::size_t>(cfg.max_len);
    result.truncated = true;
  }
  std::vector<Index> tok_idx(len), pos_idx(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (ids[i] < 0 || ids[i] >= cfg.vocab_size)
      throw ContractError("encode: token id out of vocab range");
    tok_idx[i] = ids[i];
    pos_idx[i] = static_cast<Index>(i);
  }

  const bool use_dropout = options.train && cfg.dropout > 0.0;
  if (use_dropout && options.rng == nullptr)
    throw ContractError("encode: dropout requires an RNG stream");

  ad::Value x = add(gather_rows(g.param(params.token_embedding), tok_idx),
                    gather_rows(g.param(params.position_embedding), pos_idx));
  if (use_dropout) x = apply_dropout(g, x, cfg.dropout, *options.rng);

  const Index dh = cfg.head_dim();
  const Scalar attn_scale = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  for (const LayerParams& l : params.layers) {
    ad::Value ln1 = layer_norm(x, g.param(l.ln1_gain), g.param(l.ln1_bias));
    ad::Value q = add_row(matmul(ln1, g.param(l.wq)), g.param(l.bq));
    ad::Value k = add_row(matmul(ln1, g.param(l.wk)), g.param(l.bk));
    ad::Value v = add_row(matmul(ln1, g.param(l.wv)), g.param(l.bv));

    std::vector<ad::Value> head_ctx;
    head_ctx.reserve(static_cast<std::size_t>(cfg.heads));
    for (Index h = 0; h < cfg.heads; ++h) {
      ad::Value qh = col_block(q, h * dh, dh);
      ad::Value kh = col_block(k, h * dh, dh);
      ad::Value vh = col_block(v, h * dh, dh);
      ad::Value probs = softmax_rows(affine(matmul_nt(qh, kh), attn_scale, 0.0));
      if (options.attention) options.attention->push_back(probs);
      head_ctx.push_back(matmul(probs, vh));
    }
    ad::Value attn = add_row(matmul(concat_cols(head_ctx), g.param(l.wo)), g.param(l.bo));
    if (use_dropout) attn = apply_dropout(g, attn, cfg.dropout, *options.rng);
    x = add(x, attn);

    ad::Value ln2 = layer_norm(x, g.param(l.ln2_gain), g.param(l.ln2_bias));
    ad::Value hff = gelu(add_row(matmul(ln2, g.param(l.ffn_w1)), g.param(l.ffn_b1)));
    ad::Value ff = add_row(matmul(hff, g.param(l.ffn_w2)), g.param(l.ffn_b2));
    if (use_dropout) ff = apply_dropout(g, ff, cfg.dropout, *options.rng);
    x = add(x, ff);
  }
  result.hidden = layer_norm(x, g.param(params.final_gain), g.param(params.final_bias));
  return result;
}

Mat encode_eval(const EncoderParams& params, std::span<const int> ids) {
  ad::Graph g;
  return encode(g, params, ids).hidden.tensor().mat();
}

Scalar dlm_logit(const DlmHead& head, const Vec& h) {
  if (h.size() != head.weight.rows())
    throw ContractError("dlm_logit: hidden dimension mismatch");
  Scalar logit = head.weight.mat().col(0).dot(h);
  if (head.use_bias) logit += head.bias.mat()(0, 0);
  return logit;
}

ad::Value dlm_logits(ad::Graph& g, const DlmHead& head, ad::Value hidden) {
  if (hidden.cols() != head.weight.rows())
    throw ContractError("dlm_logits: hidden dimension mismatch");
  ad::Value logits = matmul(hidden, g.param(head.weight));
  if (head.use_bias) logits = add_row(logits, g.param(head.bias));
  return logits;
}

}  // namespace dptbench::nn
