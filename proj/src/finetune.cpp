#include "dptbench/finetune.hpp"

#include <algorithm>
#include <cmath>

#include "dptbench/metrics.hpp"

namespace dptbench::ft {

namespace {

text::TokenSequence framed_text(std::string_view input_text, const text::Vocab& vocab) {
  text::TokenSequence ids;
  ids.push_back(text::Vocab::kCls);
  const text::TokenSequence x = text::tokenize(input_text, vocab);
  ids.insert(ids.end(), x.begin(), x.end());
  ids.push_back(text::Vocab::kSep);
  return ids;
}

text::TokenSequence qa_sequence(std::span<const int> question, std::span<const int> paragraph) {
  text::TokenSequence ids;
  ids.reserve(question.size() + paragraph.size() + 3);
  ids.push_back(text::Vocab::kCls);
  ids.insert(ids.end(), question.begin(), question.end());
  ids.push_back(text::Vocab::kSep);
  ids.insert(ids.end(), paragraph.begin(), paragraph.end());
  ids.push_back(text::Vocab::kSep);
  return ids;
}

// (1, n) softmax over the CLS head applied to h_[CLS].
ad::Value cls_probs_node(ad::Graph& g, const nn::ModelParams& model,
                         const text::TokenSequence& ids) {
  if (!model.cls) throw ContractError("ft_classify: model has no CLS head");
  if (model.cls->weight.rows() != model.encoder.config.hidden_dim)
    throw ContractError("ft_classify: CLS head dimension mismatch");
  const nn::Encoded enc = nn::encode(g, model.encoder, ids);
  const ad::Value cls_row = gather_rows(enc.hidden, {0});
  const ad::Value logits =
      add_row(matmul(cls_row, g.param(model.cls->weight)), g.param(model.cls->bias));
  return softmax_rows(logits);
}

ad::Value token_label_sigmas(ad::Graph& g, const nn::ModelParams& model,
                             const text::TokenSequence& ids, Index paragraph_start,
                             Index paragraph_len) {
  if (!model.token_label) throw ContractError("ft_qa_label: model has no token-label head");
  const nn::Encoded enc = nn::encode(g, model.encoder, ids);
  std::vector<Index> rows(static_cast<std::size_t>(paragraph_len));
  for (Index i = 0; i < paragraph_len; ++i)
    rows[static_cast<std::size_t>(i)] = paragraph_start + i;
  const ad::Value selected = gather_rows(enc.hidden, rows);
  const ad::Value logits = add_row(matmul(selected, g.param(model.token_label->weight)),
                                   g.param(model.token_label->bias));
  return sigmoid(logits);
}

}  // namespace

std::vector<Scalar> classify_probs(const nn::ModelParams& model, const text::Vocab& vocab,
                                   std::string_view input_text) {
  ad::Graph g;
  const ad::Value probs = cls_probs_node(g, model, framed_text(input_text, vocab));
  std::vector<Scalar> out(static_cast<std::size_t>(probs.cols()));
  for (Index i = 0; i < probs.cols(); ++i)
    out[static_cast<std::size_t>(i)] = probs.tensor().mat()(0, i);
  return out;
}

std::vector<Scalar> qa_label_probs(const nn::ModelParams& model,
                                   std::span<const int> question,
                                   std::span<const int> paragraph) {
  const text::TokenSequence ids = qa_sequence(question, paragraph);
  if (static_cast<Index>(ids.size()) > model.encoder.config.max_len)
    throw ContractError("ft_qa_label: input exceeds max length");
  ad::Graph g;
  const ad::Value sig =
      token_label_sigmas(g, model, ids, static_cast<Index>(question.size()) + 2,
                         static_cast<Index>(paragraph.size()));
  std::vector<Scalar> out(paragraph.size());
  for (std::size_t i = 0; i < paragraph.size(); ++i)
    out[i] = sig.tensor().mat()(static_cast<Index>(i), 0);
  return out;
}

SpanSet qa_predict_spans(std::span<const Scalar> probs) {
  std::vector<bool> mask(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) mask[i] = probs[i] > 0.5;
  return SpanSet::from_mask(mask);
}

namespace {

struct Batcher {
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  RngStream rng;

  Batcher(std::size_t n, std::uint64_t seed) : rng(seed) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    cursor = n;
  }

  std::size_t next() {
    if (cursor >= order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    return order[cursor++];
  }
};

}  // namespace

TuneResult tune_ft(const text::ClsDataset& data, const text::Vocab& vocab,
                   const nn::ModelParams& pretrained, const TuneConfig& cfg,
                   std::uint64_t seed) {
  if (data.train.empty()) throw ContractError("tune_ft: empty training set");
  TuneResult result;
  result.model = pretrained;
  result.model.cls = nn::init_cls_head(result.model.encoder.config.hidden_dim,
                                       data.classes.size(), mix_seed(seed, 401));

  struct Prepared {
    text::TokenSequence ids;
    Index gold;
  };
  std::vector<Prepared> train;
  train.reserve(data.train.size());
  for (const auto& rec : data.train)
    train.push_back({framed_text(rec.text, vocab), rec.gold});

  std::vector<ad::Tensor*> params = nn::trainable_tensors(result.model, {.cls = true});
  nn::Adam adam(params, cfg.adam);
  Batcher batcher(train.size(), mix_seed(seed, 403));

  const int steps_per_epoch = std::max<int>(
      1, static_cast<int>((train.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                          static_cast<std::size_t>(cfg.batch_size)));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Scalar epoch_loss = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      ad::Graph g;
      std::vector<ad::Value> losses;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const Prepared& item = train[batcher.next()];
        const ad::Value probs = cls_probs_node(g, result.model, item.ids);
        // Cross entropy: -log p_gold.
        losses.push_back(sum(affine(log_elem(col_block(probs, item.gold, 1)), -1.0, 0.0)));
      }
      const ad::Value loss = mean(concat_cols(losses));
      const Scalar loss_value = loss.tensor().value();
      if (!std::isfinite(loss_value))
        throw TrainingDiverged("tune_ft: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss_value;
      adam.step(parameter_gradients(g, loss, params));
    }
    dpt::EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<Scalar>(steps_per_epoch);
    em.eval_metric = classification_accuracy(result.model, vocab, data.dev);
    result.epochs.push_back(em);
    result.final_metric = em.eval_metric;
  }
  if (cfg.epochs == 0)
    result.final_metric = classification_accuracy(result.model, vocab, data.dev);
  return result;
}

TuneResult tune_ft_qa(const text::QADataset& data, const text::Vocab& vocab,
                      const nn::ModelParams& pretrained, const TuneConfig& cfg,
                      std::uint64_t seed) {
  if (data.train.empty()) throw ContractError("tune_ft_qa: empty training set");
  TuneResult result;
  result.model = pretrained;
  result.model.token_label =
      nn::init_token_label_head(result.model.encoder.config.hidden_dim, mix_seed(seed, 402));
  const Index max_len = result.model.encoder.config.max_len;

  struct Prepared {
    text::TokenSequence ids;
    Index paragraph_start;
    Index paragraph_len;
    SpanSet answers;
  };
  std::vector<Prepared> train;
  train.reserve(data.train.size());
  for (const auto& rec : data.train) {
    const text::TokenSequence q = text::tokenize(rec.question, vocab);
    const text::TokenSequence p = text::tokenize(rec.paragraph, vocab);
    Prepared item;
    item.ids = qa_sequence(q, p);
    if (static_cast<Index>(item.ids.size()) > max_len)
      throw ContractError("tune_ft_qa: record exceeds max length");
    item.paragraph_start = static_cast<Index>(q.size()) + 2;
    item.paragraph_len = static_cast<Index>(p.size());
    item.answers = rec.answer_spans;
    train.push_back(std::move(item));
  }

  std::vector<ad::Tensor*> params = nn::trainable_tensors(result.model, {.token_label = true});
  nn::Adam adam(params, cfg.adam);
  Batcher batcher(train.size(), mix_seed(seed, 403));

  const int steps_per_epoch = std::max<int>(
      1, static_cast<int>((train.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                          static_cast<std::size_t>(cfg.batch_size)));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Scalar epoch_loss = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      ad::Graph g;
      std::vector<ad::Value> losses;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const Prepared& item = train[batcher.next()];
        const ad::Value sig = token_label_sigmas(g, result.model, item.ids,
                                                 item.paragraph_start, item.paragraph_len);
        // Standard orientation: answer tokens are the positive class.
        Mat targets = Mat::Zero(item.paragraph_len, 1);
        for (Index t : item.answers.positions()) targets(t, 0) = 1.0;
        losses.push_back(mean(bce(sig, ad::Tensor(std::move(targets)))));
      }
      const ad::Value loss = mean(concat_cols(losses));
      const Scalar loss_value = loss.tensor().value();
      if (!std::isfinite(loss_value))
        throw TrainingDiverged("tune_ft_qa: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss_value;
      adam.step(parameter_gradients(g, loss, params));
    }
    const dpt::QAMetrics qm = qa_metrics(result.model, vocab, data.dev);
    dpt::EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<Scalar>(steps_per_epoch);
    em.eval_metric = qm.f1;
    result.epochs.push_back(em);
    result.final_metric = qm.f1;
  }
  if (cfg.epochs == 0)
    result.final_metric = qa_metrics(result.model, vocab, data.dev).f1;
  return result;
}

Scalar classification_accuracy(const nn::ModelParams& model, const text::Vocab& vocab,
                               std::span<const text::ExampleRecord> records) {
  std::vector<int> preds, golds;
  preds.reserve(records.size());
  golds.reserve(records.size());
  for (const text::ExampleRecord& rec : records) {
    const std::vector<Scalar> probs = classify_probs(model, vocab, rec.text);
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i)
      if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
    preds.push_back(best);
    golds.push_back(rec.gold);
  }
  return metrics::accuracy(preds, golds);
}

dpt::QAMetrics qa_metrics(const nn::ModelParams& model, const text::Vocab& vocab,
                          std::span<const text::QARecord> records) {
  if (records.empty()) throw ContractError("qa_metrics: no records");
  dpt::QAMetrics out;
  for (const text::QARecord& rec : records) {
    const text::TokenSequence q = text::tokenize(rec.question, vocab);
    const text::TokenSequence p = text::tokenize(rec.paragraph, vocab);
    const SpanSet pred = qa_predict_spans(qa_label_probs(model, q, p));
    out.em += static_cast<Scalar>(metrics::span_em(pred, rec.answer_spans));
    out.f1 += metrics::span_f1(pred, rec.answer_spans);
  }
  out.em /= static_cast<Scalar>(records.size());
  out.f1 /= static_cast<Scalar>(records.size());
  return out;
}

}  // namespace dptbench::ft
