#include "dptbench/dpt.hpp"

#include <algorithm>
#include <cmath>

#include "dptbench/metrics.hpp"

namespace dptbench::dpt {

TemplatedExample build_template(std::string_view input_text, const text::ClassSet& classes,
                                const text::Vocab& vocab, Index max_len,
                                const TemplateConfig& tc) {
  classes.validate();
  const text::TokenSequence scaffold = text::tokenize(tc.scaffold, vocab);
  const text::TokenSequence separator = text::tokenize(tc.separator, vocab);
  const text::TokenSequence terminator = text::tokenize(tc.terminator, vocab);

  std::vector<text::TokenSequence> class_tokens;
  for (const std::string& name : classes.names) {
    text::TokenSequence toks = text::tokenize(name, vocab);
    if (toks.empty()) throw ContractError("build_template: class name tokenizes to nothing");
    if (toks.front() == text::Vocab::kUnk)
      throw ContractError("build_template: class first token not in vocab: " + name);
    class_tokens.push_back(std::move(toks));
  }

  // Everything except the input text is mandatory and never truncated.
  Index fixed = 2 + static_cast<Index>(scaffold.size()) + static_cast<Index>(terminator.size());
  for (std::size_t i = 0; i < class_tokens.size(); ++i) {
    fixed += static_cast<Index>(class_tokens[i].size());
    if (i + 1 < class_tokens.size()) fixed += static_cast<Index>(separator.size());
  }
  if (fixed > max_len)
    throw ContractError("build_template: template scaffold exceeds max length");

  text::TokenSequence x = text::tokenize(input_text, vocab);
  TemplatedExample out;
  const Index room = max_len - fixed;
  if (static_cast<Index>(x.size()) > room) {
    x.resize(static_cast<std::size_t>(room));
    out.truncated = true;
  }

  out.ids.push_back(text::Vocab::kCls);
  out.ids.insert(out.ids.end(), x.begin(), x.end());
  out.ids.insert(out.ids.end(), scaffold.begin(), scaffold.end());
  for (std::size_t i = 0; i < class_tokens.size(); ++i) {
    out.class_token_positions.push_back(static_cast<Index>(out.ids.size()));
    out.ids.insert(out.ids.end(), class_tokens[i].begin(), class_tokens[i].end());
    if (i + 1 < class_tokens.size())
      out.ids.insert(out.ids.end(), separator.begin(), separator.end());
  }
  out.ids.insert(out.ids.end(), terminator.begin(), terminator.end());
  out.ids.push_back(text::Vocab::kSep);
  return out;
}

namespace {

// (n, 1) sigmoid outputs at the class token positions.
ad::Value class_sigmas(ad::Graph& g, const nn::ModelParams& model,
                       const TemplatedExample& te) {
  if (!model.dlm) throw ContractError("class_scores: model has no DLM head");
  const nn::Encoded enc = nn::encode(g, model.encoder, te.ids);
  for (Index pos : te.class_token_positions)
    if (pos >= enc.hidden.rows())
      throw ContractError("class_scores: class token position out of range");
  const ad::Value rows = gather_rows(enc.hidden, te.class_token_positions);
  return sigmoid(nn::dlm_logits(g, *model.dlm, rows));
}

}  // namespace

ClassScores class_scores(const nn::ModelParams& model, const TemplatedExample& te,
                         ScoreMode mode) {
  ad::Graph g;
  const ad::Value sig = class_sigmas(g, model, te);
  ClassScores out;
  out.mode = mode;
  out.values.reserve(static_cast<std::size_t>(sig.rows()));
  for (Index i = 0; i < sig.rows(); ++i) {
    const Scalar s = sig.tensor().mat()(i, 0);
    out.values.push_back(mode == ScoreMode::kInverted ? 1.0 - s : s);
  }
  return out;
}

Scalar dpt_loss(const ClassScores& scores, int gold) {
  if (gold < 0 || gold >= static_cast<int>(scores.values.size()))
    throw ContractError("dpt_loss: gold class out of range");
  Scalar total = 0.0;
  for (std::size_t i = 0; i < scores.values.size(); ++i)
    total += ad::bce(scores.values[i], static_cast<int>(i) == gold ? 1 : 0);
  return total;
}

int predict_class(const ClassScores& scores) {
  if (scores.values.empty()) throw ContractError("predict_class: no scores");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.values.size()); ++i)
    if (scores.values[static_cast<std::size_t>(i)] >
        scores.values[static_cast<std::size_t>(best)])
      best = i;
  return best;
}

namespace {

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

Index qa_paragraph_start(std::span<const int> question) {
  return static_cast<Index>(question.size()) + 2;
}

}  // namespace

std::vector<Scalar> qa_token_scores(const nn::ModelParams& model,
                                    std::span<const int> question,
                                    std::span<const int> paragraph) {
  if (!model.dlm) throw ContractError("qa_token_scores: model has no DLM head");
  const text::TokenSequence ids = qa_sequence(question, paragraph);
  if (static_cast<Index>(ids.size()) > model.encoder.config.max_len)
    throw ContractError("qa_token_scores: input exceeds max length");
  const Mat hidden = nn::encode_eval(model.encoder, ids);
  const Index start = qa_paragraph_start(question);
  std::vector<Scalar> out;
  out.reserve(paragraph.size());
  for (std::size_t i = 0; i < paragraph.size(); ++i) {
    const Scalar logit =
        nn::dlm_logit(*model.dlm, hidden.row(start + static_cast<Index>(i)).transpose());
    out.push_back(ad::sigmoid(logit));
  }
  return out;
}

SpanSet extract_spans(std::span<const Scalar> scores, Scalar threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ContractError("extract_spans: threshold must be in (0, 1)");
  std::vector<bool> mask(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) mask[i] = scores[i] < threshold;
  return SpanSet::from_mask(mask);
}

RunClasses permute_classes(const text::ClassSet& canonical, std::uint64_t seed,
                           bool permute) {
  canonical.validate();
  const int n = canonical.size();
  RunClasses rc;
  rc.canonical.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rc.canonical[static_cast<std::size_t>(i)] = i;
  if (permute) {
    RngStream rng(mix_seed(seed, 300));
    rng.shuffle(rc.canonical);
  }
  rc.slot_of.resize(static_cast<std::size_t>(n));
  for (int slot = 0; slot < n; ++slot) {
    const int cls = rc.canonical[static_cast<std::size_t>(slot)];
    rc.slot_of[static_cast<std::size_t>(cls)] = slot;
    rc.ordered.names.push_back(canonical.names[static_cast<std::size_t>(cls)]);
  }
  return rc;
}

namespace {

// Eq-3 loss of one templated example as a graph node: sum over classes of
// bce(s_i, y_i), with s built in the configured mode.
ad::Value dpt_example_loss(ad::Graph& g, const nn::ModelParams& model,
                           const TemplatedExample& te, int gold_slot, ScoreMode mode) {
  ad::Value sig = class_sigmas(g, model, te);
  if (mode == ScoreMode::kInverted) sig = affine(sig, -1.0, 1.0);
  Mat targets = Mat::Zero(sig.rows(), 1);
  targets(gold_slot, 0) = 1.0;
  return sum(bce(sig, ad::Tensor(std::move(targets))));
}

struct Batcher {
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  RngStream rng;

  Batcher(std::size_t n, std::uint64_t seed) : rng(seed) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    cursor = n;  // shuffle on first use
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

TuneResult tune_dpt(const text::ClsDataset& data, const text::Vocab& vocab,
                    const nn::ModelParams& pretrained, const TuneConfig& cfg,
                    std::uint64_t seed) {
  if (!pretrained.dlm)
    throw ContractError("tune_dpt: pretrained checkpoint has no DLM head to reuse");
  if (data.train.empty()) throw ContractError("tune_dpt: empty training set");

  TuneResult result;
  result.model = pretrained;  // DLM head reused as-is, never reinitialized
  result.classes = permute_classes(data.classes, seed, cfg.permute_class_order);
  const Index max_len = result.model.encoder.config.max_len;

  struct Prepared {
    TemplatedExample te;
    int gold_slot;
  };
  auto prepare = [&](const text::ExampleRecord& rec) {
    return Prepared{
        build_template(rec.text, result.classes.ordered, vocab, max_len, cfg.template_config),
        result.classes.slot_of[static_cast<std::size_t>(rec.gold)]};
  };
  std::vector<Prepared> train;
  train.reserve(data.train.size());
  for (const auto& rec : data.train) train.push_back(prepare(rec));

  std::vector<ad::Tensor*> params = nn::trainable_tensors(result.model, {.dlm = true});
  nn::Adam adam(params, cfg.adam);
  Batcher batcher(train.size(), mix_seed(seed, 301));

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
        losses.push_back(dpt_example_loss(g, result.model, item.te, item.gold_slot, cfg.mode));
      }
      const ad::Value loss = mean(concat_cols(losses));
      const Scalar loss_value = loss.tensor().value();
      if (!std::isfinite(loss_value))
        throw TrainingDiverged("tune_dpt: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss_value;
      adam.step(parameter_gradients(g, loss, params));
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<Scalar>(steps_per_epoch);
    em.eval_metric = classification_accuracy(result.model, vocab, result.classes, data.dev,
                                             cfg.mode, cfg.template_config);
    result.epochs.push_back(em);
    result.final_metric = em.eval_metric;
  }
  if (cfg.epochs == 0)
    result.final_metric = classification_accuracy(result.model, vocab, result.classes,
                                                  data.dev, cfg.mode, cfg.template_config);
  return result;
}

namespace {

ad::Value dpt_qa_example_loss(ad::Graph& g, const nn::ModelParams& model,
                              const text::TokenSequence& ids, Index paragraph_start,
                              Index paragraph_len, const SpanSet& answers) {
  const nn::Encoded enc = nn::encode(g, model.encoder, ids);
  std::vector<Index> rows(static_cast<std::size_t>(paragraph_len));
  for (Index i = 0; i < paragraph_len; ++i)
    rows[static_cast<std::size_t>(i)] = paragraph_start + i;
  const ad::Value sig =
      sigmoid(nn::dlm_logits(g, *model.dlm, gather_rows(enc.hidden, rows)));
  // Answer tokens are "original" (y = 0 on sigma), the rest "replaced".
  Mat targets = Mat::Ones(paragraph_len, 1);
  for (Index t : answers.positions()) targets(t, 0) = 0.0;
  return mean(bce(sig, ad::Tensor(std::move(targets))));
}

}  // namespace

TuneResult tune_dpt_qa(const text::QADataset& data, const text::Vocab& vocab,
                       const nn::ModelParams& pretrained, const TuneConfig& cfg,
                       std::uint64_t seed) {
  if (!pretrained.dlm)
    throw ContractError("tune_dpt_qa: pretrained checkpoint has no DLM head to reuse");
  if (data.train.empty()) throw ContractError("tune_dpt_qa: empty training set");

  TuneResult result;
  result.model = pretrained;
  const Index max_len = result.model.encoder.config.max_len;

  struct Prepared {
    text::TokenSequence ids;
    Index paragraph_start;
    Index paragraph_len;
    SpanSet answers;
  };
  auto prepare = [&](const text::QARecord& rec) {
    const text::TokenSequence q = text::tokenize(rec.question, vocab);
    const text::TokenSequence p = text::tokenize(rec.paragraph, vocab);
    Prepared item;
    item.ids = qa_sequence(q, p);
    if (static_cast<Index>(item.ids.size()) > max_len)
      throw ContractError("tune_dpt_qa: record exceeds max length");
    item.paragraph_start = qa_paragraph_start(q);
    item.paragraph_len = static_cast<Index>(p.size());
    item.answers = rec.answer_spans;
    return item;
  };
  std::vector<Prepared> train;
  train.reserve(data.train.size());
  for (const auto& rec : data.train) train.push_back(prepare(rec));

  std::vector<ad::Tensor*> params = nn::trainable_tensors(result.model, {.dlm = true});
  nn::Adam adam(params, cfg.adam);
  Batcher batcher(train.size(), mix_seed(seed, 301));

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
        losses.push_back(dpt_qa_example_loss(g, result.model, item.ids, item.paragraph_start,
                                             item.paragraph_len, item.answers));
      }
      const ad::Value loss = mean(concat_cols(losses));
      const Scalar loss_value = loss.tensor().value();
      if (!std::isfinite(loss_value))
        throw TrainingDiverged("tune_dpt_qa: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss_value;
      adam.step(parameter_gradients(g, loss, params));
    }
    const QAMetrics qm = qa_metrics(result.model, vocab, data.dev, cfg.qa_threshold);
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<Scalar>(steps_per_epoch);
    em.eval_metric = qm.f1;
    result.epochs.push_back(em);
    result.final_metric = qm.f1;
  }
  if (cfg.epochs == 0)
    result.final_metric = qa_metrics(result.model, vocab, data.dev, cfg.qa_threshold).f1;
  return result;
}

Scalar classification_accuracy(const nn::ModelParams& model, const text::Vocab& vocab,
                               const RunClasses& classes,
                               std::span<const text::ExampleRecord> records,
                               ScoreMode mode, const TemplateConfig& tc) {
  std::vector<int> preds, golds;
  preds.reserve(records.size());
  golds.reserve(records.size());
  for (const text::ExampleRecord& rec : records) {
    const TemplatedExample te = build_template(rec.text, classes.ordered, vocab,
                                               model.encoder.config.max_len, tc);
    const int slot = predict_class(class_scores(model, te, mode));
    preds.push_back(classes.canonical[static_cast<std::size_t>(slot)]);
    golds.push_back(rec.gold);
  }
  return metrics::accuracy(preds, golds);
}

QAMetrics qa_metrics(const nn::ModelParams& model, const text::Vocab& vocab,
                     std::span<const text::QARecord> records, Scalar threshold) {
  if (records.empty()) throw ContractError("qa_metrics: no records");
  QAMetrics out;
  for (const text::QARecord& rec : records) {
    const text::TokenSequence q = text::tokenize(rec.question, vocab);
    const text::TokenSequence p = text::tokenize(rec.paragraph, vocab);
    const SpanSet pred = extract_spans(qa_token_scores(model, q, p), threshold);
    out.em += static_cast<Scalar>(metrics::span_em(pred, rec.answer_spans));
    out.f1 += metrics::span_f1(pred, rec.answer_spans);
  }
  out.em /= static_cast<Scalar>(records.size());
  out.f1 /= static_cast<Scalar>(records.size());
  return out;
}

}  // namespace dptbench::dpt
