#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dptbench/finetune.hpp"
#include "dptbench/grad_check.hpp"

using namespace dptbench;

namespace {

text::Vocab word_vocab() {
  const std::vector<std::string> corpus = {"a graceful movie great terrible long film good bad"};
  return text::Vocab::build(corpus, 1);
}

nn::EncoderConfig tiny_config(Index vocab, Index max_len = 32) {
  nn::EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  cfg.max_len = max_len;
  return cfg;
}

}  // namespace

TEST_CASE("classify_probs is a probability vector") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 3);
  model.cls = nn::init_cls_head(16, 4, 7);
  const auto probs = ft::classify_probs(model, vocab, "a graceful movie");
  REQUIRE(probs.size() == 4);
  Scalar total = 0.0;
  for (Scalar p : probs) {
    CHECK(p > 0.0);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("zero CLS head yields the uniform distribution") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 3);
  model.cls = nn::ClsHead{nn::Tensor::zeros(16, 5), nn::Tensor::zeros(1, 5)};
  const auto probs = ft::classify_probs(model, vocab, "a movie");
  for (Scalar p : probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("classify_probs requires a matching CLS head") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 3);
  CHECK_THROWS_AS(ft::classify_probs(model, vocab, "a"), ContractError);
  model.cls = nn::ClsHead{nn::Tensor::zeros(8, 5), nn::Tensor::zeros(1, 5)};
  CHECK_THROWS_AS(ft::classify_probs(model, vocab, "a"), ContractError);
}

TEST_CASE("permuting CLS head columns permutes the outputs identically") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 3);
  model.cls = nn::init_cls_head(16, 3, 9);
  const auto base = ft::classify_probs(model, vocab, "a graceful film");

  // Swap class columns 0 and 2.
  nn::ModelParams permuted = model;
  permuted.cls->weight.mat().col(0).swap(permuted.cls->weight.mat().col(2));
  permuted.cls->bias.mat()(0, 0) = model.cls->bias.mat()(0, 2);
  permuted.cls->bias.mat()(0, 2) = model.cls->bias.mat()(0, 0);
  const auto swapped = ft::classify_probs(permuted, vocab, "a graceful film");
  CHECK(swapped[0] == doctest::Approx(base[2]).epsilon(1e-12));
  CHECK(swapped[1] == doctest::Approx(base[1]).epsilon(1e-12));
  CHECK(swapped[2] == doctest::Approx(base[0]).epsilon(1e-12));
}

TEST_CASE("qa_label_probs covers the paragraph and a zero head predicts nothing") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 3);
  model.token_label = nn::TokenLabelHead{nn::Tensor::zeros(16, 1), nn::Tensor::zeros(1, 1)};
  const text::TokenSequence q = text::tokenize("good film", vocab);
  const text::TokenSequence p = text::tokenize("a graceful long movie", vocab);
  const auto probs = ft::qa_label_probs(model, q, p);
  REQUIRE(probs.size() == p.size());
  for (Scalar pr : probs) CHECK(pr == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ft::qa_predict_spans(probs).empty());  // strict > 0.5
}

TEST_CASE("qa_label_probs matches a scalar recomposition") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 5);
  model.token_label = nn::init_token_label_head(16, 11);
  const text::TokenSequence q = text::tokenize("good", vocab);
  const text::TokenSequence p = text::tokenize("a movie great", vocab);
  const auto probs = ft::qa_label_probs(model, q, p);

  text::TokenSequence ids = {text::Vocab::kCls};
  ids.insert(ids.end(), q.begin(), q.end());
  ids.push_back(text::Vocab::kSep);
  ids.insert(ids.end(), p.begin(), p.end());
  ids.push_back(text::Vocab::kSep);
  const Mat hidden = nn::encode_eval(model.encoder, ids);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Index pos = static_cast<Index>(q.size()) + 2 + static_cast<Index>(i);
    const Scalar logit = hidden.row(pos).dot(model.token_label->weight.mat().col(0)) +
                         model.token_label->bias.mat()(0, 0);
    CHECK(probs[i] == doctest::Approx(ad::sigmoid(logit)).epsilon(1e-12));
  }
}

TEST_CASE("qa_label_probs rejects over-length input") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size(), 8), 3);
  model.token_label = nn::init_token_label_head(16, 11);
  const text::TokenSequence q = text::tokenize("good", vocab);
  text::TokenSequence p(20, 6);
  CHECK_THROWS_AS(ft::qa_label_probs(model, q, p), ContractError);
}

TEST_CASE("cross-entropy gradient through ft_classify matches finite differences") {
  const text::Vocab vocab = word_vocab();
  nn::ModelParams model = nn::init_params(tiny_config(vocab.size()), 13);
  model.cls = nn::init_cls_head(16, 3, 14);
  const text::TokenSequence ids = {0, 6, 7, 8, 1};

  std::vector<ad::Tensor*> params = nn::trainable_tensors(model, {.cls = true});
  const ad::LossBuilder loss_fn = [&](ad::Graph& g, std::span<const ad::Value>) {
    const nn::Encoded enc = nn::encode(g, model.encoder, ids);
    const ad::Value cls_row = gather_rows(enc.hidden, {0});
    const ad::Value logits =
        add_row(matmul(cls_row, g.param(model.cls->weight)), g.param(model.cls->bias));
    const ad::Value probs = softmax_rows(logits);
    return sum(affine(log_elem(col_block(probs, 1, 1)), -1.0, 0.0));
  };
  const Scalar err = ad::grad_check(loss_fn, params,
                                    {.eps = 1e-5, .max_coords_per_tensor = 20, .seed = 4});
  CHECK(err < 1e-4);
}

TEST_CASE("tune_ft initializes a fresh head from its trial seed") {
  const auto synth = text::synth_corpus(2, 16, 44);
  const text::Vocab vocab = text::Vocab::build(synth.unlabeled, 1);
  const nn::ModelParams pretrained = nn::init_params(tiny_config(vocab.size()), 2);

  ft::TuneConfig cfg;
  cfg.epochs = 0;
  const auto r1 = ft::tune_ft(synth.classification, vocab, pretrained, cfg, 5);
  const auto r2 = ft::tune_ft(synth.classification, vocab, pretrained, cfg, 5);
  const auto r3 = ft::tune_ft(synth.classification, vocab, pretrained, cfg, 6);
  REQUIRE(r1.model.cls.has_value());
  // Same seed, same fresh head; different seed, different head.
  CHECK(r1.model.cls->weight.mat() == r2.model.cls->weight.mat());
  CHECK(r1.model.cls->weight.mat() != r3.model.cls->weight.mat());
  // Fresh, not copied from the pretrained checkpoint.
  CHECK((r1.model.cls->weight.mat().array() != 0.0).any());
}

TEST_CASE("tune_ft lowers the loss and never reads the DLM head") {
  const auto synth = text::synth_corpus(2, 24, 55);
  const text::Vocab vocab = text::Vocab::build(synth.unlabeled, 1);
  nn::ModelParams with_dlm = nn::init_params(tiny_config(vocab.size()), 2);
  nn::ModelParams without_dlm = with_dlm;
  without_dlm.dlm.reset();

  ft::TuneConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  const auto r1 = ft::tune_ft(synth.classification, vocab, with_dlm, cfg, 5);
  const auto r2 = ft::tune_ft(synth.classification, vocab, without_dlm, cfg, 5);
  REQUIRE(!r1.epochs.empty());
  CHECK(r1.epochs.back().train_loss < r1.epochs.front().train_loss);
  // Deleting the DLM head changes nothing about fine-tuning.
  CHECK(r1.final_metric == r2.final_metric);
  CHECK(r1.model.cls->weight.mat() == r2.model.cls->weight.mat());
  CHECK(r1.model.encoder.token_embedding.mat() == r2.model.encoder.token_embedding.mat());
}

TEST_CASE("tune_ft_qa trains the token-labeling head") {
  const auto synth = text::synth_corpus(2, 16, 66);
  const text::Vocab vocab = text::Vocab::build(synth.unlabeled, 1);
  nn::EncoderConfig cfg = tiny_config(vocab.size(), 64);
  const nn::ModelParams pretrained = nn::init_params(cfg, 2);

  ft::TuneConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  const auto r1 = ft::tune_ft_qa(synth.qa, vocab, pretrained, tc, 5);
  const auto r2 = ft::tune_ft_qa(synth.qa, vocab, pretrained, tc, 5);
  REQUIRE(!r1.epochs.empty());
  CHECK(r1.epochs.back().train_loss < r1.epochs.front().train_loss);
  CHECK(r1.final_metric == r2.final_metric);
  REQUIRE(r1.model.token_label.has_value());
  CHECK(r1.model.token_label->weight.mat() == r2.model.token_label->weight.mat());
}
