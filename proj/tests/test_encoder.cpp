#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dptbench/checkpoint.hpp"
#include "dptbench/encoder.hpp"
#include "dptbench/grad_check.hpp"

using namespace dptbench;
using nn::EncoderConfig;

namespace {

EncoderConfig tiny_config(Index vocab = 40) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.hidden_dim = 16;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.ffn_dim = 32;
  cfg.max_len = 24;
  return cfg;
}

bool bitwise_equal(const nn::Tensor& a, const nn::Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig cfg = tiny_config();
  cfg.hidden_dim = 15;  // not divisible by 4 heads
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = tiny_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK_THROWS_AS(nn::init_encoder(cfg, 1), ContractError);
}

TEST_CASE("init is deterministic per (config, seed)") {
  const EncoderConfig cfg = tiny_config();
  const nn::ModelParams a = nn::init_params(cfg, 5);
  const nn::ModelParams b = nn::init_params(cfg, 5);
  bool all_equal = true;
  visit_model(const_cast<nn::ModelParams&>(a), [&](const std::string& name, nn::Tensor& t) {
    nn::Tensor* other = nullptr;
    visit_model(const_cast<nn::ModelParams&>(b), [&](const std::string& n2, nn::Tensor& t2) {
      if (n2 == name) other = &t2;
    });
    REQUIRE(other != nullptr);
    all_equal = all_equal && bitwise_equal(t, *other);
  });
  CHECK(all_equal);

  const nn::ModelParams c = nn::init_params(cfg, 6);
  CHECK(!bitwise_equal(a.encoder.token_embedding, c.encoder.token_embedding));
}

TEST_CASE("normalization gains are ones, biases zero") {
  const nn::EncoderParams p = nn::init_encoder(tiny_config(), 2);
  for (const auto& l : p.layers) {
    CHECK((l.ln1_gain.mat().array() == 1.0).all());
    CHECK((l.ln2_gain.mat().array() == 1.0).all());
    CHECK((l.ln1_bias.mat().array() == 0.0).all());
    CHECK((l.bq.mat().array() == 0.0).all());
  }
  CHECK((p.final_gain.mat().array() == 1.0).all());
}

TEST_CASE("sampled weight std is within 20% of 0.02 over 10^4+ draws") {
  EncoderConfig cfg = tiny_config(200);
  cfg.hidden_dim = 64;
  cfg.ffn_dim = 64;
  const nn::EncoderParams p = nn::init_encoder(cfg, 3);
  const Mat& emb = p.token_embedding.mat();  // 200 x 64 = 12800 draws
  REQUIRE(emb.size() >= 10000);
  const Scalar mean = emb.mean();
  const Scalar var = (emb.array() - mean).square().mean();
  const Scalar stddev = std::sqrt(var);
  CHECK(stddev > 0.8 * 0.02);
  CHECK(stddev < 1.2 * 0.02);
}

TEST_CASE("encode yields one hidden vector per position") {
  EncoderConfig cfg = tiny_config();
  cfg.hidden_dim = 32;
  cfg.ffn_dim = 64;
  const nn::EncoderParams p = nn::init_encoder(cfg, 4);
  const std::vector<int> ids = {0, 7, 9, 11, 13, 8, 1};
  const Mat h = nn::encode_eval(p, ids);
  CHECK(h.rows() == 7);
  CHECK(h.cols() == 32);
  CHECK(h.allFinite());

  for (std::size_t len = 1; len <= 16; ++len) {
    std::vector<int> seq(len, 6);
    CHECK(nn::encode_eval(p, seq).rows() == static_cast<Index>(len));
  }
}

TEST_CASE("evaluation-mode encode is bit-deterministic") {
  const nn::EncoderParams p = nn::init_encoder(tiny_config(), 4);
  const std::vector<int> ids = {0, 5, 6, 7, 1};
  const Mat h1 = nn::encode_eval(p, ids);
  const Mat h2 = nn::encode_eval(p, ids);
  for (Index i = 0; i < h1.size(); ++i)
    CHECK(h1.reshaped()[i] == h2.reshaped()[i]);
}

TEST_CASE("attention rows are probability distributions") {
  const nn::EncoderParams p = nn::init_encoder(tiny_config(), 8);
  ad::Graph g;
  std::vector<ad::Value> attention;
  nn::EncodeOptions opts;
  opts.attention = &attention;
  const std::vector<int> ids = {0, 5, 9, 12, 6, 1};
  nn::encode(g, p, ids, opts);
  REQUIRE(attention.size() ==
          static_cast<std::size_t>(p.config.layers * p.config.heads));
  for (const ad::Value& a : attention) {
    const Mat& rows = a.tensor().mat();
    for (Index r = 0; r < rows.rows(); ++r) {
      CHECK(std::abs(rows.row(r).sum() - 1.0) < 1e-9);
      CHECK((rows.row(r).array() >= 0.0).all());
    }
  }
}

TEST_CASE("over-length input truncates and flags") {
  EncoderConfig cfg = tiny_config();
  cfg.max_len = 6;
  const nn::EncoderParams p = nn::init_encoder(cfg, 4);
  std::vector<int> ids(10, 7);
  ad::Graph g;
  const nn::Encoded enc = nn::encode(g, p, ids);
  CHECK(enc.truncated);
  CHECK(enc.hidden.rows() == 6);
}

TEST_CASE("encode rejects out-of-vocab ids") {
  const nn::EncoderParams p = nn::init_encoder(tiny_config(), 4);
  ad::Graph g;
  const std::vector<int> bad = {0, 999, 1};
  CHECK_THROWS_AS(nn::encode(g, p, bad), ContractError);
}

TEST_CASE("dlm_logit computes a biased dot product") {
  nn::DlmHead head;
  head.weight = nn::Tensor(Mat{{1.0}, {0.0}});
  head.bias = nn::Tensor::zeros(1, 1);
  head.use_bias = true;
  Vec h(2);
  h << 0.3, 0.7;
  CHECK(nn::dlm_logit(head, h) == doctest::Approx(0.3).epsilon(1e-15));

  head.bias.mat()(0, 0) = 1.25;
  Vec zero = Vec::Zero(2);
  CHECK(nn::dlm_logit(head, zero) == doctest::Approx(1.25).epsilon(1e-15));

  Vec wrong(3);
  wrong << 1, 2, 3;
  CHECK_THROWS_AS(nn::dlm_logit(head, wrong), ContractError);
}

TEST_CASE("dlm_logit matches a naive accumulation oracle at 64 dims") {
  RngStream rng(21);
  nn::DlmHead head;
  Mat w(64, 1);
  Vec h(64);
  for (Index i = 0; i < 64; ++i) {
    w(i, 0) = rng.uniform(-1.0, 1.0);
    h(i) = rng.uniform(-1.0, 1.0);
  }
  head.weight = nn::Tensor(w);
  head.bias = nn::Tensor(Mat{{0.125}});
  head.use_bias = true;
  Scalar expect = 0.125;
  for (Index i = 0; i < 64; ++i) expect += w(i, 0) * h(i);
  CHECK(nn::dlm_logit(head, h) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bias-free DLM head mode") {
  EncoderConfig cfg = tiny_config();
  cfg.dlm_bias = false;
  const nn::DlmHead head = nn::init_dlm_head(cfg, 3);
  CHECK(!head.use_bias);
  Vec zero = Vec::Zero(cfg.hidden_dim);
  CHECK(nn::dlm_logit(head, zero) == 0.0);
}

// Full-model gradient check on a 2-layer, d=32 configuration:
// encode -> dlm_logit -> sigmoid -> bce.
TEST_CASE("full encoder gradient matches finite differences") {
  EncoderConfig cfg;
  cfg.vocab_size = 30;
  cfg.hidden_dim = 32;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.ffn_dim = 48;
  cfg.max_len = 12;
  nn::ModelParams model = nn::init_params(cfg, 17);
  const std::vector<int> ids = {0, 7, 9, 21, 6, 1};
  Mat targets(static_cast<Index>(ids.size()), 1);
  targets << 0, 1, 0, 0, 1, 0;

  std::vector<ad::Tensor*> params = nn::trainable_tensors(model, {.dlm = true});
  const ad::LossBuilder loss_fn = [&](ad::Graph& g, std::span<const ad::Value>) {
    const ad::Value hidden = nn::encode(g, model.encoder, ids).hidden;
    const ad::Value probs = sigmoid(nn::dlm_logits(g, *model.dlm, hidden));
    return mean(bce(probs, ad::Tensor(targets)));
  };
  const Scalar err = ad::grad_check(loss_fn, params,
                                    {.eps = 1e-5, .max_coords_per_tensor = 25, .seed = 3});
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoint round-trips bitwise") {
  const auto dir = std::filesystem::temp_directory_path() / "dptbench_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";

  Checkpoint ckpt;
  ckpt.model = nn::init_params(tiny_config(), 9);
  ckpt.model.cls = nn::init_cls_head(16, 3, 10);
  const std::vector<std::string> corpus = {"alpha beta gamma", "beta delta"};
  ckpt.vocab = text::Vocab::build(corpus, 1);
  ckpt.meta = {{"task", "classification"}, {"mode", "inverted"}};

  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.meta == ckpt.meta);
  CHECK(loaded.vocab.size() == ckpt.vocab.size());
  for (int i = 0; i < ckpt.vocab.size(); ++i)
    CHECK(loaded.vocab.token(i) == ckpt.vocab.token(i));
  CHECK(loaded.model.encoder.config.hidden_dim == 16);
  CHECK(loaded.model.dlm.has_value());
  CHECK(loaded.model.cls.has_value());
  CHECK(!loaded.model.token_label.has_value());

  bool all_equal = true;
  visit_model(const_cast<nn::ModelParams&>(ckpt.model),
              [&](const std::string& name, nn::Tensor& t) {
                nn::Tensor* other = nullptr;
                visit_model(const_cast<nn::ModelParams&>(loaded.model),
                            [&](const std::string& n2, nn::Tensor& t2) {
                              if (n2 == name) other = &t2;
                            });
                REQUIRE(other != nullptr);
                all_equal = all_equal && bitwise_equal(t, *other);
              });
  CHECK(all_equal);

  // Byte-stable: saving the loaded model reproduces the file exactly.
  const auto path2 = dir / "model2.ckpt";
  save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), IoError);
}
