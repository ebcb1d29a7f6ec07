#include "dptbench/rtd.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

namespace dptbench::rtd {

UnigramSampler::UnigramSampler(std::vector<Scalar> probs) : probs_(std::move(probs)) {
  Scalar total = 0.0;
  for (Scalar p : probs_) {
    if (p < 0.0) throw ContractError("UnigramSampler: negative probability");
    total += p;
  }
  if (total <= 0.0) throw ContractError("UnigramSampler: no probability mass");
  cdf_.reserve(probs_.size());
  Scalar acc = 0.0;
  for (Scalar& p : probs_) {
    p /= total;
    acc += p;
    cdf_.push_back(acc);
  }
  cdf_.back() = 1.0;
}

UnigramSampler UnigramSampler::from_corpus(std::span<const text::TokenSequence> corpus,
                                           int vocab_size) {
  std::vector<Scalar> counts(static_cast<std::size_t>(vocab_size), 0.0);
  for (const text::TokenSequence& seq : corpus)
    for (int id : seq)
      if (id >= text::Vocab::kNumSpecials) counts[static_cast<std::size_t>(id)] += 1.0;
  return UnigramSampler(std::move(counts));
}

int UnigramSampler::sample(RngStream& rng) const {
  const Scalar u = rng.uniform();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<int>(it - cdf_.begin());
}

CorruptedSequence corrupt(std::span<const int> seq, Scalar replace_prob,
                          const TokenSampler& sampler, std::uint64_t seed) {
  if (!(replace_prob >= 0.0 && replace_prob <= 1.0))
    throw ContractError("corrupt: replace_prob must be in [0, 1]");
  RngStream rng(seed);
  CorruptedSequence out;
  out.ids.assign(seq.begin(), seq.end());
  out.replaced.assign(seq.size(), 0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < text::Vocab::kNumSpecials) continue;
    out.eligible.push_back(static_cast<Index>(i));
    if (rng.uniform() < replace_prob) {
      const int drawn = sampler.sample(rng);
      if (drawn != seq[i]) {
        out.ids[i] = drawn;
        out.replaced[i] = 1;
      }
    }
  }
  return out;
}

namespace {

ad::Value rtd_loss_impl(ad::Graph& g, const nn::EncoderParams& encoder,
                        const nn::DlmHead& head, const CorruptedSequence& seq,
                        const nn::EncodeOptions& opts) {
  if (seq.eligible.empty()) throw ContractError("rtd_loss: empty eligible mask");
  const ad::Value hidden = nn::encode(g, encoder, seq.ids, opts).hidden;
  const ad::Value probs = sigmoid(nn::dlm_logits(g, head, hidden));
  Mat targets(static_cast<Index>(seq.ids.size()), 1);
  for (std::size_t i = 0; i < seq.ids.size(); ++i)
    targets(static_cast<Index>(i), 0) = seq.replaced[i] ? 1.0 : 0.0;
  const ad::Value losses = bce(probs, ad::Tensor(std::move(targets)));
  return mean(gather_rows(losses, seq.eligible));
}

}  // namespace

ad::Value rtd_loss(ad::Graph& g, const nn::EncoderParams& encoder,
                   const nn::DlmHead& head, const CorruptedSequence& seq) {
  return rtd_loss_impl(g, encoder, head, seq, {});
}

Scalar rtd_loss_eval(const nn::ModelParams& model, const CorruptedSequence& seq) {
  if (!model.dlm) throw ContractError("rtd_loss_eval: model has no DLM head");
  ad::Graph g;
  return rtd_loss(g, model.encoder, *model.dlm, seq).tensor().value();
}

text::TokenSequence frame(std::span<const int> tokens) {
  text::TokenSequence out;
  out.reserve(tokens.size() + 2);
  out.push_back(text::Vocab::kCls);
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.push_back(text::Vocab::kSep);
  return out;
}

nn::ModelParams pretrain(std::span<const text::TokenSequence> corpus,
                         const nn::EncoderConfig& config, const PretrainConfig& pcfg,
                         std::uint64_t seed, std::ostream* log) {
  if (corpus.empty()) throw ContractError("pretrain: empty corpus");
  config.validate();

  nn::ModelParams model = nn::init_params(config, mix_seed(seed, 200));
  const UnigramSampler sampler = UnigramSampler::from_corpus(corpus, static_cast<int>(config.vocab_size));

  std::vector<ad::Tensor*> params = nn::trainable_tensors(model, {.dlm = true});
  nn::Adam adam(params, pcfg.adam);

  RngStream order_rng(mix_seed(seed, 201));
  const std::uint64_t corrupt_root = mix_seed(seed, 202);
  RngStream dropout_rng(mix_seed(seed, 203));

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // force shuffle on first use

  for (int step = 0; step < pcfg.steps; ++step) {
    ad::Graph g;
    std::vector<ad::Value> losses;
    losses.reserve(static_cast<std::size_t>(pcfg.batch_size));
    for (int b = 0; b < pcfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const text::TokenSequence framed = frame(corpus[order[cursor++]]);
      const CorruptedSequence corrupted = corrupt(
          framed, pcfg.replace_prob, sampler,
          mix_seed(corrupt_root, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)));
      nn::EncodeOptions opts;
      opts.train = true;
      opts.rng = &dropout_rng;
      losses.push_back(rtd_loss_impl(g, model.encoder, *model.dlm, corrupted, opts));
    }
    const ad::Value batch_loss = mean(concat_cols(losses));
    const Scalar loss_value = batch_loss.tensor().value();
    if (!std::isfinite(loss_value))
      throw TrainingDiverged("pretrain: non-finite loss at step " + std::to_string(step));

    adam.step(parameter_gradients(g, batch_loss, params));

    if (log && (step % pcfg.log_every == 0 || step + 1 == pcfg.steps)) {
      const nlohmann::json line = {{"step", step}, {"loss", loss_value}, {"seed", seed}};
      (*log) << line.dump() << '\n';
    }
  }
  return model;
}

Scalar rtd_accuracy(const nn::ModelParams& model,
                    std::span<const CorruptedSequence> sequences) {
  if (!model.dlm) throw ContractError("rtd_accuracy: model has no DLM head");
  long correct = 0;
  long total = 0;
  for (const CorruptedSequence& seq : sequences) {
    const Mat hidden = nn::encode_eval(model.encoder, seq.ids);
    for (Index pos : seq.eligible) {
      const Scalar logit = nn::dlm_logit(*model.dlm, hidden.row(pos).transpose());
      const bool pred_replaced = ad::sigmoid(logit) > 0.5;
      const bool is_replaced = seq.replaced[static_cast<std::size_t>(pos)] != 0;
      correct += (pred_replaced == is_replaced) ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw ContractError("rtd_accuracy: no eligible positions");
  return static_cast<Scalar>(correct) / static_cast<Scalar>(total);
}

Scalar majority_label_accuracy(std::span<const CorruptedSequence> sequences) {
  long replaced = 0;
  long total = 0;
  for (const CorruptedSequence& seq : sequences)
    for (Index pos : seq.eligible) {
      replaced += seq.replaced[static_cast<std::size_t>(pos)] ? 1 : 0;
      ++total;
    }
  if (total == 0) throw ContractError("majority_label_accuracy: no eligible positions");
  const Scalar frac = static_cast<Scalar>(replaced) / static_cast<Scalar>(total);
  return std::max(frac, 1.0 - frac);
}

}  // namespace dptbench::rtd
