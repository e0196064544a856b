// checks.cc

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "hierctc/checks.h"

#include <cmath>

namespace hierctc {

namespace {

// All label sequences over {1..vocab} with length <= max_s.
std::vector<TokenSeq> all_targets(int vocab, int max_s) {
  std::vector<TokenSeq> out = {{}};
  std::vector<TokenSeq> frontier = {{}};
  for (int s = 1; s <= max_s; ++s) {
    std::vector<TokenSeq> next;
    for (const auto& base : frontier) {
      for (int tok = 1; tok <= vocab; ++tok) {
        TokenSeq t = base;
        t.push_back(tok);
        out.push_back(t);
        next.push_back(std::move(t));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

Tensor random_log_posteriors(int t_len, int cols, Rng& rng) {
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<double> logits(static_cast<size_t>(t_len) * cols);
  for (auto& v : logits) v = g(rng);
  return log_softmax(Tensor::from({t_len, cols}, std::move(logits)));
}

}  // namespace

CtcSweepResult ctc_oracle_sweep(int max_s, int max_vocab, int max_t, int draws,
                                std::uint64_t seed) {
  CtcSweepResult res;
  for (int vocab = 1; vocab <= max_vocab; ++vocab) {
    const auto targets = all_targets(vocab, max_s);
    for (int t_len = 1; t_len <= max_t; ++t_len) {
      Rng rng(mix_seed(seed, vocab * 100 + t_len));
      for (int d = 0; d < draws; ++d) {
        const Tensor lp = random_log_posteriors(t_len, vocab + 1, rng);
        for (const auto& target : targets) {
          const double dp = ctc_loss(lp, target).neg_log_prob.value();
          const double bf = ctc_brute_force(lp, target);
          ++res.cases;
          if (std::isinf(dp) && std::isinf(bf)) continue;
          res.max_deviation = std::max(res.max_deviation, std::abs(dp - bf));
        }
      }
    }
  }
  return res;
}

ToyFixture make_toy_fixture(std::uint64_t seed, ConditioningMode mode,
                            int n_layers, std::vector<int> taps) {
  ToyFixture fx;
  // Two tiny utterances give the vocab two LIDs and three characters.
  std::vector<Utterance> corpus(2);
  corpus[0].features = Tensor::zeros({4, 8});
  corpus[0].text = "ab";
  corpus[0].lid = "L1";
  corpus[1].features = Tensor::zeros({4, 8});
  corpus[1].text = "c";
  corpus[1].lid = "L2";
  fx.vocab = build_vocab(corpus, Unit::chars);

  ModelConfig mc;
  mc.input_dim = 8;
  mc.vocab_size = fx.vocab.size();
  mc.n_lid = fx.vocab.n_lid;
  mc.encoder.n_layers = n_layers;
  mc.encoder.d_model = 12;
  mc.encoder.n_heads = 2;
  mc.encoder.ffn_dim = 16;
  mc.encoder.tap_layers = std::move(taps);
  mc.encoder.mode = mode;
  mc.encoder.share_heads = false;
  mc.decoder.n_layers = 1;
  mc.decoder.n_heads = 2;
  mc.decoder.ffn_dim = 16;
  fx.model = Model::build(mc, seed);

  Rng rng(mix_seed(seed, 0xfea7));
  fx.features = Tensor::uniform({9, 8}, -1.0, 1.0, rng);
  fx.labels = make_labels("ab", "L1", fx.vocab);
  fx.loss = LossConfig{};
  return fx;
}

FullGradCheckResult full_loss_grad_check(std::uint64_t seed) {
  ToyFixture fx = make_toy_fixture(seed, ConditioningMode::hier_lid_utt);
  FullGradCheckResult res;
  res.param_count = fx.model.param_count();
  std::vector<Tensor> params;
  for (const auto& [name, t] : fx.model.params) params.push_back(t);
  res.max_rel_err = grad_check(
      [&] {
        return fx.model.compute_loss(fx.features, fx.labels, fx.loss).l_total;
      },
      params);
  return res;
}

}  // namespace hierctc
