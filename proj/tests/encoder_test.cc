// tests/encoder_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hierctc/checks.h"
#include "hierctc/encoder.h"
#include "hierctc/model.h"

using namespace hierctc;

namespace {

void zero_tensor(Tensor t) { std::fill(t.data().begin(), t.data().end(), 0.0); }

Encoder make_encoder(const EncoderConfig& cfg, int input_dim, int vocab,
                     std::uint64_t seed) {
  Rng rng(seed);
  ParamSink nop = [](const std::string&, const Tensor&) {};
  return Encoder::init(cfg, input_dim, vocab, rng, nop);
}

// Reference construction for the wiring-equivalence invariant: a plain
// layer stack whose tap layers apply only the extra normalization.
Tensor norm_augmented_reference(const Encoder& enc, const Tensor& features) {
  Tensor x = enc.embed(features);
  size_t next_tap = 0;
  for (int k = 1; k <= enc.cfg.n_layers; ++k) {
    x = enc.layer_forward(k, x);
    if (next_tap < enc.cfg.tap_layers.size() && enc.cfg.tap_layers[next_tap] == k) {
      const TapBlock& tap = enc.taps[next_tap];
      x = layer_norm(x, tap.nrm_g, tap.nrm_b);
      ++next_tap;
    }
  }
  return layer_norm(x, enc.final_ln_g, enc.final_ln_b);
}

}  // namespace

TEST_CASE("tap kinds per mode") {
  CHECK(tap_kinds_for(ConditioningMode::none, 3).empty());
  CHECK(tap_kinds_for(ConditioningMode::sc_ctc, 3) ==
        std::vector<TapKind>{TapKind::asr, TapKind::asr, TapKind::asr});
  CHECK(tap_kinds_for(ConditioningMode::lid_utt, 2) ==
        std::vector<TapKind>{TapKind::lid_utt, TapKind::lid_utt});
  CHECK(tap_kinds_for(ConditioningMode::lid_tok, 2) ==
        std::vector<TapKind>{TapKind::lid_tok, TapKind::lid_tok});
  CHECK(tap_kinds_for(ConditioningMode::hier_lid_utt, 3) ==
        std::vector<TapKind>{TapKind::lid_utt, TapKind::asr, TapKind::asr});
  CHECK(tap_kinds_for(ConditioningMode::hier_lid_tok, 3) ==
        std::vector<TapKind>{TapKind::lid_tok, TapKind::asr, TapKind::asr});
}

TEST_CASE("config validation") {
  EncoderConfig cfg;
  cfg.n_layers = 4;
  cfg.tap_layers = {4};  // must stay within [1, n_layers-1]
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.tap_layers = {0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.tap_layers = {};
  cfg.mode = ConditioningMode::sc_ctc;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.tap_layers = {1, 3};
  cfg.validate();
  cfg.d_model = 63;  // not divisible by heads
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("mode none computes no taps and matches the plain layer stack") {
  EncoderConfig cfg;
  cfg.n_layers = 3;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 12;
  cfg.tap_layers = {1};
  cfg.mode = ConditioningMode::none;
  const Encoder enc = make_encoder(cfg, 5, 7, 42);
  CHECK(enc.taps.empty());

  Rng rng(1);
  const Tensor feats = Tensor::uniform({6, 5}, -1.0, 1.0, rng);
  const EncoderOutput out = enc.forward(feats);
  CHECK(out.tap_posteriors.empty());
  CHECK(out.tap_kinds.empty());

  // Vanilla encoding: embed, layers in order, final normalization.
  Tensor x = enc.embed(feats);
  for (int k = 1; k <= cfg.n_layers; ++k) x = enc.layer_forward(k, x);
  x = layer_norm(x, enc.final_ln_g, enc.final_ln_b);
  REQUIRE(out.h_final.size() == x.size());
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(out.h_final.data()[i] == x.data()[i]);
}

TEST_CASE("sc_ctc with taps (3,6,9) yields three ASR taps; hier gives lid first") {
  EncoderConfig cfg;
  cfg.n_layers = 10;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 8;
  cfg.tap_layers = {3, 6, 9};
  cfg.mode = ConditioningMode::sc_ctc;
  const Encoder enc = make_encoder(cfg, 4, 6, 3);
  Rng rng(5);
  const Tensor feats = Tensor::uniform({5, 4}, -1.0, 1.0, rng);
  const EncoderOutput out = enc.forward(feats);
  REQUIRE(out.tap_posteriors.size() == 3);
  CHECK(out.tap_kinds ==
        std::vector<TapKind>{TapKind::asr, TapKind::asr, TapKind::asr});
  for (const auto& z : out.tap_posteriors) {
    CHECK(z.rows() == 5);
    CHECK(z.cols() == 6);
  }

  EncoderConfig hier = cfg;
  hier.mode = ConditioningMode::hier_lid_utt;
  const EncoderOutput hout = make_encoder(hier, 4, 6, 3).forward(feats);
  CHECK(hout.tap_kinds ==
        std::vector<TapKind>{TapKind::lid_utt, TapKind::asr, TapKind::asr});
}

TEST_CASE("condition_combine ablates to pure normalization at zero projection") {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 8;
  cfg.tap_layers = {1};
  cfg.mode = ConditioningMode::sc_ctc;
  Encoder enc = make_encoder(cfg, 4, 5, 9);
  TapBlock& tap = enc.taps[0];

  Rng rng(2);
  const Tensor h = Tensor::uniform({6, 8}, -1.0, 1.0, rng);
  const Tensor z = log_softmax(Tensor::uniform({6, 5}, -1.0, 1.0, rng));

  zero_tensor(tap.lin_w);
  zero_tensor(tap.lin_b);
  const Tensor combined = tap.condition_combine(h, z);
  const Tensor just_norm = layer_norm(h, tap.nrm_g, tap.nrm_b);
  CHECK(combined.shape() == std::vector<int>{6, 8});
  for (std::int64_t i = 0; i < combined.size(); ++i)
    CHECK(combined.data()[i] == just_norm.data()[i]);
}

TEST_CASE("different posteriors change the combined output when Lin is nonzero") {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 8;
  cfg.tap_layers = {1};
  cfg.mode = ConditioningMode::sc_ctc;
  const Encoder enc = make_encoder(cfg, 4, 5, 9);
  const TapBlock& tap = enc.taps[0];
  Rng rng(6);
  const Tensor h = Tensor::uniform({4, 8}, -1.0, 1.0, rng);
  const Tensor z1 = log_softmax(Tensor::uniform({4, 5}, -2.0, 2.0, rng));
  const Tensor z2 = log_softmax(Tensor::uniform({4, 5}, -2.0, 2.0, rng));
  const Tensor c1 = tap.condition_combine(h, z1);
  const Tensor c2 = tap.condition_combine(h, z2);
  bool any_diff = false;
  for (std::int64_t i = 0; i < c1.size(); ++i)
    if (c1.data()[i] != c2.data()[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("tap head rows are log distributions; share_heads shares parameters") {
  EncoderConfig cfg;
  cfg.n_layers = 3;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 8;
  cfg.tap_layers = {1, 2};
  cfg.mode = ConditioningMode::sc_ctc;
  cfg.share_heads = true;
  const Encoder enc = make_encoder(cfg, 4, 5, 10);
  Rng rng(3);
  const Tensor h = Tensor::uniform({5, 8}, -1.0, 1.0, rng);
  const Tensor z0 = enc.taps[0].tap_head(h);
  const Tensor z1 = enc.taps[1].tap_head(h);
  for (int t = 0; t < 5; ++t) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += std::exp(z0.at(t, k));
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  // Identical input through shared heads gives identical posteriors.
  for (std::int64_t i = 0; i < z0.size(); ++i)
    CHECK(z0.data()[i] == z1.data()[i]);
  CHECK(enc.taps[0].head_w.node() == enc.taps[1].head_w.node());
}

TEST_CASE("wiring equivalence: zeroed Lin equals the norm-augmented reference") {
  for (ConditioningMode mode :
       {ConditioningMode::sc_ctc, ConditioningMode::lid_utt,
        ConditioningMode::lid_tok, ConditioningMode::hier_lid_utt,
        ConditioningMode::hier_lid_tok}) {
    EncoderConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.ffn_dim = 12;
    cfg.tap_layers = {1, 3};
    cfg.mode = mode;
    Encoder enc = make_encoder(cfg, 6, 7, 77);
    for (TapBlock& tap : enc.taps) {
      zero_tensor(tap.lin_w);
      zero_tensor(tap.lin_b);
    }
    Rng rng(8);
    const Tensor feats = Tensor::uniform({7, 6}, -1.0, 1.0, rng);
    const Tensor got = enc.forward(feats).h_final;
    const Tensor want = norm_augmented_reference(enc, feats);
    REQUIRE(got.size() == want.size());
    for (std::int64_t i = 0; i < got.size(); ++i)
      CHECK(got.data()[i] == want.data()[i]);
  }
}

TEST_CASE("encode is pure: repeated calls are bit-identical") {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 8;
  cfg.tap_layers = {1};
  cfg.mode = ConditioningMode::hier_lid_utt;
  const Encoder enc = make_encoder(cfg, 4, 5, 12);
  Rng rng(4);
  const Tensor feats = Tensor::uniform({5, 4}, -1.0, 1.0, rng);
  const EncoderOutput a = enc.forward(feats);
  const EncoderOutput b = enc.forward(feats);
  CHECK(a.h_final.data() == b.h_final.data());
  CHECK(a.tap_posteriors[0].data() == b.tap_posteriors[0].data());
}

TEST_CASE("empty input is rejected before reaching the encoder") {
  // A zero-length time axis is unrepresentable by construction.
  CHECK_THROWS_AS(Tensor::from({0, 4}, {}), std::invalid_argument);
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 8;
  cfg.tap_layers = {};
  cfg.mode = ConditioningMode::none;
  const Encoder enc = make_encoder(cfg, 4, 5, 1);
  Rng rng(2);
  // Wrong feature dimension names both shapes.
  CHECK_THROWS_AS(enc.forward(Tensor::uniform({3, 6}, -1, 1, rng)),
                  std::invalid_argument);
}

TEST_CASE("tap head gradient comes from the tap loss, not downstream, when Lin is zero") {
  ToyFixture fx = make_toy_fixture(5, ConditioningMode::sc_ctc);
  Model& model = fx.model;

  // Only the tap loss: the head must receive gradient.
  model.zero_grads();
  UtteranceLosses u = model.forward_losses(fx.features, fx.labels);
  REQUIRE(u.tap_ctc.size() == 1);
  backward(u.tap_ctc[0].neg_log_prob);
  double head_norm = 0.0;
  for (double g : model.encoder.taps[0].head_w.grad()) head_norm += g * g;
  CHECK(head_norm > 0.0);

  // Only the final CTC loss with the conditioning projection zeroed: the
  // tap head is disconnected from everything downstream.
  zero_tensor(model.encoder.taps[0].lin_w);
  zero_tensor(model.encoder.taps[0].lin_b);
  model.zero_grads();
  u = model.forward_losses(fx.features, fx.labels);
  backward(u.enc_ctc.neg_log_prob);
  for (double g : model.encoder.taps[0].head_w.grad()) CHECK(g == 0.0);

  // With a live projection the downstream loss does reach the head.
  Rng rng(3);
  Tensor& lin = model.encoder.taps[0].lin_w;
  std::uniform_real_distribution<double> dist(-0.3, 0.3);
  for (auto& v : lin.data()) v = dist(rng);
  model.zero_grads();
  u = model.forward_losses(fx.features, fx.labels);
  backward(u.enc_ctc.neg_log_prob);
  head_norm = 0.0;
  for (double g : model.encoder.taps[0].head_w.grad()) head_norm += g * g;
  CHECK(head_norm > 0.0);
}
