// decoder.cc

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

#include "hierctc/decoder.h"

#include <cmath>
#include <stdexcept>

namespace hierctc {

void DecoderConfig::validate(int d_model) const {
  if (n_layers < 1 || n_heads < 1 || ffn_dim < 1)
    throw std::invalid_argument("DecoderConfig: nonpositive dimension");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("DecoderConfig: d_model not divisible by n_heads");
}

DecoderLayer DecoderLayer::init(int d_model, int n_heads, int ffn_dim, Rng& rng,
                                const std::string& prefix, const ParamSink& sink) {
  DecoderLayer l;
  l.self_attn = AttentionBlock::init(d_model, n_heads, rng, prefix + ".self", sink);
  l.cross_attn = AttentionBlock::init(d_model, n_heads, rng, prefix + ".cross", sink);
  l.ffn = FeedForward::init(d_model, ffn_dim, rng, prefix + ".ffn", sink);
  l.ln1_g = Tensor::full({d_model}, 1.0, true);
  l.ln1_b = Tensor::zeros({d_model}, true);
  l.ln2_g = Tensor::full({d_model}, 1.0, true);
  l.ln2_b = Tensor::zeros({d_model}, true);
  l.ln3_g = Tensor::full({d_model}, 1.0, true);
  l.ln3_b = Tensor::zeros({d_model}, true);
  sink(prefix + ".ln1_g", l.ln1_g);
  sink(prefix + ".ln1_b", l.ln1_b);
  sink(prefix + ".ln2_g", l.ln2_g);
  sink(prefix + ".ln2_b", l.ln2_b);
  sink(prefix + ".ln3_g", l.ln3_g);
  sink(prefix + ".ln3_b", l.ln3_b);
  return l;
}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& h_enc,
                             const AttentionMask& causal) const {
  Tensor n1 = layer_norm(x, ln1_g, ln1_b);
  Tensor h = add(x, self_attn.forward(n1, n1, &causal));
  Tensor n2 = layer_norm(h, ln2_g, ln2_b);
  h = add(h, cross_attn.forward(n2, h_enc, nullptr));
  return add(h, ffn.forward(layer_norm(h, ln3_g, ln3_b)));
}

Decoder Decoder::init(const DecoderConfig& cfg, int d_model, int vocab_size,
                      Rng& rng, const ParamSink& sink) {
  cfg.validate(d_model);
  Decoder dec;
  dec.cfg = cfg;
  dec.d_model = d_model;
  dec.vocab_ext = vocab_size + 2;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  dec.embedding =
      Tensor::uniform({dec.vocab_ext, d_model}, -bound, bound, rng, true);
  sink("dec.embedding", dec.embedding);
  for (int i = 0; i < cfg.n_layers; ++i)
    dec.layers.push_back(DecoderLayer::init(d_model, cfg.n_heads, cfg.ffn_dim,
                                            rng, "dec.layer" + std::to_string(i),
                                            sink));
  dec.final_ln_g = Tensor::full({d_model}, 1.0, true);
  dec.final_ln_b = Tensor::zeros({d_model}, true);
  sink("dec.final_ln_g", dec.final_ln_g);
  sink("dec.final_ln_b", dec.final_ln_b);
  dec.out_w = Tensor::uniform({d_model, dec.vocab_ext}, -bound, bound, rng, true);
  dec.out_b = Tensor::zeros({dec.vocab_ext}, true);
  sink("dec.out_w", dec.out_w);
  sink("dec.out_b", dec.out_b);
  return dec;
}

Tensor Decoder::forward_logprobs(const Tensor& h_enc,
                                 const TokenSeq& input_tokens) const {
  if (input_tokens.empty())
    throw std::invalid_argument("Decoder: empty input token sequence");
  const int len = static_cast<int>(input_tokens.size());
  Tensor x = add(gather_rows(embedding, input_tokens),
                 positional_encoding(len, d_model));
  const AttentionMask causal = AttentionMask::causal(len);
  for (const auto& layer : layers) x = layer.forward(x, h_enc, causal);
  x = layer_norm(x, final_ln_g, final_ln_b);
  return log_softmax(add_row(matmul(x, out_w), out_b));
}

Tensor attention_loss(const Decoder& dec, const Tensor& h_enc,
                      const TokenSeq& target_asr) {
  if (target_asr.empty())
    throw std::invalid_argument("attention_loss: empty target");
  TokenSeq input;
  input.push_back(dec.sos_id());
  input.insert(input.end(), target_asr.begin(), target_asr.end());
  TokenSeq gold(target_asr);
  gold.push_back(dec.eos_id());
  return nll_loss(dec.forward_logprobs(h_enc, input), gold);
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("LossConfig: lambda outside [0, 1]");
  if (!(w >= 0.0 && w <= 1.0))
    throw std::invalid_argument("LossConfig: w outside [0, 1]");
}

std::optional<double> LossBreakdown::l_lid() const {
  double acc = 0.0;
  int n = 0;
  for (size_t i = 0; i < tap_losses.size(); ++i) {
    if (tap_kinds[i] != TapKind::asr) {
      acc += tap_losses[i].value();
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return acc / n;
}

std::vector<double> LossBreakdown::l_inter() const {
  std::vector<double> out;
  for (size_t i = 0; i < tap_losses.size(); ++i)
    if (tap_kinds[i] == TapKind::asr) out.push_back(tap_losses[i].value());
  return out;
}

Tensor hier_loss(const std::vector<Tensor>& tap_losses, ConditioningMode mode) {
  if (tap_losses.empty())
    throw std::invalid_argument("hier_loss: need at least one tap loss");
  (void)mode;  // the hier composition and the sc/lid mean coincide: the
               // first tap's loss (L_lid in hier modes) is averaged with
               // the remaining tap losses over K either way.
  Tensor acc = tap_losses[0];
  for (size_t i = 1; i < tap_losses.size(); ++i) acc = add(acc, tap_losses[i]);
  return scale(acc, 1.0 / static_cast<double>(tap_losses.size()));
}

LossBreakdown total_loss(const Tensor& l_att, const Tensor& l_ctc_enc,
                         const std::vector<Tensor>& tap_losses,
                         const std::vector<TapKind>& tap_kinds,
                         const LossConfig& cfg, ConditioningMode mode) {
  cfg.validate();
  if (tap_losses.size() != tap_kinds.size())
    throw std::invalid_argument("total_loss: tap loss/kind count mismatch");
  LossBreakdown b;
  b.l_att = l_att;
  b.l_ctc_enc = l_ctc_enc;
  b.tap_losses = tap_losses;
  b.tap_kinds = tap_kinds;
  if (mode == ConditioningMode::none || tap_losses.empty()) {
    b.l_total = add(scale(l_att, 1.0 - cfg.lambda), scale(l_ctc_enc, cfg.lambda));
  } else {
    b.l_hier = hier_loss(tap_losses, mode);
    Tensor ctc_all =
        add(scale(l_ctc_enc, 1.0 - cfg.w), scale(b.l_hier, cfg.w));
    b.l_total = add(scale(l_att, 1.0 - cfg.lambda), scale(ctc_all, cfg.lambda));
  }
  return b;
}

}  // namespace hierctc
