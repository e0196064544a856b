// encoder.cc

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

#include "hierctc/encoder.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hierctc {

namespace {

Tensor init_weight(int fan_in, int fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform({fan_in, fan_out}, -bound, bound, rng, /*param=*/true);
}

}  // namespace

std::string to_string(ConditioningMode mode) {
  switch (mode) {
    case ConditioningMode::none: return "none";
    case ConditioningMode::sc_ctc: return "sc_ctc";
    case ConditioningMode::lid_utt: return "lid_utt";
    case ConditioningMode::lid_tok: return "lid_tok";
    case ConditioningMode::hier_lid_utt: return "hier_lid_utt";
    case ConditioningMode::hier_lid_tok: return "hier_lid_tok";
  }
  return "none";
}

ConditioningMode mode_from_string(const std::string& s) {
  if (s == "none") return ConditioningMode::none;
  if (s == "sc_ctc") return ConditioningMode::sc_ctc;
  if (s == "lid_utt") return ConditioningMode::lid_utt;
  if (s == "lid_tok") return ConditioningMode::lid_tok;
  if (s == "hier_lid_utt") return ConditioningMode::hier_lid_utt;
  if (s == "hier_lid_tok") return ConditioningMode::hier_lid_tok;
  throw std::invalid_argument("unknown conditioning mode: " + s);
}

std::string to_string(TapKind kind) {
  switch (kind) {
    case TapKind::asr: return "asr";
    case TapKind::lid_utt: return "lid_utt";
    case TapKind::lid_tok: return "lid_tok";
  }
  return "asr";
}

std::vector<TapKind> tap_kinds_for(ConditioningMode mode, int n_taps) {
  std::vector<TapKind> kinds;
  if (mode == ConditioningMode::none) return kinds;
  for (int i = 0; i < n_taps; ++i) {
    switch (mode) {
      case ConditioningMode::sc_ctc:
        kinds.push_back(TapKind::asr);
        break;
      case ConditioningMode::lid_utt:
        kinds.push_back(TapKind::lid_utt);
        break;
      case ConditioningMode::lid_tok:
        kinds.push_back(TapKind::lid_tok);
        break;
      case ConditioningMode::hier_lid_utt:
        kinds.push_back(i == 0 ? TapKind::lid_utt : TapKind::asr);
        break;
      case ConditioningMode::hier_lid_tok:
        kinds.push_back(i == 0 ? TapKind::lid_tok : TapKind::asr);
        break;
      default:
        break;
    }
  }
  return kinds;
}

void EncoderConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || ffn_dim < 1)
    throw std::invalid_argument("EncoderConfig: nonpositive dimension");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("EncoderConfig: d_model not divisible by n_heads");
  int prev = 0;
  for (int t : tap_layers) {
    if (t < 1 || t > n_layers - 1)
      throw std::invalid_argument("EncoderConfig: tap layer " + std::to_string(t) +
                                  " outside [1, n_layers-1]");
    if (t <= prev)
      throw std::invalid_argument("EncoderConfig: tap layers must be strictly increasing");
    prev = t;
  }
  if (mode != ConditioningMode::none && tap_layers.empty())
    throw std::invalid_argument("EncoderConfig: conditioning mode needs tap layers");
}

AttentionBlock AttentionBlock::init(int d_model, int n_heads, Rng& rng,
                                    const std::string& prefix,
                                    const ParamSink& sink) {
  AttentionBlock b;
  b.n_heads = n_heads;
  b.wq = init_weight(d_model, d_model, rng);
  b.bq = Tensor::zeros({d_model}, true);
  b.wk = init_weight(d_model, d_model, rng);
  b.bk = Tensor::zeros({d_model}, true);
  b.wv = init_weight(d_model, d_model, rng);
  b.bv = Tensor::zeros({d_model}, true);
  b.wo = init_weight(d_model, d_model, rng);
  b.bo = Tensor::zeros({d_model}, true);
  sink(prefix + ".wq", b.wq);
  sink(prefix + ".bq", b.bq);
  sink(prefix + ".wk", b.wk);
  sink(prefix + ".bk", b.bk);
  sink(prefix + ".wv", b.wv);
  sink(prefix + ".bv", b.bv);
  sink(prefix + ".wo", b.wo);
  sink(prefix + ".bo", b.bo);
  return b;
}

Tensor AttentionBlock::forward(const Tensor& q_in, const Tensor& kv_in,
                               const AttentionMask* mask) const {
  const Tensor q = add_row(matmul(q_in, wq), bq);
  const Tensor k = add_row(matmul(kv_in, wk), bk);
  const Tensor v = add_row(matmul(kv_in, wv), bv);
  const int d = q.cols();
  const int dh = d / n_heads;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    const int lo = h * dh, hi = lo + dh;
    heads.push_back(scaled_dot_attention(slice_cols(q, lo, hi),
                                         slice_cols(k, lo, hi),
                                         slice_cols(v, lo, hi), mask));
  }
  return add_row(matmul(concat_cols(heads), wo), bo);
}

FeedForward FeedForward::init(int d_model, int ffn_dim, Rng& rng,
                              const std::string& prefix, const ParamSink& sink) {
  FeedForward f;
  f.w1 = init_weight(d_model, ffn_dim, rng);
  f.b1 = Tensor::zeros({ffn_dim}, true);
  f.w2 = init_weight(ffn_dim, d_model, rng);
  f.b2 = Tensor::zeros({d_model}, true);
  sink(prefix + ".w1", f.w1);
  sink(prefix + ".b1", f.b1);
  sink(prefix + ".w2", f.w2);
  sink(prefix + ".b2", f.b2);
  return f;
}

Tensor FeedForward::forward(const Tensor& x) const {
  return add_row(matmul(gelu(add_row(matmul(x, w1), b1)), w2), b2);
}

EncoderLayer EncoderLayer::init(int d_model, int n_heads, int ffn_dim, Rng& rng,
                                const std::string& prefix, const ParamSink& sink) {
  EncoderLayer l;
  l.attn = AttentionBlock::init(d_model, n_heads, rng, prefix + ".attn", sink);
  l.ffn = FeedForward::init(d_model, ffn_dim, rng, prefix + ".ffn", sink);
  l.ln1_g = Tensor::full({d_model}, 1.0, true);
  l.ln1_b = Tensor::zeros({d_model}, true);
  l.ln2_g = Tensor::full({d_model}, 1.0, true);
  l.ln2_b = Tensor::zeros({d_model}, true);
  sink(prefix + ".ln1_g", l.ln1_g);
  sink(prefix + ".ln1_b", l.ln1_b);
  sink(prefix + ".ln2_g", l.ln2_g);
  sink(prefix + ".ln2_b", l.ln2_b);
  return l;
}

Tensor EncoderLayer::forward(const Tensor& x) const {
  Tensor h = add(x, attn.forward(layer_norm(x, ln1_g, ln1_b),
                                 layer_norm(x, ln1_g, ln1_b), nullptr));
  return add(h, ffn.forward(layer_norm(h, ln2_g, ln2_b)));
}

Tensor TapBlock::tap_head(const Tensor& h) const {
  return log_softmax(add_row(matmul(h, head_w), head_b));
}

Tensor TapBlock::condition_combine(const Tensor& h_tap, const Tensor& z_tap) const {
  // z_tap is in log domain; conditioning consumes the probability
  // distribution, so exponentiate before projecting.
  const Tensor probs = exp(z_tap);
  return add(layer_norm(h_tap, nrm_g, nrm_b),
             add_row(matmul(probs, lin_w), lin_b));
}

Encoder Encoder::init(const EncoderConfig& cfg, int input_dim, int vocab_size,
                      Rng& rng, const ParamSink& sink) {
  cfg.validate();
  if (input_dim < 1 || vocab_size < 2)
    throw std::invalid_argument("Encoder: bad input_dim or vocab_size");
  Encoder enc;
  enc.cfg = cfg;
  enc.input_dim = input_dim;
  enc.vocab_size = vocab_size;
  enc.in_w = init_weight(input_dim, cfg.d_model, rng);
  enc.in_b = Tensor::zeros({cfg.d_model}, true);
  sink("enc.in.w", enc.in_w);
  sink("enc.in.b", enc.in_b);
  for (int i = 0; i < cfg.n_layers; ++i)
    enc.layers.push_back(EncoderLayer::init(cfg.d_model, cfg.n_heads, cfg.ffn_dim,
                                            rng, "enc.layer" + std::to_string(i),
                                            sink));
  if (cfg.mode != ConditioningMode::none) {
    Tensor shared_w, shared_b;
    if (cfg.share_heads) {
      shared_w = init_weight(cfg.d_model, vocab_size, rng);
      shared_b = Tensor::zeros({vocab_size}, true);
      sink("enc.tap_head.w", shared_w);
      sink("enc.tap_head.b", shared_b);
    }
    for (size_t i = 0; i < cfg.tap_layers.size(); ++i) {
      TapBlock tap;
      const std::string prefix = "enc.tap" + std::to_string(i);
      if (cfg.share_heads) {
        tap.head_w = shared_w;
        tap.head_b = shared_b;
      } else {
        tap.head_w = init_weight(cfg.d_model, vocab_size, rng);
        tap.head_b = Tensor::zeros({vocab_size}, true);
        sink(prefix + ".head_w", tap.head_w);
        sink(prefix + ".head_b", tap.head_b);
      }
      tap.nrm_g = Tensor::full({cfg.d_model}, 1.0, true);
      tap.nrm_b = Tensor::zeros({cfg.d_model}, true);
      tap.lin_w = init_weight(vocab_size, cfg.d_model, rng);
      tap.lin_b = Tensor::zeros({cfg.d_model}, true);
      sink(prefix + ".nrm_g", tap.nrm_g);
      sink(prefix + ".nrm_b", tap.nrm_b);
      sink(prefix + ".lin_w", tap.lin_w);
      sink(prefix + ".lin_b", tap.lin_b);
      enc.taps.push_back(std::move(tap));
    }
  }
  enc.final_ln_g = Tensor::full({cfg.d_model}, 1.0, true);
  enc.final_ln_b = Tensor::zeros({cfg.d_model}, true);
  sink("enc.final_ln_g", enc.final_ln_g);
  sink("enc.final_ln_b", enc.final_ln_b);
  enc.final_head_w = init_weight(cfg.d_model, vocab_size, rng);
  enc.final_head_b = Tensor::zeros({vocab_size}, true);
  sink("enc.head.w", enc.final_head_w);
  sink("enc.head.b", enc.final_head_b);
  return enc;
}

Tensor positional_encoding(int t_len, int d_model) {
  std::vector<double> pe(static_cast<size_t>(t_len) * d_model);
  for (int t = 0; t < t_len; ++t) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle = t * std::exp(-std::log(10000.0) * i / d_model);
      pe[static_cast<size_t>(t) * d_model + i] = std::sin(angle);
      if (i + 1 < d_model)
        pe[static_cast<size_t>(t) * d_model + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({t_len, d_model}, std::move(pe));
}

Tensor Encoder::embed(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != input_dim)
    throw std::invalid_argument("Encoder: features must be T x " +
                                std::to_string(input_dim) + ", got " +
                                shape_str(features.shape()));
  if (features.rows() == 0)
    throw std::invalid_argument("Encoder: empty input (T = 0)");
  return add(add_row(matmul(features, in_w), in_b),
             positional_encoding(features.rows(), cfg.d_model));
}

Tensor Encoder::layer_forward(int k, const Tensor& x) const {
  return layers.at(k - 1).forward(x);
}

EncoderOutput Encoder::forward(const Tensor& features) const {
  EncoderOutput out;
  out.tap_kinds = tap_kinds_for(cfg.mode, static_cast<int>(cfg.tap_layers.size()));
  Tensor x = embed(features);
  size_t next_tap = 0;
  for (int k = 1; k <= cfg.n_layers; ++k) {
    x = layer_forward(k, x);
    if (cfg.mode != ConditioningMode::none && next_tap < cfg.tap_layers.size() &&
        cfg.tap_layers[next_tap] == k) {
      const TapBlock& tap = taps[next_tap];
      Tensor z = tap.tap_head(x);
      out.tap_posteriors.push_back(z);
      x = tap.condition_combine(x, z);
      ++next_tap;
    }
  }
  out.h_final = layer_norm(x, final_ln_g, final_ln_b);
  return out;
}

Tensor Encoder::final_posterior(const Tensor& h_final) const {
  return log_softmax(add_row(matmul(h_final, final_head_w), final_head_b));
}

}  // namespace hierctc
