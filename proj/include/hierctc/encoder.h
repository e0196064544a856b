// hierctc/encoder.h

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

#ifndef HIERCTC_ENCODER_H_
#define HIERCTC_ENCODER_H_

#include <functional>
#include <string>
#include <vector>

#include "hierctc/tensor.h"

namespace hierctc {

enum class ConditioningMode { none, sc_ctc, lid_utt, lid_tok, hier_lid_utt, hier_lid_tok };
enum class TapKind { asr, lid_utt, lid_tok };

std::string to_string(ConditioningMode mode);
ConditioningMode mode_from_string(const std::string& s);
std::string to_string(TapKind kind);

// What each intermediate tap is trained to predict under a mode:
// sc_ctc taps all carry ASR targets, lid_* taps all carry LID targets,
// and hier modes give the first tap the LID target and the rest ASR.
std::vector<TapKind> tap_kinds_for(ConditioningMode mode, int n_taps);

struct EncoderConfig {
  int n_layers = 6;
  int d_model = 64;
  int n_heads = 4;
  int ffn_dim = 128;
  std::vector<int> tap_layers = {2, 4};  // subset of [1, n_layers-1]
  ConditioningMode mode = ConditioningMode::none;
  bool share_heads = false;

  void validate() const;  // throws std::invalid_argument
};

// Parameter registration callback: (name, tensor).
using ParamSink = std::function<void(const std::string&, const Tensor&)>;

struct AttentionBlock {
  int n_heads = 1;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionBlock init(int d_model, int n_heads, Rng& rng,
                             const std::string& prefix, const ParamSink& sink);
  // Multi-head attention; kv_in may differ from q_in (cross attention).
  Tensor forward(const Tensor& q_in, const Tensor& kv_in,
                 const AttentionMask* mask) const;
};

struct FeedForward {
  Tensor w1, b1, w2, b2;

  static FeedForward init(int d_model, int ffn_dim, Rng& rng,
                          const std::string& prefix, const ParamSink& sink);
  Tensor forward(const Tensor& x) const;
};

// Pre-norm Transformer layer: x + Attn(LN(x)), then x + FFN(LN(x)).
struct EncoderLayer {
  AttentionBlock attn;
  FeedForward ffn;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;

  static EncoderLayer init(int d_model, int n_heads, int ffn_dim, Rng& rng,
                           const std::string& prefix, const ParamSink& sink);
  Tensor forward(const Tensor& x) const;
};

// Intermediate CTC tap: posterior head plus the conditioning projection
// that feeds the next layer. Nrm parameters are fresh, not reused from
// any encoder layer.
struct TapBlock {
  Tensor head_w, head_b;  // shared across taps when share_heads
  Tensor nrm_g, nrm_b;
  Tensor lin_w, lin_b;

  // log softmax(h.head_w + head_b)
  Tensor tap_head(const Tensor& h) const;
  // Nrm(h_tap) + Lin(softmax-normalized z_tap); z_tap is log posteriors.
  Tensor condition_combine(const Tensor& h_tap, const Tensor& z_tap) const;
};

struct EncoderOutput {
  Tensor h_final;                     // T x d_model
  std::vector<Tensor> tap_posteriors; // each T x vocab_size (log)
  std::vector<TapKind> tap_kinds;
};

struct Encoder {
  EncoderConfig cfg;
  int input_dim = 0;
  int vocab_size = 0;

  Tensor in_w, in_b;
  std::vector<EncoderLayer> layers;
  std::vector<TapBlock> taps;  // empty in mode none
  Tensor final_ln_g, final_ln_b;
  Tensor final_head_w, final_head_b;  // Eq-final CTC head, never shared

  static Encoder init(const EncoderConfig& cfg, int input_dim, int vocab_size,
                      Rng& rng, const ParamSink& sink);

  // Input projection plus sinusoidal absolute positions.
  Tensor embed(const Tensor& features) const;
  // One layer step, k in [1, n_layers]; exposed so tests can rebuild the
  // wiring reference construction.
  Tensor layer_forward(int k, const Tensor& x) const;

  EncoderOutput forward(const Tensor& features) const;

  // Final CTC log posteriors over h_final.
  Tensor final_posterior(const Tensor& h_final) const;
};

// Sinusoidal absolute positions, constant [T x d].
Tensor positional_encoding(int t_len, int d_model);

}  // namespace hierctc

#endif  // HIERCTC_ENCODER_H_
