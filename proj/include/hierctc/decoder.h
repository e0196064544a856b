// hierctc/decoder.h

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

#ifndef HIERCTC_DECODER_H_
#define HIERCTC_DECODER_H_

#include <optional>
#include <vector>

#include "hierctc/ctc.h"
#include "hierctc/encoder.h"

namespace hierctc {

struct DecoderConfig {
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 128;

  void validate(int d_model) const;
};

// Pre-norm Transformer decoder layer with causal self attention and
// cross attention over the encoder output.
struct DecoderLayer {
  AttentionBlock self_attn;
  AttentionBlock cross_attn;
  FeedForward ffn;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;

  static DecoderLayer init(int d_model, int n_heads, int ffn_dim, Rng& rng,
                           const std::string& prefix, const ParamSink& sink);
  Tensor forward(const Tensor& x, const Tensor& h_enc,
                 const AttentionMask& causal) const;
};

// Autoregressive attention decoder over the joint vocabulary extended
// with start/end sentinels.
struct Decoder {
  DecoderConfig cfg;
  int d_model = 0;
  int vocab_ext = 0;  // vocab_size + 2 sentinels
  Tensor embedding;   // vocab_ext x d_model
  std::vector<DecoderLayer> layers;
  Tensor final_ln_g, final_ln_b;
  Tensor out_w, out_b;

  int sos_id() const { return vocab_ext - 2; }
  int eos_id() const { return vocab_ext - 1; }

  static Decoder init(const DecoderConfig& cfg, int d_model, int vocab_size,
                      Rng& rng, const ParamSink& sink);

  // Next-token log probabilities, one row per input position. The input
  // is the teacher-forced prefix [sos, y_1, ..., y_L].
  Tensor forward_logprobs(const Tensor& h_enc,
                          const TokenSeq& input_tokens) const;
};

// Teacher-forced negative log-likelihood with start/end sentinels; the
// target carries its prepended LID token.
Tensor attention_loss(const Decoder& dec, const Tensor& h_enc,
                      const TokenSeq& target_asr);

struct LossConfig {
  double lambda = 0.3;  // CTC weight
  double w = 0.5;       // intermediate weight

  void validate() const;  // both must lie in [0, 1]
};

struct LossBreakdown {
  Tensor l_att;
  Tensor l_ctc_enc;
  Tensor l_hier;   // undefined in mode none
  Tensor l_total;
  std::vector<Tensor> tap_losses;
  std::vector<TapKind> tap_kinds;

  // Mean of LID-kind tap losses (the L_lid summary), absent without one.
  std::optional<double> l_lid() const;
  // Values of the ASR-kind (inter) tap losses, in tap order.
  std::vector<double> l_inter() const;
};

// Hierarchy objective over the ordered tap losses: the LID tap (first in
// hier modes) averaged together with the remaining self-conditioned
// losses; degenerates to the plain InterCTC mean in sc/lid modes.
Tensor hier_loss(const std::vector<Tensor>& tap_losses, ConditioningMode mode);

// l_total = (1-lambda) l_att + lambda ((1-w) l_ctc_enc + w l_hier);
// mode none drops the hierarchical term entirely.
LossBreakdown total_loss(const Tensor& l_att, const Tensor& l_ctc_enc,
                         const std::vector<Tensor>& tap_losses,
                         const std::vector<TapKind>& tap_kinds,
                         const LossConfig& cfg, ConditioningMode mode);

}  // namespace hierctc

#endif  // HIERCTC_DECODER_H_
