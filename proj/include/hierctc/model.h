// hierctc/model.h

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

#ifndef HIERCTC_MODEL_H_
#define HIERCTC_MODEL_H_

#include <string>
#include <utility>
#include <vector>

#include "hierctc/decoder.h"
#include "hierctc/encoder.h"
#include "hierctc/labels.h"

namespace hierctc {

struct ModelConfig {
  int input_dim = 16;
  int vocab_size = 0;
  int n_lid = 0;
  EncoderConfig encoder;
  DecoderConfig decoder;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Per-utterance forward results needed to assemble the training
// objective; CTC results keep their achievability flags so batches can
// skip unattainable targets.
struct UtteranceLosses {
  Tensor l_att;
  CtcLossResult enc_ctc;
  std::vector<CtcLossResult> tap_ctc;
  std::vector<TapKind> tap_kinds;
  EncoderOutput enc_out;
};

struct Model {
  ModelConfig cfg;
  Encoder encoder;
  Decoder decoder;
  // Named parameters in registration order; names are stable across
  // builds of the same config.
  std::vector<std::pair<std::string, Tensor>> params;

  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  std::int64_t param_count() const;
  void zero_grads();

  UtteranceLosses forward_losses(const Tensor& features,
                                 const LabelBundle& labels) const;
  // Convenience single-utterance objective (Eq-faithful composition).
  LossBreakdown compute_loss(const Tensor& features, const LabelBundle& labels,
                             const LossConfig& loss_cfg) const;

  // Flat binary archive of named tensors plus the config as JSON.
  void save(const std::string& path) const;
  static Model load(const std::string& path);
};

}  // namespace hierctc

#endif  // HIERCTC_MODEL_H_
