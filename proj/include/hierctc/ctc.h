// hierctc/ctc.h

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

#ifndef HIERCTC_CTC_H_
#define HIERCTC_CTC_H_

#include <vector>

#include "hierctc/tensor.h"

namespace hierctc {

// Blank has the fixed token id 0 in every vocabulary.
inline constexpr int kBlankId = 0;

using TokenSeq = std::vector<int>;

// Merges adjacent repeats, then deletes blanks.
TokenSeq collapse(const TokenSeq& frames);

// Minimum number of frames a target needs: S plus one extra frame per
// adjacent repeated label.
int min_frames(const TokenSeq& target);

struct CtcLossResult {
  Tensor neg_log_prob;  // scalar, nats; graph-connected unless unachievable
  Tensor posterior;     // the T x C log frame posteriors that were scored
  bool achievable = true;
};

// Exact CTC negative log-likelihood via the blank-interleaved forward
// recursion in log space. The gradient w.r.t. log_posteriors is computed
// with the backward (beta) recursion and injected as a custom rule.
// Unachievable targets yield +infinity loss with zero gradient, flagged.
CtcLossResult ctc_loss(const Tensor& log_posteriors, const TokenSeq& target);

// Independent oracle: enumerates all (|V|+1)^T frame sequences and sums
// the probabilities of those collapsing to target. Refuses instances
// beyond T <= 8 or |V| > 4.
double ctc_brute_force(const Tensor& log_posteriors, const TokenSeq& target);

// Per-frame argmax (ties to the lowest token id), then collapse.
TokenSeq ctc_greedy_decode(const Tensor& log_posteriors);

}  // namespace hierctc

#endif  // HIERCTC_CTC_H_
