// hierctc/checks.h

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

#ifndef HIERCTC_CHECKS_H_
#define HIERCTC_CHECKS_H_

#include <cstdint>

#include "hierctc/model.h"

namespace hierctc {

struct CtcSweepResult {
  double max_deviation = 0.0;
  long long cases = 0;
};

// Dynamic-programming loss against the enumeration oracle, over every
// target with S <= max_s for each vocabulary size up to max_vocab and
// each T up to max_t, with `draws` random posterior draws per setting.
CtcSweepResult ctc_oracle_sweep(int max_s, int max_vocab, int max_t, int draws,
                                std::uint64_t seed);

struct FullGradCheckResult {
  double max_rel_err = 0.0;
  std::int64_t param_count = 0;
};

// Finite-difference check of the complete hierarchical objective on a
// 2-layer toy model (under 5k parameters), over every parameter.
FullGradCheckResult full_loss_grad_check(std::uint64_t seed);

// The toy fixture behind full_loss_grad_check, reusable in tests.
struct ToyFixture {
  Model model;
  Vocab vocab;
  Tensor features;
  LabelBundle labels;
  LossConfig loss;
};
ToyFixture make_toy_fixture(std::uint64_t seed, ConditioningMode mode,
                            int n_layers = 2, std::vector<int> taps = {1});

}  // namespace hierctc

#endif  // HIERCTC_CHECKS_H_
