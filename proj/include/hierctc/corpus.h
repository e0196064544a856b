// hierctc/corpus.h

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

#ifndef HIERCTC_CORPUS_H_
#define HIERCTC_CORPUS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hierctc/tensor.h"

namespace hierctc {

// Synthetic stand-in for one language: every character maps to a mean
// feature vector; utterance features are noisy repeats of those vectors.
struct LanguageSpec {
  std::string lid;
  std::string alphabet;                              // distinct characters
  std::map<char, std::vector<double>> emission;      // char -> unit vector in R^D
  std::string group;                                 // region-group tag
  std::optional<std::string> confusable_with;        // emission is a perturbed copy
  bool space_delimited = false;                      // drives WER vs CER in MER
};

struct Utterance {
  Tensor features;  // T x D
  std::string text;
  std::string lid;
  std::string split;  // train | dev | test
};

// Deterministic language set: unit-norm emissions with pairwise cosine
// <= 0.5 across non-confusable languages; each confusable pair shares
// per-character emissions up to a perturbation with cosine >= 0.95.
std::vector<LanguageSpec> gen_language_set(int n_langs, int n_confusable_pairs,
                                           int alphabet_size, int feat_dim,
                                           std::uint64_t seed);

// frames_per_char copies of emission(c) plus Gaussian noise per character,
// bracketed by 3 leading and 3 trailing silence frames of zero-mean noise.
Utterance synthesize_utterance(const LanguageSpec& spec, const std::string& text,
                               int frames_per_char, double noise_sigma,
                               std::uint64_t seed);

struct CorpusConfig {
  int utterances_per_lang = 200;
  int len_min = 3;
  int len_max = 8;
  int frames_per_char = 2;
  double noise_sigma = 0.1;
};

// Per-language 80/10/10 train/dev/test split by utterance index; every
// utterance satisfies the CTC achievability margin T >= 2*len(asr) + 1.
std::vector<Utterance> gen_corpus(const std::vector<LanguageSpec>& specs,
                                  const CorpusConfig& cfg, std::uint64_t seed);

// UTF-8 JSON-lines, one utterance per line with fields features (array of
// arrays, row-major T x D), text, lid, split. Round trips bit-exactly.
void write_dataset(const std::string& path, const std::vector<Utterance>& utts);
std::vector<Utterance> read_dataset(const std::string& path);

void write_language_set(const std::string& path,
                        const std::vector<LanguageSpec>& specs);
std::vector<LanguageSpec> read_language_set(const std::string& path);

}  // namespace hierctc

#endif  // HIERCTC_CORPUS_H_
