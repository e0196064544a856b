// hierctc/eval.h

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

#ifndef HIERCTC_EVAL_H_
#define HIERCTC_EVAL_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hierctc/model.h"

namespace hierctc {

struct Hypothesis {
  TokenSeq tokens;
  double score_att = 0.0;
  double score_ctc = 0.0;
  double score_joint = 0.0;  // (1-lambda_dec) att + lambda_dec ctc
  bool forced_close = false; // closed at max_len without the end sentinel
};

// log P(the collapsed alignment begins with prefix), via the prefix DP
// over the frame posteriors. Empty prefix scores 0; impossible prefixes
// score -infinity.
double ctc_prefix_score(const Tensor& log_posteriors, const TokenSeq& prefix);

// log P(the collapsed alignment equals seq exactly) -- the prefix DP
// with end handling. Matches -ctc_loss through an independent recursion.
double ctc_sequence_score(const Tensor& log_posteriors, const TokenSeq& seq);

// Label-synchronous joint CTC/attention beam search. Deterministic:
// ties break toward the lexicographically smaller token sequence.
std::vector<Hypothesis> joint_beam_search(const Model& model,
                                          const Tensor& features,
                                          int beam = 10,
                                          double lambda_dec = 0.3,
                                          int max_len = -1);

// Arithmetic mean of every parameter tensor; configs must be identical.
// Accumulation happens in extended precision so averaging identical
// checkpoints reproduces them exactly.
Model checkpoint_average(const std::vector<std::string>& paths);

// Levenshtein distance over arbitrary token vectors.
int edit_distance(const std::vector<std::string>& ref,
                  const std::vector<std::string>& hyp);
int edit_distance_chars(const std::string& ref, const std::string& hyp);

struct LangMeta {
  std::string group;
  bool space_delimited = false;
  bool confusable = false;
};

// One decoded utterance paired with its reference.
struct ScoredUtterance {
  std::string ref_text;
  std::string ref_lid;
  std::string hyp_text;
  std::optional<std::string> hyp_lid;      // decoded leading LID token
  std::optional<std::string> int_lid;      // intermediate-head prediction
  bool forced_close = false;
};

struct LangStats {
  long long char_errs = 0, char_ref = 0;
  long long word_errs = 0, word_ref = 0;
  long long mer_errs = 0, mer_ref = 0;
  long long lid_correct = 0;
  long long int_lid_correct = 0, int_lid_total = 0;
  long long n_utts = 0;

  double cer() const { return char_ref ? double(char_errs) / char_ref : 0.0; }
  double wer() const { return word_ref ? double(word_errs) / word_ref : 0.0; }
  double mer() const { return mer_ref ? double(mer_errs) / mer_ref : 0.0; }
  double lid_acc() const { return n_utts ? double(lid_correct) / n_utts : 0.0; }
  std::optional<double> int_lid_acc() const {
    if (!int_lid_total) return std::nullopt;
    return double(int_lid_correct) / int_lid_total;
  }
  void absorb(const LangStats& other);
};

struct EvalReport {
  LangStats corpus;
  std::map<std::string, LangStats> per_lang;
  std::map<std::string, LangStats> per_group;
  // rows: true lid; cols: predicted lid, plus "(none)" for missing.
  std::map<std::string, std::map<std::string, long long>> confusion;
  long long forced_closures = 0;

  std::string to_json() const;
  std::string to_table() const;
  std::string confusion_csv() const;
};

// Micro-averaged metrics: CER over characters (LID stripped, spaces
// count), WER over whitespace tokens, MER selecting per language.
EvalReport build_report(const std::vector<ScoredUtterance>& utts,
                        const std::map<std::string, LangMeta>& langs);

// Intermediate LID prediction: greedy-decode the first tap's posterior,
// majority vote over the collapsed LID tokens (ties to the lowest id).
std::optional<std::string> intermediate_lid(const EncoderOutput& enc_out,
                                            const Vocab& vocab);

}  // namespace hierctc

#endif  // HIERCTC_EVAL_H_
