// hierctc/train.h

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

#ifndef HIERCTC_TRAIN_H_
#define HIERCTC_TRAIN_H_

#include <map>
#include <string>
#include <vector>

#include "hierctc/eval.h"

namespace hierctc {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct TrainConfig {
  std::uint64_t seed = 7;
  int epochs = 6;
  int batch_size = 16;
  int warmup_steps = 100;           // inverse-square-root schedule
  double peak_lr = 3e-3;
  AdamConfig adam;
  LossConfig loss;
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::string corpus_path;
  std::string language_set_path;
  std::string unit = "char";
  std::string out_dir;
  int keep_checkpoints = 3;
  int eval_beam = 10;
  double eval_ctc_weight = 0.3;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_file(const std::string& path);
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_cer = 0.0;
  double dev_lid = 0.0;
};

struct TrainResult {
  std::string run_dir;
  std::vector<std::string> kept_checkpoints;  // best dev score, 3 by default
  std::string avg_checkpoint;
  std::vector<EpochStats> epochs;
  long long skipped_ctc_terms = 0;
  EvalReport test_report;  // beam-decoded test split of the averaged model
};

// Full run: train with Adam under the warmup schedule, keep the best-dev
// checkpoints, average them, beam-evaluate the test split, and leave
// config/vocab/checkpoints/loss.csv/eval.json in out_dir. Single-threaded
// and bit-exactly reproducible for a fixed config.
TrainResult train(const TrainConfig& cfg);

struct DecodeOptions {
  std::string split = "test";
  int beam = 10;
  double lambda_dec = 0.3;
};

std::map<std::string, LangMeta> lang_meta_from(
    const std::vector<LanguageSpec>& specs);

std::vector<ScoredUtterance> decode_split(const Model& model,
                                          const std::vector<Utterance>& utts,
                                          const Vocab& vocab,
                                          const DecodeOptions& opts);

EvalReport evaluate_model(const Model& model, const std::vector<Utterance>& utts,
                          const Vocab& vocab,
                          const std::map<std::string, LangMeta>& langs,
                          const DecodeOptions& opts);

struct MatrixRow {
  std::string mode;
  bool ok = false;
  double cer = 0.0;
  double mer = 0.0;
  double lid_acc = 0.0;
  std::optional<double> int_lid_acc;
  std::optional<double> int_lid_acc_nonconfusable;
  std::string error;
};

// Trains every mode with the shared seed and corpus, beam-evaluates each,
// and writes <out_dir>/matrix.csv. A failing member run is recorded and
// the matrix continues.
std::vector<MatrixRow> run_experiment_matrix(const TrainConfig& base,
                                             const std::vector<ConditioningMode>& modes,
                                             const std::string& out_dir);

}  // namespace hierctc

#endif  // HIERCTC_TRAIN_H_
