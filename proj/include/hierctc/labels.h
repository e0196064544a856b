// hierctc/labels.h

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

#ifndef HIERCTC_LABELS_H_
#define HIERCTC_LABELS_H_

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hierctc/corpus.h"
#include "hierctc/ctc.h"

namespace hierctc {

enum class Unit { chars, words };

// Token inventory. Ids are dense: blank = 0, then LID tokens (sorted
// lexically), then text tokens (sorted lexically), then unknown last.
struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  int n_lid = 0;
  Unit unit = Unit::chars;

  int size() const { return static_cast<int>(tokens.size()); }
  int blank_id() const { return kBlankId; }
  int unk_id() const { return size() - 1; }
  bool is_lid(int id) const { return id >= 1 && id <= n_lid; }
  // Id of the "[lid]" token, or -1 when absent.
  int lid_token_id(const std::string& lid) const;
  // Language name of an LID token id, brackets stripped.
  std::string lid_name(int id) const;

  // One token per line, line number = id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path, Unit unit);
};

// The three label schemes attached to one utterance.
struct LabelBundle {
  TokenSeq asr;      // [LID] + tokenize(text)
  TokenSeq lid_tok;  // the utterance's LID id, repeated len(asr) times
  TokenSeq lid_utt;  // the LID id once
};

std::string normalize_text(const std::string& text);

Vocab build_vocab(const std::vector<Utterance>& corpus, Unit unit);

TokenSeq tokenize(const std::string& text, const Vocab& vocab);

LabelBundle make_labels(const std::string& text, const std::string& lid,
                        const Vocab& vocab);

struct Detokenized {
  std::optional<std::string> lid;  // present when the sequence led with an LID
  std::string text;
};

// Strips a leading LID (reported separately); best-effort on malformed
// sequences.
Detokenized detokenize(const TokenSeq& seq, const Vocab& vocab);

}  // namespace hierctc

#endif  // HIERCTC_LABELS_H_
