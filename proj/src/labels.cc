// labels.cc

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

#include "hierctc/labels.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hierctc {

namespace {

constexpr const char* kBlankToken = "<blank>";
constexpr const char* kUnkToken = "<unk>";

std::string lid_token(const std::string& lid) { return "[" + lid + "]"; }

bool looks_like_lid(const std::string& tok) {
  return tok.size() >= 3 && tok.front() == '[' && tok.back() == ']';
}

std::vector<std::string> units_of(const std::string& normalized, Unit unit) {
  std::vector<std::string> out;
  if (unit == Unit::words) {
    out = split_whitespace(normalized);
  } else {
    out.reserve(normalized.size());
    for (char c : normalized) out.emplace_back(1, c);
  }
  return out;
}

}  // namespace

int Vocab::lid_token_id(const std::string& lid) const {
  auto it = index.find(lid_token(lid));
  if (it == index.end() || !is_lid(it->second)) return -1;
  return it->second;
}

std::string Vocab::lid_name(int id) const {
  const std::string& tok = tokens[id];
  return tok.substr(1, tok.size() - 2);
}

void Vocab::save(const std::string& path) const {
  std::ostringstream ss;
  for (const auto& tok : tokens) ss << tok << "\n";
  write_text_file(path, ss.str());
}

Vocab Vocab::load(const std::string& path, Unit unit) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab file: " + path);
  Vocab v;
  v.unit = unit;
  std::string line;
  while (std::getline(in, line)) {
    v.index[line] = v.size();
    v.tokens.push_back(line);
  }
  if (v.tokens.empty() || v.tokens[0] != kBlankToken ||
      v.tokens.back() != kUnkToken)
    throw std::runtime_error("malformed vocab file: " + path);
  int n = 0;
  for (int i = 1; i < v.size() - 1 && looks_like_lid(v.tokens[i]); ++i) ++n;
  v.n_lid = n;
  return v;
}

std::string normalize_text(const std::string& text) {
  return collapse_whitespace(text);
}

Vocab build_vocab(const std::vector<Utterance>& corpus, Unit unit) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::set<std::string> lids;
  std::set<std::string> units;
  for (const auto& utt : corpus) {
    lids.insert(utt.lid);
    for (const auto& u : units_of(normalize_text(utt.text), unit))
      units.insert(u);
  }
  Vocab v;
  v.unit = unit;
  v.tokens.push_back(kBlankToken);
  for (const auto& l : lids) v.tokens.push_back(lid_token(l));
  v.n_lid = static_cast<int>(lids.size());
  for (const auto& u : units) v.tokens.push_back(u);
  v.tokens.push_back(kUnkToken);
  for (int i = 0; i < v.size(); ++i) v.index[v.tokens[i]] = i;
  return v;
}

TokenSeq tokenize(const std::string& text, const Vocab& vocab) {
  TokenSeq ids;
  for (const auto& u : units_of(normalize_text(text), vocab.unit)) {
    auto it = vocab.index.find(u);
    ids.push_back(it == vocab.index.end() ? vocab.unk_id() : it->second);
  }
  return ids;
}

LabelBundle make_labels(const std::string& text, const std::string& lid,
                        const Vocab& vocab) {
  const int lid_id = vocab.lid_token_id(lid);
  if (lid_id < 0)
    throw std::invalid_argument("make_labels: unknown lid \"" + lid + "\"");
  LabelBundle b;
  b.asr.push_back(lid_id);
  for (int id : tokenize(text, vocab)) b.asr.push_back(id);
  b.lid_tok.assign(b.asr.size(), lid_id);
  b.lid_utt = {lid_id};
  return b;
}

Detokenized detokenize(const TokenSeq& seq, const Vocab& vocab) {
  Detokenized out;
  size_t start = 0;
  if (!seq.empty() && vocab.is_lid(seq[0])) {
    out.lid = vocab.lid_name(seq[0]);
    start = 1;
  }
  std::vector<std::string> parts;
  for (size_t i = start; i < seq.size(); ++i) {
    const int id = seq[i];
    if (id < 0 || id >= vocab.size() || id == vocab.blank_id()) continue;
    parts.push_back(vocab.tokens[id]);
  }
  std::string sep = (vocab.unit == Unit::words) ? " " : "";
  std::ostringstream ss;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) ss << sep;
    ss << parts[i];
  }
  out.text = ss.str();
  return out;
}

}  // namespace hierctc
