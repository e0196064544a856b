// tests/labels_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "hierctc/labels.h"

using namespace hierctc;

namespace {

Utterance utt(const std::string& text, const std::string& lid) {
  Utterance u;
  u.features = Tensor::zeros({4, 2});
  u.text = text;
  u.lid = lid;
  u.split = "train";
  return u;
}

}  // namespace

TEST_CASE("vocab ordering: blank, LIDs, text tokens, unk") {
  std::vector<Utterance> corpus = {utt("ab", "L1"), utt("ba", "L2")};
  const Vocab v = build_vocab(corpus, Unit::chars);
  CHECK(v.size() == 6);
  CHECK(v.tokens[0] == "<blank>");
  CHECK(v.tokens[1] == "[L1]");
  CHECK(v.tokens[2] == "[L2]");
  CHECK(v.tokens[3] == "a");
  CHECK(v.tokens[4] == "b");
  CHECK(v.tokens[5] == "<unk>");
  CHECK(v.n_lid == 2);
  CHECK(v.blank_id() == 0);
  CHECK(v.unk_id() == 5);

  // Rebuilding from the same corpus yields the identical vocab.
  const Vocab v2 = build_vocab(corpus, Unit::chars);
  CHECK(v.tokens == v2.tokens);

  // Unseen characters map to unk at encode time.
  CHECK(tokenize("az", v) == TokenSeq{3, v.unk_id()});

  CHECK_THROWS_AS(build_vocab({}, Unit::chars), std::invalid_argument);
}

TEST_CASE("make_labels reproduces the three label schemes") {
  std::vector<Utterance> corpus = {utt("ALL YOU NEED", "EN_US"),
                                   utt("NEED ALL", "FR_FR")};
  const Vocab v = build_vocab(corpus, Unit::words);
  const int en = v.lid_token_id("EN_US");
  const int all = v.index.at("ALL");
  const int you = v.index.at("YOU");
  const int need = v.index.at("NEED");

  const LabelBundle b = make_labels("ALL YOU NEED", "EN_US", v);
  CHECK(b.asr == TokenSeq{en, all, you, need});
  CHECK(b.lid_tok == TokenSeq{en, en, en, en});  // one LID per ASR token
  CHECK(b.lid_utt == TokenSeq{en});

  // Degenerate utterance: the prepended LID is the whole target.
  const LabelBundle e = make_labels("", "EN_US", v);
  CHECK(e.asr == TokenSeq{en});
  CHECK(e.lid_tok == TokenSeq{en});
  CHECK(e.lid_utt == TokenSeq{en});

  CHECK_THROWS_AS(make_labels("ALL", "DE_DE", v), std::invalid_argument);
}

TEST_CASE("single character labels") {
  std::vector<Utterance> corpus = {utt("a", "L1"), utt("b", "L2")};
  const Vocab v = build_vocab(corpus, Unit::chars);
  const int l1 = v.lid_token_id("L1");
  const LabelBundle b = make_labels("a", "L1", v);
  CHECK(b.asr == TokenSeq{l1, v.index.at("a")});
  CHECK(b.lid_tok == TokenSeq{l1, l1});
}

TEST_CASE("detokenize strips the leading LID and inverts tokenize") {
  std::vector<Utterance> corpus = {utt("ALL YOU NEED", "EN_US")};
  const Vocab v = build_vocab(corpus, Unit::words);
  const LabelBundle b = make_labels("ALL YOU NEED", "EN_US", v);
  const Detokenized d = detokenize(b.asr, v);
  REQUIRE(d.lid.has_value());
  CHECK(*d.lid == "EN_US");
  CHECK(d.text == "ALL YOU NEED");

  const Detokenized empty = detokenize({}, v);
  CHECK_FALSE(empty.lid.has_value());
  CHECK(empty.text.empty());

  std::vector<Utterance> chars = {utt("ab", "L1")};
  const Vocab vc = build_vocab(chars, Unit::chars);
  const Detokenized noLid =
      detokenize({vc.index.at("a"), vc.index.at("b")}, vc);
  CHECK_FALSE(noLid.lid.has_value());
  CHECK(noLid.text == "ab");
}

TEST_CASE("round trip over generated texts") {
  std::vector<Utterance> corpus = {utt("abc cab", "L1"), utt("  b  a ", "L2"),
                                   utt("cc", "L1")};
  const Vocab v = build_vocab(corpus, Unit::chars);
  for (const auto& u : corpus) {
    const LabelBundle b = make_labels(u.text, u.lid, v);
    const Detokenized d = detokenize(b.asr, v);
    REQUIRE(d.lid.has_value());
    CHECK(*d.lid == u.lid);
    CHECK(d.text == normalize_text(u.text));
  }
}

TEST_CASE("normalization collapses whitespace only") {
  CHECK(normalize_text("  A  B\tC ") == "A B C");
  CHECK(normalize_text("abc") == "abc");
  CHECK(normalize_text("") == "");
}

TEST_CASE("vocab file round trip, one token per line") {
  std::vector<Utterance> corpus = {utt("ab", "L1"), utt("b", "L2")};
  const Vocab v = build_vocab(corpus, Unit::chars);
  const auto path =
      (std::filesystem::temp_directory_path() / "hierctc_vocab_test.txt").string();
  v.save(path);
  const Vocab loaded = Vocab::load(path, Unit::chars);
  CHECK(loaded.tokens == v.tokens);
  CHECK(loaded.n_lid == v.n_lid);
  std::filesystem::remove(path);
}

TEST_CASE("lid_tok targets need T >= 2S-1 frames") {
  // S identical labels admit no adjacent merge, so the alignment needs
  // S - 1 separating blanks.
  std::vector<Utterance> corpus = {utt("abc", "L1")};
  const Vocab v = build_vocab(corpus, Unit::chars);
  const LabelBundle b = make_labels("abc", "L1", v);
  CHECK(min_frames(b.lid_tok) == 2 * static_cast<int>(b.asr.size()) - 1);
}
