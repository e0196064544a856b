// corpus.cc

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

#include "hierctc/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hierctc {

namespace {

using nlohmann::json;

constexpr int kSilenceFrames = 3;
constexpr double kSeparationCos = 0.5;
constexpr double kConfusableCos = 0.95;
constexpr int kMaxDraws = 20000;

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

std::vector<double> unit_gaussian(int dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = g(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

std::vector<LanguageSpec> gen_language_set(int n_langs, int n_confusable_pairs,
                                           int alphabet_size, int feat_dim,
                                           std::uint64_t seed) {
  if (n_langs < 2) throw std::invalid_argument("gen_language_set: need >= 2 languages");
  if (2 * n_confusable_pairs > n_langs)
    throw std::invalid_argument("gen_language_set: too many confusable pairs");
  if (alphabet_size < 1 || alphabet_size > 26)
    throw std::invalid_argument("gen_language_set: alphabet size must be 1..26");
  if (feat_dim < 2) throw std::invalid_argument("gen_language_set: feat_dim must be >= 2");

  const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  const std::string alphabet = letters.substr(0, alphabet_size);
  Rng rng(mix_seed(seed, 0x1a9));

  std::vector<LanguageSpec> specs(n_langs);
  for (int i = 0; i < n_langs; ++i) {
    specs[i].lid = "L" + std::to_string(i + 1);
    specs[i].alphabet = alphabet;
    specs[i].group = "G" + std::to_string(i / 2 + 1);
  }
  for (int p = 0; p < n_confusable_pairs; ++p) {
    specs[2 * p].confusable_with = specs[2 * p + 1].lid;
    specs[2 * p + 1].confusable_with = specs[2 * p].lid;
  }

  auto confusable = [&](int a, int b) {
    return specs[a].confusable_with && *specs[a].confusable_with == specs[b].lid;
  };
  auto fail = [&] {
    throw std::runtime_error(
        "gen_language_set: could not satisfy separation constraints; "
        "increase feat_dim (currently " + std::to_string(feat_dim) + ")");
  };

  // Each emission is normalize(0.8 center + 0.6 offset): the shared
  // center keeps utterance-mean features clustered per language (so
  // nearest-centroid LID stays clean), the offset separates characters.
  std::vector<std::vector<double>> centers(n_langs);
  for (int i = 0; i < n_langs; ++i) {
    if (specs[i].confusable_with && i % 2 == 1) continue;  // cloned below
    bool ok = false;
    for (int attempt = 0; attempt < kMaxDraws && !ok; ++attempt) {
      centers[i] = unit_gaussian(feat_dim, rng);
      ok = true;
      for (int j = 0; j < i; ++j)
        if (!centers[j].empty() &&
            std::abs(cosine(centers[i], centers[j])) > 0.25)
          ok = false;
    }
    if (!ok) fail();
  }

  // Accepted vectors so far, tagged with their language index.
  std::vector<std::pair<int, const std::vector<double>*>> accepted;
  auto separated = [&](int lang, const std::vector<double>& cand) {
    for (const auto& [other, vec] : accepted) {
      if (other == lang || confusable(lang, other)) continue;
      if (cosine(cand, *vec) > kSeparationCos) return false;
    }
    return true;
  };

  for (int i = 0; i < n_langs; ++i) {
    const bool clone = specs[i].confusable_with && i % 2 == 1;
    for (char c : alphabet) {
      std::vector<double> v(feat_dim);
      bool ok = false;
      for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
        if (clone) {
          // Perturbed copy of the pair mate's emission for this character.
          const auto& base = specs[i - 1].emission.at(c);
          const auto noise = unit_gaussian(feat_dim, rng);
          for (int d = 0; d < feat_dim; ++d) v[d] = base[d] + 0.2 * noise[d];
        } else {
          const auto offset = unit_gaussian(feat_dim, rng);
          for (int d = 0; d < feat_dim; ++d)
            v[d] = 0.8 * centers[i][d] + 0.6 * offset[d];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        if (clone && cosine(v, specs[i - 1].emission.at(c)) < kConfusableCos)
          continue;
        if (!clone) {
          bool self_ok = true;  // characters within a language stay apart
          for (const auto& [ch, ev] : specs[i].emission)
            if (cosine(v, ev) > 0.85) self_ok = false;
          if (!self_ok) continue;
        }
        if (separated(i, v)) {
          ok = true;
          break;
        }
      }
      if (!ok) fail();
      specs[i].emission[c] = v;
      accepted.emplace_back(i, &specs[i].emission[c]);
    }
  }
  return specs;
}

Utterance synthesize_utterance(const LanguageSpec& spec, const std::string& text,
                               int frames_per_char, double noise_sigma,
                               std::uint64_t seed) {
  if (frames_per_char < 2)
    throw std::invalid_argument("synthesize_utterance: frames_per_char must be >= 2");
  for (char c : text) {
    if (spec.alphabet.find(c) == std::string::npos)
      throw std::invalid_argument(std::string("synthesize_utterance: character '") +
                                  c + "' outside alphabet of " + spec.lid);
  }
  const int dim = spec.emission.empty()
                      ? 0
                      : static_cast<int>(spec.emission.begin()->second.size());
  if (dim == 0)
    throw std::invalid_argument("synthesize_utterance: language has no emissions");

  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int T = 2 * kSilenceFrames + frames_per_char * static_cast<int>(text.size());
  std::vector<double> feat(static_cast<size_t>(T) * dim);
  auto fill_row = [&](int row, const std::vector<double>* mean) {
    for (int d = 0; d < dim; ++d)
      feat[static_cast<size_t>(row) * dim + d] =
          (mean ? (*mean)[d] : 0.0) + noise_sigma * g(rng);
  };
  int row = 0;
  for (int s = 0; s < kSilenceFrames; ++s) fill_row(row++, nullptr);
  for (char c : text) {
    const auto& mean = spec.emission.at(c);
    for (int f = 0; f < frames_per_char; ++f) fill_row(row++, &mean);
  }
  for (int s = 0; s < kSilenceFrames; ++s) fill_row(row++, nullptr);

  Utterance utt;
  utt.features = Tensor::from({T, dim}, std::move(feat));
  utt.text = text;
  utt.lid = spec.lid;
  utt.split = "train";
  return utt;
}

std::vector<Utterance> gen_corpus(const std::vector<LanguageSpec>& specs,
                                  const CorpusConfig& cfg, std::uint64_t seed) {
  if (cfg.len_min < 0 || cfg.len_max < cfg.len_min)
    throw std::invalid_argument("gen_corpus: bad length range");
  std::vector<Utterance> corpus;
  corpus.reserve(specs.size() * cfg.utterances_per_lang);
  const int n = cfg.utterances_per_lang;
  const int n_train = (n * 8) / 10;
  const int n_dev_end = (n * 9) / 10;
  for (size_t li = 0; li < specs.size(); ++li) {
    const auto& spec = specs[li];
    for (int i = 0; i < n; ++i) {
      const std::uint64_t utt_seed =
          mix_seed(seed, li * static_cast<std::uint64_t>(n) + i);
      Rng rng(utt_seed);
      std::uniform_int_distribution<int> len_dist(cfg.len_min, cfg.len_max);
      std::uniform_int_distribution<int> char_dist(
          0, static_cast<int>(spec.alphabet.size()) - 1);
      const int len = len_dist(rng);
      std::string text;
      for (int k = 0; k < len; ++k) text.push_back(spec.alphabet[char_dist(rng)]);
      Utterance utt = synthesize_utterance(spec, text, cfg.frames_per_char,
                                           cfg.noise_sigma, mix_seed(utt_seed, 1));
      utt.split = (i < n_train) ? "train" : (i < n_dev_end) ? "dev" : "test";
      // Achievability for the longest scheme (LID_tok): T >= 2*len(asr)-1,
      // plus a margin of 2.
      const int asr_len = 1 + static_cast<int>(text.size());
      if (utt.features.rows() < 2 * asr_len + 1)
        throw std::runtime_error("gen_corpus: utterance violates achievability bound");
      corpus.push_back(std::move(utt));
    }
  }
  return corpus;
}

void write_dataset(const std::string& path, const std::vector<Utterance>& utts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const auto& utt : utts) {
    json rec;
    const int T = utt.features.rows(), D = utt.features.cols();
    json rows = json::array();
    for (int t = 0; t < T; ++t) {
      json r = json::array();
      for (int d = 0; d < D; ++d) r.push_back(utt.features.at(t, d));
      rows.push_back(std::move(r));
    }
    rec["features"] = std::move(rows);
    rec["text"] = utt.text;
    rec["lid"] = utt.lid;
    rec["split"] = utt.split;
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Utterance> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Utterance> utts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      const auto& rows = rec.at("features");
      const int T = static_cast<int>(rows.size());
      if (T == 0) throw std::runtime_error("empty features");
      const int D = static_cast<int>(rows.at(0).size());
      std::vector<double> feat;
      feat.reserve(static_cast<size_t>(T) * D);
      for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != D) throw std::runtime_error("ragged rows");
        for (const auto& v : r) feat.push_back(v.get<double>());
      }
      Utterance utt;
      utt.features = Tensor::from({T, D}, std::move(feat));
      utt.text = rec.at("text").get<std::string>();
      utt.lid = rec.at("lid").get<std::string>();
      utt.split = rec.at("split").get<std::string>();
      utts.push_back(std::move(utt));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset " + path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  return utts;
}

void write_language_set(const std::string& path,
                        const std::vector<LanguageSpec>& specs) {
  json langs = json::array();
  for (const auto& s : specs) {
    json j;
    j["lid"] = s.lid;
    j["alphabet"] = s.alphabet;
    j["group"] = s.group;
    j["space_delimited"] = s.space_delimited;
    if (s.confusable_with) j["confusable_with"] = *s.confusable_with;
    json em;
    for (const auto& [c, v] : s.emission) em[std::string(1, c)] = v;
    j["emission"] = std::move(em);
    langs.push_back(std::move(j));
  }
  json root;
  root["languages"] = std::move(langs);
  write_text_file(path, root.dump(2) + "\n");
}

std::vector<LanguageSpec> read_language_set(const std::string& path) {
  json root = json::parse(read_text_file(path));
  std::vector<LanguageSpec> specs;
  for (const auto& j : root.at("languages")) {
    LanguageSpec s;
    s.lid = j.at("lid").get<std::string>();
    s.alphabet = j.at("alphabet").get<std::string>();
    s.group = j.at("group").get<std::string>();
    s.space_delimited = j.value("space_delimited", false);
    if (j.contains("confusable_with"))
      s.confusable_with = j.at("confusable_with").get<std::string>();
    for (const auto& [k, v] : j.at("emission").items())
      s.emission[k.at(0)] = v.get<std::vector<double>>();
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace hierctc
