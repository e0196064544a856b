// eval.cc

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

#include "hierctc/eval.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hierctc {

namespace {

using nlohmann::json;

// Prefix DP state after processing a prefix: for each frame count t,
// gamma_n[t] is the log probability of emitting exactly the prefix with
// the last token active at frame t, gamma_b[t] the same with frame t
// blank. For the empty prefix only blank runs apply.
struct PrefixDp {
  std::vector<double> gamma_n, gamma_b;
  double psi = 0.0;  // log P(collapse begins with the prefix)

  static PrefixDp empty(const Tensor& lp) {
    const int T = lp.rows();
    const int C = lp.cols();
    PrefixDp s;
    s.gamma_n.assign(T + 1, kLogZero);
    s.gamma_b.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t)
      s.gamma_b[t] =
          s.gamma_b[t - 1] + lp.data()[static_cast<size_t>(t - 1) * C + kBlankId];
    s.psi = 0.0;
    return s;
  }

  // Extend by one token; prev is the previous last token or -1.
  PrefixDp extend(const Tensor& lp, int token, int prev) const {
    const int T = lp.rows();
    const int C = lp.cols();
    PrefixDp s;
    s.gamma_n.assign(T + 1, kLogZero);
    s.gamma_b.assign(T + 1, kLogZero);
    double psi_acc = kLogZero;
    for (int t = 1; t <= T; ++t) {
      const double lp_tok = lp.data()[static_cast<size_t>(t - 1) * C + token];
      const double lp_blank = lp.data()[static_cast<size_t>(t - 1) * C + kBlankId];
      double phi = gamma_b[t - 1];
      if (token != prev) phi = log_sum_exp(phi, gamma_n[t - 1]);
      s.gamma_n[t] = log_sum_exp(phi, s.gamma_n[t - 1]);
      s.gamma_n[t] = (s.gamma_n[t] == kLogZero) ? kLogZero : s.gamma_n[t] + lp_tok;
      double nb = log_sum_exp(s.gamma_b[t - 1], s.gamma_n[t - 1]);
      s.gamma_b[t] = (nb == kLogZero) ? kLogZero : nb + lp_blank;
      if (phi != kLogZero) psi_acc = log_sum_exp(psi_acc, phi + lp_tok);
    }
    s.psi = psi_acc;
    return s;
  }

  double end_score() const {
    return log_sum_exp(gamma_n.back(), gamma_b.back());
  }
};

PrefixDp run_prefix_dp(const Tensor& lp, const TokenSeq& prefix) {
  PrefixDp s = PrefixDp::empty(lp);
  int prev = -1;
  for (int tok : prefix) {
    s = s.extend(lp, tok, prev);
    prev = tok;
  }
  return s;
}

void check_prefix(const Tensor& lp, const TokenSeq& prefix, const char* op) {
  if (lp.rank() != 2 || lp.cols() < 2)
    throw std::invalid_argument(std::string(op) + ": bad posterior shape " +
                                shape_str(lp.shape()));
  for (int tok : prefix)
    if (tok <= 0 || tok >= lp.cols())
      throw std::invalid_argument(std::string(op) + ": token outside vocabulary");
}

bool tokens_less(const TokenSeq& a, const TokenSeq& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Total order used for pruning: higher joint score first, then the
// lexicographically smaller token sequence (lowest-token-id tie-break).
bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score_joint != b.score_joint) return a.score_joint > b.score_joint;
  return tokens_less(a.tokens, b.tokens);
}

}  // namespace

double ctc_prefix_score(const Tensor& log_posteriors, const TokenSeq& prefix) {
  check_prefix(log_posteriors, prefix, "ctc_prefix_score");
  if (prefix.empty()) return 0.0;
  return run_prefix_dp(log_posteriors, prefix).psi;
}

double ctc_sequence_score(const Tensor& log_posteriors, const TokenSeq& seq) {
  check_prefix(log_posteriors, seq, "ctc_sequence_score");
  return run_prefix_dp(log_posteriors, seq).end_score();
}

std::vector<Hypothesis> joint_beam_search(const Model& model,
                                          const Tensor& features, int beam,
                                          double lambda_dec, int max_len) {
  if (beam < 1) throw std::invalid_argument("joint_beam_search: beam must be >= 1");
  if (!(lambda_dec >= 0.0 && lambda_dec <= 1.0))
    throw std::invalid_argument("joint_beam_search: lambda_dec outside [0, 1]");

  const EncoderOutput enc = model.encoder.forward(features);
  const Tensor post = model.encoder.final_posterior(enc.h_final);
  const int T = post.rows();
  if (max_len < 0) max_len = T;

  const int vocab = model.cfg.vocab_size;
  const int eos = model.decoder.eos_id();
  // A zero-weight side drops out entirely, so an impossible CTC prefix
  // (-inf) cannot poison a pure-attention score with NaN.
  auto joint = [lambda_dec](double att, double ctc) {
    double s = 0.0;
    if (lambda_dec < 1.0) s += (1.0 - lambda_dec) * att;
    if (lambda_dec > 0.0) s += lambda_dec * ctc;
    return s;
  };

  std::vector<Hypothesis> active = {Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < max_len && !active.empty(); ++step) {
    struct Cand {
      Hypothesis hyp;
      bool ended;
    };
    std::vector<Cand> pool;
    for (const auto& hyp : active) {
      TokenSeq input;
      input.push_back(model.decoder.sos_id());
      input.insert(input.end(), hyp.tokens.begin(), hyp.tokens.end());
      const Tensor logp = model.decoder.forward_logprobs(enc.h_final, input);
      const int last = static_cast<int>(input.size()) - 1;

      // End sentinel: score the hypothesis as a complete sequence.
      {
        Hypothesis done = hyp;
        done.score_att += logp.at(last, eos);
        done.score_ctc = ctc_sequence_score(post, hyp.tokens);
        done.score_joint = joint(done.score_att, done.score_ctc);
        pool.push_back({std::move(done), true});
      }
      for (int c = 1; c < vocab; ++c) {
        Hypothesis next = hyp;
        next.tokens.push_back(c);
        next.score_att += logp.at(last, c);
        next.score_ctc = ctc_prefix_score(post, next.tokens);
        next.score_joint = joint(next.score_att, next.score_ctc);
        pool.push_back({std::move(next), false});
      }
    }
    std::sort(pool.begin(), pool.end(),
              [](const Cand& a, const Cand& b) { return hyp_better(a.hyp, b.hyp); });
    active.clear();
    for (size_t i = 0; i < pool.size() && i < static_cast<size_t>(beam); ++i) {
      if (pool[i].ended)
        finished.push_back(std::move(pool[i].hyp));
      else
        active.push_back(std::move(pool[i].hyp));
    }
  }

  // Anything still open at the length cap is closed forcibly.
  for (auto& hyp : active) {
    TokenSeq input;
    input.push_back(model.decoder.sos_id());
    input.insert(input.end(), hyp.tokens.begin(), hyp.tokens.end());
    const Tensor logp = model.decoder.forward_logprobs(enc.h_final, input);
    hyp.score_att += logp.at(static_cast<int>(input.size()) - 1, eos);
    hyp.score_ctc = ctc_sequence_score(post, hyp.tokens);
    hyp.score_joint = joint(hyp.score_att, hyp.score_ctc);
    hyp.forced_close = true;
    finished.push_back(std::move(hyp));
  }

  std::sort(finished.begin(), finished.end(), hyp_better);
  if (finished.size() > static_cast<size_t>(beam)) finished.resize(beam);
  return finished;
}

Model checkpoint_average(const std::vector<std::string>& paths) {
  if (paths.empty())
    throw std::invalid_argument("checkpoint_average: no checkpoints given");
  Model base = Model::load(paths[0]);
  const std::string base_cfg = base.cfg.to_json();
  std::vector<std::vector<long double>> acc;
  acc.reserve(base.params.size());
  for (const auto& [name, t] : base.params)
    acc.emplace_back(t.data().begin(), t.data().end());
  for (size_t i = 1; i < paths.size(); ++i) {
    Model other = Model::load(paths[i]);
    if (other.cfg.to_json() != base_cfg)
      throw std::invalid_argument("checkpoint_average: config mismatch between " +
                                  paths[0] + " and " + paths[i]);
    for (size_t p = 0; p < acc.size(); ++p) {
      const auto& d = other.params[p].second.data();
      for (size_t k = 0; k < d.size(); ++k) acc[p][k] += d[k];
    }
  }
  const long double n = static_cast<long double>(paths.size());
  for (size_t p = 0; p < acc.size(); ++p) {
    auto& d = base.params[p].second.data();
    for (size_t k = 0; k < d.size(); ++k)
      d[k] = static_cast<double>(acc[p][k] / n);
  }
  return base;
}

namespace {

template <typename Seq>
int levenshtein(const Seq& ref, const Seq& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

int edit_distance(const std::vector<std::string>& ref,
                  const std::vector<std::string>& hyp) {
  return levenshtein(ref, hyp);
}

int edit_distance_chars(const std::string& ref, const std::string& hyp) {
  return levenshtein(ref, hyp);
}

void LangStats::absorb(const LangStats& other) {
  char_errs += other.char_errs;
  char_ref += other.char_ref;
  word_errs += other.word_errs;
  word_ref += other.word_ref;
  mer_errs += other.mer_errs;
  mer_ref += other.mer_ref;
  lid_correct += other.lid_correct;
  int_lid_correct += other.int_lid_correct;
  int_lid_total += other.int_lid_total;
  n_utts += other.n_utts;
}

EvalReport build_report(const std::vector<ScoredUtterance>& utts,
                        const std::map<std::string, LangMeta>& langs) {
  EvalReport rep;
  for (const auto& u : utts) {
    auto meta_it = langs.find(u.ref_lid);
    const LangMeta meta = meta_it == langs.end() ? LangMeta{} : meta_it->second;
    LangStats& ls = rep.per_lang[u.ref_lid];
    const std::string ref = normalize_text(u.ref_text);
    const std::string hyp = normalize_text(u.hyp_text);
    const int ce = edit_distance_chars(ref, hyp);
    const int we = edit_distance(split_whitespace(ref), split_whitespace(hyp));
    ls.char_errs += ce;
    ls.char_ref += static_cast<long long>(ref.size());
    ls.word_errs += we;
    ls.word_ref += static_cast<long long>(split_whitespace(ref).size());
    if (meta.space_delimited) {
      ls.mer_errs += we;
      ls.mer_ref += static_cast<long long>(split_whitespace(ref).size());
    } else {
      ls.mer_errs += ce;
      ls.mer_ref += static_cast<long long>(ref.size());
    }
    ls.n_utts += 1;
    const bool lid_ok = u.hyp_lid && *u.hyp_lid == u.ref_lid;
    if (lid_ok) ls.lid_correct += 1;
    if (u.int_lid) {
      ls.int_lid_total += 1;
      if (*u.int_lid == u.ref_lid) ls.int_lid_correct += 1;
    }
    rep.confusion[u.ref_lid][u.hyp_lid ? *u.hyp_lid : "(none)"] += 1;
    if (u.forced_close) rep.forced_closures += 1;
  }
  for (const auto& [lid, stats] : rep.per_lang) {
    rep.corpus.absorb(stats);
    auto meta_it = langs.find(lid);
    const std::string group =
        meta_it == langs.end() ? "(none)" : meta_it->second.group;
    rep.per_group[group].absorb(stats);
  }
  return rep;
}

std::optional<std::string> intermediate_lid(const EncoderOutput& enc_out,
                                            const Vocab& vocab) {
  if (enc_out.tap_posteriors.empty()) return std::nullopt;
  const TokenSeq decoded = ctc_greedy_decode(enc_out.tap_posteriors[0]);
  std::map<int, int> votes;
  for (int id : decoded)
    if (vocab.is_lid(id)) votes[id] += 1;
  if (votes.empty()) return std::nullopt;
  int best_id = -1, best_n = -1;
  for (const auto& [id, n] : votes) {
    if (n > best_n) {  // map order gives lowest id on ties
      best_n = n;
      best_id = id;
    }
  }
  return vocab.lid_name(best_id);
}

namespace {

json stats_json(const LangStats& s) {
  json j;
  j["cer"] = s.cer();
  j["wer"] = s.wer();
  j["mer"] = s.mer();
  j["lid_acc"] = s.lid_acc();
  if (auto a = s.int_lid_acc()) j["int_lid_acc"] = *a;
  j["n_utts"] = s.n_utts;
  return j;
}

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["averaging"] = "micro";  // sum of errors over sum of reference lengths
  j["corpus"] = stats_json(corpus);
  json langs = json::object();
  for (const auto& [lid, s] : per_lang) langs[lid] = stats_json(s);
  j["per_lang"] = std::move(langs);
  json groups = json::object();
  for (const auto& [g, s] : per_group) groups[g] = stats_json(s);
  j["per_group"] = std::move(groups);
  json conf = json::object();
  for (const auto& [ref, row] : confusion) {
    json r = json::object();
    for (const auto& [pred, n] : row) r[pred] = n;
    conf[ref] = std::move(r);
  }
  j["confusion"] = std::move(conf);
  j["forced_closures"] = forced_closures;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4);
  ss << "metrics (micro-averaged; MER uses WER for space-delimited languages, CER otherwise)\n";
  ss << std::setw(10) << "lang" << std::setw(10) << "CER" << std::setw(10)
     << "WER" << std::setw(10) << "MER" << std::setw(10) << "LID" << std::setw(12)
     << "intLID" << std::setw(8) << "utts" << "\n";
  auto row = [&](const std::string& name, const LangStats& s) {
    ss << std::setw(10) << name << std::setw(10) << s.cer() << std::setw(10)
       << s.wer() << std::setw(10) << s.mer() << std::setw(10) << s.lid_acc();
    if (auto a = s.int_lid_acc())
      ss << std::setw(12) << *a;
    else
      ss << std::setw(12) << "-";
    ss << std::setw(8) << s.n_utts << "\n";
  };
  for (const auto& [lid, s] : per_lang) row(lid, s);
  for (const auto& [g, s] : per_group) row(g, s);
  row("ALL", corpus);
  return ss.str();
}

std::string EvalReport::confusion_csv() const {
  // Column set: every seen prediction, "(none)" included.
  std::vector<std::string> cols;
  for (const auto& [ref, row] : confusion)
    for (const auto& [pred, n] : row)
      if (std::find(cols.begin(), cols.end(), pred) == cols.end())
        cols.push_back(pred);
  std::sort(cols.begin(), cols.end());
  std::ostringstream ss;
  ss << "ref";
  for (const auto& c : cols) ss << "," << c;
  ss << "\n";
  for (const auto& [ref, row] : confusion) {
    ss << ref;
    for (const auto& c : cols) {
      auto it = row.find(c);
      ss << "," << (it == row.end() ? 0 : it->second);
    }
    ss << "\n";
  }
  return ss.str();
}

}  // namespace hierctc
