// tests/acceptance_test.cc

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

// End-to-end acceptance suite. Each criterion prints one line:
//   [accept N] <name> ... PASS|FAIL (<details>)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>

#include "hierctc/checks.h"
#include "hierctc/cli.h"
#include "hierctc/train.h"

using namespace hierctc;
namespace fs = std::filesystem;

namespace {

double wall_seconds(const std::function<void()>& body) {
  const auto start = std::chrono::steady_clock::now();
  body();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

void report(int n, const char* name, bool ok, const std::string& details) {
  std::printf("[accept %d] %-32s %s (%s)\n", n, name, ok ? "PASS" : "FAIL",
              details.c_str());
  std::fflush(stdout);
}

std::vector<TokenSeq> all_label_seqs(int vocab, int max_len) {
  std::vector<TokenSeq> out = {{}};
  std::vector<TokenSeq> frontier = {{}};
  for (int l = 1; l <= max_len; ++l) {
    std::vector<TokenSeq> next;
    for (const auto& base : frontier)
      for (int tok = 1; tok <= vocab; ++tok) {
        TokenSeq t = base;
        t.push_back(tok);
        out.push_back(t);
        next.push_back(std::move(t));
      }
    frontier = std::move(next);
  }
  return out;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "hierctc_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

}  // namespace

TEST_CASE("criterion 1: CTC oracle equivalence") {
  CtcSweepResult res;
  const double secs =
      wall_seconds([&] { res = ctc_oracle_sweep(3, 3, 5, 50, /*seed=*/1); });
  const bool ok = res.max_deviation < 1e-9 && secs < 10.0;
  report(1, "ctc-oracle-equivalence", ok,
         "max dev " + format_double(res.max_deviation) + " nats over " +
             std::to_string(res.cases) + " cases, " + format_double(secs) + " s");
  CHECK(res.max_deviation < 1e-9);
  CHECK(secs < 10.0);
}

TEST_CASE("criterion 2: gradient fidelity of the full objective") {
  FullGradCheckResult res;
  const double secs = wall_seconds([&] { res = full_loss_grad_check(1); });
  const bool ok = res.max_rel_err < 1e-4 && res.param_count <= 5000 && secs < 60.0;
  report(2, "full-loss-gradient-fidelity", ok,
         "max rel err " + format_double(res.max_rel_err) + " over " +
             std::to_string(res.param_count) + " params, " + format_double(secs) +
             " s");
  CHECK(res.max_rel_err < 1e-4);
  CHECK(res.param_count <= 5000);
  CHECK(secs < 60.0);
}

TEST_CASE("criterion 3: loss-composition exactness") {
  Rng rng(3);
  std::uniform_real_distribution<double> comp(0.0, 8.0);
  const std::vector<double> grid = {0.0, 0.3, 0.5, 0.7, 1.0};
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const double att = comp(rng), ctc = comp(rng);
    const double t1 = comp(rng), t2 = comp(rng), t3 = comp(rng);
    for (double lambda : grid) {
      for (double w : grid) {
        LossConfig cfg;
        cfg.lambda = lambda;
        cfg.w = w;
        const LossBreakdown b = total_loss(
            Tensor::scalar(att), Tensor::scalar(ctc),
            {Tensor::scalar(t1), Tensor::scalar(t2), Tensor::scalar(t3)},
            {TapKind::lid_utt, TapKind::asr, TapKind::asr}, cfg,
            ConditioningMode::hier_lid_utt);
        const double hier = (t1 + t2 + t3) / 3.0;
        const double want =
            (1.0 - lambda) * att + lambda * ((1.0 - w) * ctc + w * hier);
        worst = std::max(worst, std::abs(b.l_total.value() - want));
        worst = std::max(worst, std::abs(b.l_hier.value() - hier));
      }
    }
  }
  report(3, "loss-composition-exactness", worst < 1e-12,
         "max |graph - recompute| " + format_double(worst));
  CHECK(worst < 1e-12);
}

TEST_CASE("criterion 4: conditioning-wiring equivalence") {
  bool all_equal = true;
  long long coords = 0;
  for (ConditioningMode mode :
       {ConditioningMode::sc_ctc, ConditioningMode::lid_utt,
        ConditioningMode::lid_tok, ConditioningMode::hier_lid_utt,
        ConditioningMode::hier_lid_tok}) {
    EncoderConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_dim = 24;
    cfg.tap_layers = {1, 3};
    cfg.mode = mode;
    Rng rng(40 + static_cast<int>(mode));
    ParamSink nop = [](const std::string&, const Tensor&) {};
    Encoder enc = Encoder::init(cfg, 8, 9, rng, nop);
    for (TapBlock& tap : enc.taps) {
      std::fill(tap.lin_w.data().begin(), tap.lin_w.data().end(), 0.0);
      std::fill(tap.lin_b.data().begin(), tap.lin_b.data().end(), 0.0);
    }
    for (int input = 0; input < 10; ++input) {
      const Tensor feats = Tensor::uniform({6, 8}, -1.0, 1.0, rng);
      const Tensor got = enc.forward(feats).h_final;
      // Reference: the same layer stack with only the extra normalization
      // at each tap layer.
      Tensor x = enc.embed(feats);
      size_t next_tap = 0;
      for (int k = 1; k <= cfg.n_layers; ++k) {
        x = enc.layer_forward(k, x);
        if (next_tap < cfg.tap_layers.size() && cfg.tap_layers[next_tap] == k) {
          x = layer_norm(x, enc.taps[next_tap].nrm_g, enc.taps[next_tap].nrm_b);
          ++next_tap;
        }
      }
      x = layer_norm(x, enc.final_ln_g, enc.final_ln_b);
      for (std::int64_t i = 0; i < got.size(); ++i, ++coords)
        if (got.data()[i] != x.data()[i]) all_equal = false;
    }
  }
  report(4, "conditioning-wiring-equivalence", all_equal,
         "bit-exact over " + std::to_string(coords) + " coordinates, 5 modes x 10 inputs");
  CHECK(all_equal);
}

TEST_CASE("criterion 5: label-scheme fidelity") {
  std::vector<Utterance> corpus(2);
  corpus[0].features = Tensor::zeros({4, 2});
  corpus[0].text = "ALL YOU NEED";
  corpus[0].lid = "EN_US";
  corpus[1].features = Tensor::zeros({4, 2});
  corpus[1].text = "NEED YOU";
  corpus[1].lid = "FR_FR";
  const Vocab v = build_vocab(corpus, Unit::words);
  const int en = v.lid_token_id("EN_US");
  const LabelBundle b = make_labels("ALL YOU NEED", "EN_US", v);
  const bool asr_ok =
      b.asr == TokenSeq{en, v.index.at("ALL"), v.index.at("YOU"), v.index.at("NEED")};
  const bool tok_ok = b.lid_tok == TokenSeq{en, en, en, en};
  const bool utt_ok = b.lid_utt == TokenSeq{en};
  report(5, "label-scheme-fidelity", asr_ok && tok_ok && utt_ok,
         "ASR / LID_tok / LID_utt rows reproduced");
  CHECK(asr_ok);
  CHECK(tok_ok);
  CHECK(utt_ok);
}

TEST_CASE("criterion 6: decoding exactness") {
  bool beams_ok = true;
  for (std::uint64_t seed : {100ULL, 101ULL, 102ULL, 103ULL, 104ULL}) {
    ModelConfig mc;
    mc.input_dim = 4;
    mc.vocab_size = 3;  // blank + two tokens
    mc.encoder.n_layers = 2;
    mc.encoder.d_model = 8;
    mc.encoder.n_heads = 2;
    mc.encoder.ffn_dim = 8;
    mc.encoder.tap_layers = {};
    mc.encoder.mode = ConditioningMode::none;
    mc.decoder.n_layers = 1;
    mc.decoder.n_heads = 2;
    mc.decoder.ffn_dim = 8;
    const Model model = Model::build(mc, seed);
    Rng rng(seed);
    const int t_len = 2 + static_cast<int>(seed % 3);  // T in 2..4
    const Tensor feats = Tensor::uniform({t_len, 4}, -1.0, 1.0, rng);

    const auto hyps =
        joint_beam_search(model, feats, /*beam=*/64, /*lambda_dec=*/1.0, t_len);
    const Tensor post =
        model.encoder.final_posterior(model.encoder.forward(feats).h_final);
    double best = std::numeric_limits<double>::infinity();
    TokenSeq best_seq;
    for (const auto& seq : all_label_seqs(2, t_len)) {
      const double nll = ctc_brute_force(post, seq);
      if (nll < best) {
        best = nll;
        best_seq = seq;
      }
    }
    if (hyps.empty() || hyps.front().tokens != best_seq) beams_ok = false;
  }

  // Averaging identical checkpoints is the identity, bit for bit.
  ModelConfig mc;
  mc.input_dim = 4;
  mc.vocab_size = 5;
  mc.encoder.n_layers = 2;
  mc.encoder.d_model = 8;
  mc.encoder.n_heads = 2;
  mc.encoder.ffn_dim = 8;
  mc.encoder.tap_layers = {};
  mc.encoder.mode = ConditioningMode::none;
  mc.decoder.n_layers = 1;
  mc.decoder.n_heads = 2;
  mc.decoder.ffn_dim = 8;
  Model m = Model::build(mc, 7);
  const std::string ck = (work_dir() / "avg_ident.bin").string();
  m.save(ck);
  const Model avg = checkpoint_average({ck, ck, ck});
  bool avg_ok = true;
  for (size_t i = 0; i < m.params.size(); ++i)
    if (avg.params[i].second.data() != m.params[i].second.data()) avg_ok = false;

  report(6, "decoding-exactness", beams_ok && avg_ok,
         std::string("exhaustive beam = enumeration optimum on 5 instances; ") +
             "identity averaging " + (avg_ok ? "exact" : "violated"));
  CHECK(beams_ok);
  CHECK(avg_ok);
}

TEST_CASE("criterion 7: synthetic end-to-end across all six modes") {
  const fs::path dir = work_dir();
  const std::string data_dir = (dir / "data").string();
  fs::create_directories(data_dir);

  const std::clock_t cpu_start = std::clock();
  const auto wall_start = std::chrono::steady_clock::now();

  // Default corpus: 8 languages, 1 confusable pair, 200 utterances each.
  const auto specs = gen_language_set(8, 1, 6, 16, /*seed=*/7);
  CorpusConfig cc;  // 200 per language, len 3..8, 2 frames/char, sigma 0.1
  write_dataset(data_dir + "/dataset.jsonl", gen_corpus(specs, cc, 7));
  write_language_set(data_dir + "/languages.json", specs);

  TrainConfig base;
  base.seed = 7;
  base.epochs = 28;
  base.batch_size = 16;
  base.warmup_steps = 120;
  base.peak_lr = 3e-3;
  base.encoder.n_layers = 4;
  base.encoder.d_model = 48;
  base.encoder.n_heads = 4;
  base.encoder.ffn_dim = 96;
  base.encoder.tap_layers = {1, 3};
  base.decoder.n_layers = 2;
  base.decoder.n_heads = 4;
  base.decoder.ffn_dim = 96;
  base.corpus_path = data_dir + "/dataset.jsonl";
  base.language_set_path = data_dir + "/languages.json";
  base.eval_beam = 10;
  base.eval_ctc_weight = 0.3;

  const std::vector<ConditioningMode> modes = {
      ConditioningMode::none,         ConditioningMode::sc_ctc,
      ConditioningMode::lid_utt,      ConditioningMode::lid_tok,
      ConditioningMode::hier_lid_utt, ConditioningMode::hier_lid_tok};
  const auto rows = run_experiment_matrix(base, modes, (dir / "matrix").string());

  const double cpu_secs =
      static_cast<double>(std::clock() - cpu_start) / CLOCKS_PER_SEC;
  const double wall_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
          .count();

  bool all_ok = rows.size() == modes.size();
  std::optional<double> hier_int_lid;
  std::printf("    %-14s %8s %8s %8s %10s\n", "mode", "CER", "MER", "LID",
              "intLID(nc)");
  for (const auto& r : rows) {
    std::printf("    %-14s %8.4f %8.4f %8.4f %10s\n", r.mode.c_str(), r.cer,
                r.mer, r.lid_acc,
                r.int_lid_acc_nonconfusable
                    ? format_double(*r.int_lid_acc_nonconfusable).c_str()
                    : "-");
    if (!r.ok || !(r.cer < 0.10) || !(r.lid_acc > 0.90)) all_ok = false;
    if (r.mode == "hier_lid_utt") hier_int_lid = r.int_lid_acc_nonconfusable;
  }
  const bool int_lid_ok = hier_int_lid && *hier_int_lid >= 0.95;
  const bool time_ok = cpu_secs < 900.0;
  const bool csv_ok = fs::exists(dir / "matrix" / "matrix.csv");

  report(7, "synthetic-end-to-end", all_ok && int_lid_ok && time_ok && csv_ok,
         "6 modes, CER<10% LID>90% each; hier intLID " +
             (hier_int_lid ? format_double(*hier_int_lid) : std::string("n/a")) +
             "; cpu " + format_double(cpu_secs) + " s, wall " +
             format_double(wall_secs) + " s");
  CHECK(all_ok);
  CHECK(int_lid_ok);
  CHECK(time_ok);
  CHECK(csv_ok);
}

TEST_CASE("criterion 8: metric fidelity") {
  bool ok = edit_distance_chars("abc", "abc") == 0;
  ok = ok && edit_distance_chars("abc", "axc") == 1;

  // Mixed-corpus MER micro-average: (5 + 4) / (10 + 20) = 0.3.
  std::map<std::string, LangMeta> langs;
  langs["A"] = {"G1", /*space_delimited=*/true, false};
  langs["B"] = {"G2", /*space_delimited=*/false, false};
  std::vector<ScoredUtterance> utts;
  utts.push_back({"v w x y z", "A", "v w x q r", std::string("A"), std::nullopt, false});
  utts.push_back({"k l m n o", "A", "k q r s o", std::string("A"), std::nullopt, false});
  utts.push_back({"aaaaabbbbbcccccddddd", "B", "aaaaxbbbbxccccxddddx",
                  std::string("B"), std::nullopt, false});
  const EvalReport rep = build_report(utts, langs);
  const double mer = rep.corpus.mer();
  ok = ok && std::abs(mer - 0.3) < 1e-12;
  ok = ok && std::abs(rep.per_lang.at("A").wer() - 0.5) < 1e-12;
  ok = ok && std::abs(rep.per_lang.at("B").cer() - 0.2) < 1e-12;

  // Metric axioms on random short strings.
  Rng rng(8);
  auto random_string = [&] {
    std::string s;
    const int len = static_cast<int>(rng() % 6);
    for (int i = 0; i < len; ++i) s.push_back('a' + static_cast<char>(rng() % 3));
    return s;
  };
  for (int rep_i = 0; rep_i < 500 && ok; ++rep_i) {
    const std::string a = random_string(), b = random_string(), c = random_string();
    if (edit_distance_chars(a, a) != 0) ok = false;
    if (edit_distance_chars(a, b) != edit_distance_chars(b, a)) ok = false;
    if (edit_distance_chars(a, c) >
        edit_distance_chars(a, b) + edit_distance_chars(b, c))
      ok = false;
  }
  report(8, "metric-fidelity", ok, "MER micro example 0.3; metric axioms hold");
  CHECK(ok);
}
