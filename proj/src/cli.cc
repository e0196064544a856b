// cli.cc

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

#include "hierctc/cli.h"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hierctc/checks.h"
#include "hierctc/train.h"

namespace hierctc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalOpts {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

int cmd_gen_corpus(const GlobalOpts& g, int n_langs, int pairs, int alpha,
                   int feat_dim, const CorpusConfig& cc) {
  if (g.out.empty()) throw std::runtime_error("gen-corpus: --out is required");
  const std::uint64_t seed = g.seed_set ? g.seed : 7;
  fs::create_directories(g.out);
  const auto specs = gen_language_set(n_langs, pairs, alpha, feat_dim, seed);
  const auto corpus = gen_corpus(specs, cc, seed);
  write_language_set(g.out + "/languages.json", specs);
  write_dataset(g.out + "/dataset.jsonl", corpus);
  std::cout << "wrote " << corpus.size() << " utterances over " << n_langs
            << " languages to " << g.out << "\n";
  return 0;
}

TrainConfig load_train_config(const GlobalOpts& g) {
  if (g.config.empty()) throw std::runtime_error("--config is required");
  TrainConfig cfg = TrainConfig::from_file(g.config);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  return cfg;
}

int cmd_train(const GlobalOpts& g) {
  const TrainConfig cfg = load_train_config(g);
  const TrainResult res = train(cfg);
  std::cout << "run dir: " << res.run_dir << "\n"
            << "averaged checkpoint: " << res.avg_checkpoint << "\n"
            << "test CER " << res.test_report.corpus.cer() << " MER "
            << res.test_report.corpus.mer() << " LID "
            << res.test_report.corpus.lid_acc() << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, data, languages, split = "test", unit = "char";
  int beam = 10;
  double ctc_weight = 0.3;
};

std::tuple<Model, std::vector<Utterance>, Vocab, std::map<std::string, LangMeta>>
load_eval_inputs(const EvalArgs& a) {
  Model model = Model::load(a.model);
  std::vector<Utterance> utts = read_dataset(a.data);
  const Unit unit = a.unit == "word" ? Unit::words : Unit::chars;
  Vocab vocab = build_vocab(utts, unit);
  if (vocab.size() != model.cfg.vocab_size)
    throw std::runtime_error(
        "vocabulary rebuilt from the dataset has size " +
        std::to_string(vocab.size()) + " but the checkpoint expects " +
        std::to_string(model.cfg.vocab_size));
  std::map<std::string, LangMeta> langs;
  if (!a.languages.empty()) langs = lang_meta_from(read_language_set(a.languages));
  return {std::move(model), std::move(utts), std::move(vocab), std::move(langs)};
}

int cmd_decode(const GlobalOpts& g, const EvalArgs& a) {
  auto [model, utts, vocab, langs] = load_eval_inputs(a);
  DecodeOptions opts;
  opts.split = a.split;
  opts.beam = a.beam;
  opts.lambda_dec = a.ctc_weight;

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!g.out.empty()) {
    file.open(g.out);
    if (!file) throw std::runtime_error("cannot write " + g.out);
    out = &file;
  }
  for (const auto& utt : utts) {
    if (!opts.split.empty() && utt.split != opts.split) continue;
    const auto hyps =
        joint_beam_search(model, utt.features, opts.beam, opts.lambda_dec);
    const auto det = detokenize(hyps.front().tokens, vocab);
    json rec;
    rec["ref_lid"] = utt.lid;
    rec["ref_text"] = utt.text;
    rec["lid"] = det.lid ? json(*det.lid) : json(nullptr);
    rec["text"] = det.text;
    rec["score_att"] = hyps.front().score_att;
    rec["score_ctc"] = hyps.front().score_ctc;
    rec["score_joint"] = hyps.front().score_joint;
    rec["forced_close"] = hyps.front().forced_close;
    (*out) << rec.dump() << "\n";
  }
  return 0;
}

int cmd_eval(const GlobalOpts& g, const EvalArgs& a) {
  auto [model, utts, vocab, langs] = load_eval_inputs(a);
  DecodeOptions opts;
  opts.split = a.split;
  opts.beam = a.beam;
  opts.lambda_dec = a.ctc_weight;
  const EvalReport rep = evaluate_model(model, utts, vocab, langs, opts);
  std::cout << rep.to_table();
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    write_text_file(g.out + "/eval.json", rep.to_json() + "\n");
    write_text_file(g.out + "/confusion.csv", rep.confusion_csv());
    std::cout << "wrote " << g.out << "/eval.json\n";
  }
  return 0;
}

int cmd_ctc_check(const GlobalOpts& g, int draws) {
  const std::uint64_t seed = g.seed_set ? g.seed : 1;
  const CtcSweepResult res = ctc_oracle_sweep(3, 3, 5, draws, seed);
  std::cout << "ctc oracle sweep: " << res.cases << " cases, max deviation "
            << res.max_deviation << " nats\n";
  return res.max_deviation < 1e-9 ? 0 : 1;
}

int cmd_grad_check(const GlobalOpts& g) {
  const std::uint64_t seed = g.seed_set ? g.seed : 1;
  const FullGradCheckResult res = full_loss_grad_check(seed);
  std::cout << "full-loss gradient check: " << res.param_count
            << " parameters, max relative error " << res.max_rel_err << "\n";
  return res.max_rel_err < 1e-4 ? 0 : 1;
}

int cmd_matrix(const GlobalOpts& g, const std::string& modes_arg) {
  TrainConfig base = load_train_config(g);
  std::string out_dir = base.out_dir;
  if (out_dir.empty()) throw std::runtime_error("matrix: no output directory");
  base.out_dir.clear();

  std::vector<ConditioningMode> modes;
  {
    std::stringstream ss(modes_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "all") {
        modes = {ConditioningMode::none,         ConditioningMode::sc_ctc,
                 ConditioningMode::lid_utt,      ConditioningMode::lid_tok,
                 ConditioningMode::hier_lid_utt, ConditioningMode::hier_lid_tok};
        break;
      }
      modes.push_back(mode_from_string(item));
    }
  }
  const auto rows = run_experiment_matrix(base, modes, out_dir);
  std::cout << "mode,cer,mer,lid_acc\n";
  bool all_ok = true;
  for (const auto& r : rows) {
    if (r.ok)
      std::cout << r.mode << "," << r.cer << "," << r.mer << "," << r.lid_acc
                << "\n";
    else {
      std::cout << r.mode << ",failed: " << r.error << "\n";
      all_ok = false;
    }
  }
  std::cout << "matrix written to " << out_dir << "/matrix.csv\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"hierarchical LID-conditioned CTC/attention trainer"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config, "JSON config file");
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output directory or file");

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  int n_langs = 8, pairs = 1, alpha = 6, feat_dim = 16;
  CorpusConfig cc;
  gen->add_option("--langs", n_langs, "number of languages");
  gen->add_option("--confusable-pairs", pairs, "confusable language pairs");
  gen->add_option("--alphabet-size", alpha, "characters per language");
  gen->add_option("--feat-dim", feat_dim, "feature dimension");
  gen->add_option("--utts-per-lang", cc.utterances_per_lang, "utterances per language");
  gen->add_option("--len-min", cc.len_min, "minimum text length");
  gen->add_option("--len-max", cc.len_max, "maximum text length");
  gen->add_option("--frames-per-char", cc.frames_per_char, "frames per character");
  gen->add_option("--noise-sigma", cc.noise_sigma, "feature noise sigma");

  auto* tr = app.add_subcommand("train", "train one model from a config");

  EvalArgs ea;
  auto* dec = app.add_subcommand("decode", "beam-decode a dataset split");
  dec->add_option("--model", ea.model, "checkpoint path")->required();
  dec->add_option("--data", ea.data, "dataset JSONL")->required();
  dec->add_option("--languages", ea.languages, "language-set JSON");
  dec->add_option("--split", ea.split, "dataset split");
  dec->add_option("--beam", ea.beam, "beam size");
  dec->add_option("--ctc-weight", ea.ctc_weight, "decode-time CTC weight");
  dec->add_option("--unit", ea.unit, "token unit: char|word");

  auto* ev = app.add_subcommand("eval", "decode and report metrics");
  ev->add_option("--model", ea.model, "checkpoint path")->required();
  ev->add_option("--data", ea.data, "dataset JSONL")->required();
  ev->add_option("--languages", ea.languages, "language-set JSON");
  ev->add_option("--split", ea.split, "dataset split");
  ev->add_option("--beam", ea.beam, "beam size");
  ev->add_option("--ctc-weight", ea.ctc_weight, "decode-time CTC weight");
  ev->add_option("--unit", ea.unit, "token unit: char|word");

  auto* cchk = app.add_subcommand("ctc-check", "CTC oracle-equivalence sweep");
  int draws = 50;
  cchk->add_option("--draws", draws, "posterior draws per setting");

  auto* gchk = app.add_subcommand("grad-check", "finite-difference check of the full loss");

  auto* mx = app.add_subcommand("matrix", "train and compare conditioning modes");
  std::string modes_arg = "all";
  mx->add_option("--modes", modes_arg, "comma list of modes, or 'all'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen_corpus(g, n_langs, pairs, alpha, feat_dim, cc);
    if (tr->parsed()) return cmd_train(g);
    if (dec->parsed()) return cmd_decode(g, ea);
    if (ev->parsed()) return cmd_eval(g, ea);
    if (cchk->parsed()) return cmd_ctc_check(g, draws);
    if (gchk->parsed()) return cmd_grad_check(g);
    if (mx->parsed()) return cmd_matrix(g, modes_arg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hierctc
