// train.cc

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

#include "hierctc/train.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace hierctc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Adam with bias correction; one slot per registered parameter.
struct Adam {
  AdamConfig cfg;
  std::vector<std::vector<double>> m, v;
  long long t = 0;

  explicit Adam(const Model& model, const AdamConfig& c) : cfg(c) {
    for (const auto& [name, p] : model.params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }

  void step(Model& model, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < model.params.size(); ++pi) {
      auto& p = model.params[pi].second;
      auto& data = p.data();
      const auto& g = p.grad();
      for (size_t i = 0; i < data.size(); ++i) {
        m[pi][i] = cfg.beta1 * m[pi][i] + (1.0 - cfg.beta1) * g[i];
        v[pi][i] = cfg.beta2 * v[pi][i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mh = m[pi][i] / bc1;
        const double vh = v[pi][i] / bc2;
        data[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
      }
    }
  }
};

double schedule_lr(double peak, int warmup, long long step) {
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(std::max(warmup, 1));
  return peak * std::min(s / w, std::sqrt(w / s));
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

json adam_json(const AdamConfig& a) {
  return json{{"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

}  // namespace

std::string TrainConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["warmup_steps"] = warmup_steps;
  j["peak_lr"] = peak_lr;
  j["adam"] = adam_json(adam);
  j["loss"] = json{{"lambda", loss.lambda}, {"w", loss.w}};
  j["encoder"] = json{{"n_layers", encoder.n_layers},
                      {"d_model", encoder.d_model},
                      {"n_heads", encoder.n_heads},
                      {"ffn_dim", encoder.ffn_dim},
                      {"tap_layers", encoder.tap_layers},
                      {"mode", to_string(encoder.mode)},
                      {"share_heads", encoder.share_heads}};
  j["decoder"] = json{{"n_layers", decoder.n_layers},
                      {"n_heads", decoder.n_heads},
                      {"ffn_dim", decoder.ffn_dim}};
  j["corpus"] = corpus_path;
  j["languages"] = language_set_path;
  j["unit"] = unit;
  j["out_dir"] = out_dir;
  j["keep_checkpoints"] = keep_checkpoints;
  j["eval_beam"] = eval_beam;
  j["eval_ctc_weight"] = eval_ctc_weight;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.seed = j.value("seed", static_cast<std::uint64_t>(7));
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  if (j.contains("adam")) {
    c.adam.beta1 = j["adam"].value("beta1", c.adam.beta1);
    c.adam.beta2 = j["adam"].value("beta2", c.adam.beta2);
    c.adam.eps = j["adam"].value("eps", c.adam.eps);
  }
  if (j.contains("loss")) {
    c.loss.lambda = j["loss"].value("lambda", c.loss.lambda);
    c.loss.w = j["loss"].value("w", c.loss.w);
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    c.encoder.n_layers = e.value("n_layers", c.encoder.n_layers);
    c.encoder.d_model = e.value("d_model", c.encoder.d_model);
    c.encoder.n_heads = e.value("n_heads", c.encoder.n_heads);
    c.encoder.ffn_dim = e.value("ffn_dim", c.encoder.ffn_dim);
    c.encoder.tap_layers =
        e.value("tap_layers", c.encoder.tap_layers);
    c.encoder.mode = mode_from_string(e.value("mode", to_string(c.encoder.mode)));
    c.encoder.share_heads = e.value("share_heads", c.encoder.share_heads);
  }
  if (j.contains("decoder")) {
    const auto& d = j["decoder"];
    c.decoder.n_layers = d.value("n_layers", c.decoder.n_layers);
    c.decoder.n_heads = d.value("n_heads", c.decoder.n_heads);
    c.decoder.ffn_dim = d.value("ffn_dim", c.decoder.ffn_dim);
  }
  c.corpus_path = j.value("corpus", std::string());
  c.language_set_path = j.value("languages", std::string());
  c.unit = j.value("unit", c.unit);
  c.out_dir = j.value("out_dir", std::string());
  c.keep_checkpoints = j.value("keep_checkpoints", c.keep_checkpoints);
  c.eval_beam = j.value("eval_beam", c.eval_beam);
  c.eval_ctc_weight = j.value("eval_ctc_weight", c.eval_ctc_weight);
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  return from_json(read_text_file(path));
}

std::map<std::string, LangMeta> lang_meta_from(
    const std::vector<LanguageSpec>& specs) {
  std::map<std::string, LangMeta> out;
  for (const auto& s : specs) {
    LangMeta m;
    m.group = s.group;
    m.space_delimited = s.space_delimited;
    m.confusable = s.confusable_with.has_value();
    out[s.lid] = m;
  }
  return out;
}

std::vector<ScoredUtterance> decode_split(const Model& model,
                                          const std::vector<Utterance>& utts,
                                          const Vocab& vocab,
                                          const DecodeOptions& opts) {
  std::vector<ScoredUtterance> scored;
  for (const auto& utt : utts) {
    if (!opts.split.empty() && utt.split != opts.split) continue;
    const auto hyps =
        joint_beam_search(model, utt.features, opts.beam, opts.lambda_dec);
    const Hypothesis& top = hyps.front();
    const Detokenized det = detokenize(top.tokens, vocab);
    ScoredUtterance s;
    s.ref_text = utt.text;
    s.ref_lid = utt.lid;
    s.hyp_text = det.text;
    s.hyp_lid = det.lid;
    s.int_lid = intermediate_lid(model.encoder.forward(utt.features), vocab);
    s.forced_close = top.forced_close;
    scored.push_back(std::move(s));
  }
  return scored;
}

EvalReport evaluate_model(const Model& model, const std::vector<Utterance>& utts,
                          const Vocab& vocab,
                          const std::map<std::string, LangMeta>& langs,
                          const DecodeOptions& opts) {
  return build_report(decode_split(model, utts, vocab, opts), langs);
}

TrainResult train(const TrainConfig& cfg) {
  cfg.loss.validate();
  if (cfg.out_dir.empty()) throw std::invalid_argument("train: out_dir not set");
  if (cfg.corpus_path.empty()) throw std::invalid_argument("train: corpus not set");
  fs::create_directories(cfg.out_dir);

  const std::vector<Utterance> corpus = read_dataset(cfg.corpus_path);
  if (corpus.empty()) throw std::runtime_error("train: empty corpus");
  const Unit unit = cfg.unit == "word" ? Unit::words : Unit::chars;
  const Vocab vocab = build_vocab(corpus, unit);

  ModelConfig mc;
  mc.input_dim = corpus[0].features.cols();
  mc.vocab_size = vocab.size();
  mc.n_lid = vocab.n_lid;
  mc.encoder = cfg.encoder;
  mc.decoder = cfg.decoder;
  Model model = Model::build(mc, cfg.seed);

  write_text_file(cfg.out_dir + "/config.json", cfg.to_json() + "\n");
  vocab.save(cfg.out_dir + "/vocab.txt");

  std::vector<LabelBundle> labels;
  labels.reserve(corpus.size());
  std::vector<int> train_idx, dev_idx, test_idx;
  for (size_t i = 0; i < corpus.size(); ++i) {
    labels.push_back(make_labels(corpus[i].text, corpus[i].lid, vocab));
    if (corpus[i].split == "train") train_idx.push_back(static_cast<int>(i));
    else if (corpus[i].split == "dev") dev_idx.push_back(static_cast<int>(i));
    else test_idx.push_back(static_cast<int>(i));
  }
  if (train_idx.empty()) throw std::runtime_error("train: no training split");

  const auto kinds = tap_kinds_for(cfg.encoder.mode,
                                   static_cast<int>(cfg.encoder.tap_layers.size()));
  const bool has_lid_tap =
      std::any_of(kinds.begin(), kinds.end(),
                  [](TapKind k) { return k != TapKind::asr; });
  const int n_inter =
      static_cast<int>(std::count(kinds.begin(), kinds.end(), TapKind::asr));

  std::ofstream loss_csv(cfg.out_dir + "/loss.csv");
  loss_csv << "step,l_att,l_ctc_enc";
  if (has_lid_tap) loss_csv << ",l_lid";
  for (int i = 1; i <= n_inter; ++i) loss_csv << ",l_inter_" << i;
  loss_csv << ",l_total\n";

  std::ofstream epoch_csv(cfg.out_dir + "/epochs.csv");
  epoch_csv << "epoch,train_loss,dev_cer,dev_lid\n";

  TrainResult result;
  result.run_dir = cfg.out_dir;
  Adam adam(model, cfg.adam);
  long long step = 0;

  // (score, epoch, path); higher dev score wins, earlier epoch on ties.
  std::vector<std::tuple<double, int, std::string>> kept;

  auto dev_eval = [&](void) -> std::pair<double, double> {
    long long errs = 0, ref_len = 0, lid_ok = 0, n = 0;
    for (int i : dev_idx) {
      const EncoderOutput enc = model.encoder.forward(corpus[i].features);
      const TokenSeq seq =
          ctc_greedy_decode(model.encoder.final_posterior(enc.h_final));
      const Detokenized det = detokenize(seq, vocab);
      const std::string ref = normalize_text(corpus[i].text);
      errs += edit_distance_chars(ref, det.text);
      ref_len += static_cast<long long>(ref.size());
      if (det.lid && *det.lid == corpus[i].lid) ++lid_ok;
      ++n;
    }
    const double cer = ref_len ? static_cast<double>(errs) / ref_len : 0.0;
    const double lid = n ? static_cast<double>(lid_ok) / n : 0.0;
    return {cer, lid};
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = train_idx;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x50000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      model.zero_grads();
      std::vector<Tensor> atts, encs;
      std::vector<std::vector<Tensor>> taps(kinds.size());
      for (size_t bi = start; bi < end; ++bi) {
        const int i = order[bi];
        UtteranceLosses u = model.forward_losses(corpus[i].features, labels[i]);
        atts.push_back(u.l_att);
        if (u.enc_ctc.achievable)
          encs.push_back(u.enc_ctc.neg_log_prob);
        else
          ++result.skipped_ctc_terms;
        for (size_t k = 0; k < u.tap_ctc.size(); ++k) {
          if (u.tap_ctc[k].achievable)
            taps[k].push_back(u.tap_ctc[k].neg_log_prob);
          else
            ++result.skipped_ctc_terms;
        }
      }
      const Tensor mean_att = mean_of(atts);
      const Tensor mean_enc = encs.empty() ? Tensor::scalar(0.0) : mean_of(encs);
      std::vector<Tensor> mean_taps;
      for (auto& tk : taps)
        mean_taps.push_back(tk.empty() ? Tensor::scalar(0.0) : mean_of(tk));
      LossBreakdown b = total_loss(mean_att, mean_enc, mean_taps, kinds,
                                   cfg.loss, cfg.encoder.mode);
      const double total = b.l_total.value();
      ++step;
      if (!std::isfinite(total))
        throw std::runtime_error("train: non-finite loss at step " +
                                 std::to_string(step) + " (batch starting at " +
                                 std::to_string(start) + ")");
      backward(b.l_total);
      adam.step(model, schedule_lr(cfg.peak_lr, cfg.warmup_steps, step));

      loss_csv << step << "," << format_double(b.l_att.value()) << ","
               << format_double(b.l_ctc_enc.value());
      if (has_lid_tap) {
        const auto lid = b.l_lid();
        loss_csv << "," << format_double(lid ? *lid : 0.0);
      }
      for (double v : b.l_inter()) loss_csv << "," << format_double(v);
      loss_csv << "," << format_double(total) << "\n";

      epoch_loss += total;
      ++n_batches;
    }
    epoch_loss /= std::max(n_batches, 1);

    const auto [dev_cer, dev_lid] = dev_eval();
    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_loss;
    es.dev_cer = dev_cer;
    es.dev_lid = dev_lid;
    result.epochs.push_back(es);
    epoch_csv << epoch << "," << format_double(epoch_loss) << ","
              << format_double(dev_cer) << "," << format_double(dev_lid) << "\n";
    std::cerr << "[train] epoch " << epoch << " loss " << epoch_loss
              << " dev_cer " << dev_cer << " dev_lid " << dev_lid << "\n";

    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.bin", epoch);
    const std::string path = cfg.out_dir + "/" + name;
    model.save(path);
    const double score = 1.0 - dev_cer;
    kept.emplace_back(score, epoch, path);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::get<1>(a) < std::get<1>(b);
    });
    while (kept.size() > static_cast<size_t>(cfg.keep_checkpoints)) {
      fs::remove(std::get<2>(kept.back()));
      kept.pop_back();
    }
  }

  std::vector<std::string> kept_paths;
  {
    auto by_epoch = kept;
    std::sort(by_epoch.begin(), by_epoch.end(), [](const auto& a, const auto& b) {
      return std::get<1>(a) < std::get<1>(b);
    });
    for (const auto& [score, epoch, path] : by_epoch) kept_paths.push_back(path);
  }
  result.kept_checkpoints = kept_paths;

  Model averaged = checkpoint_average(kept_paths);
  result.avg_checkpoint = cfg.out_dir + "/avg.bin";
  averaged.save(result.avg_checkpoint);

  const std::vector<LanguageSpec> specs =
      cfg.language_set_path.empty()
          ? std::vector<LanguageSpec>{}
          : read_language_set(cfg.language_set_path);
  DecodeOptions opts;
  opts.split = "test";
  opts.beam = cfg.eval_beam;
  opts.lambda_dec = cfg.eval_ctc_weight;
  result.test_report =
      evaluate_model(averaged, corpus, vocab, lang_meta_from(specs), opts);
  write_text_file(cfg.out_dir + "/eval.json", result.test_report.to_json() + "\n");
  write_text_file(cfg.out_dir + "/confusion.csv", result.test_report.confusion_csv());
  return result;
}

std::vector<MatrixRow> run_experiment_matrix(const TrainConfig& base,
                                             const std::vector<ConditioningMode>& modes,
                                             const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<MatrixRow> rows;
  std::map<std::string, LangMeta> langs;
  if (!base.language_set_path.empty())
    langs = lang_meta_from(read_language_set(base.language_set_path));

  for (ConditioningMode mode : modes) {
    MatrixRow row;
    row.mode = to_string(mode);
    try {
      TrainConfig cfg = base;
      cfg.encoder.mode = mode;
      cfg.out_dir = out_dir + "/run_" + row.mode;
      TrainResult res = train(cfg);
      const EvalReport& rep = res.test_report;
      row.ok = true;
      row.cer = rep.corpus.cer();
      row.mer = rep.corpus.mer();
      row.lid_acc = rep.corpus.lid_acc();
      row.int_lid_acc = rep.corpus.int_lid_acc();
      // Intermediate-head accuracy restricted to non-confusable languages.
      LangStats nonconf;
      for (const auto& [lid, stats] : rep.per_lang) {
        auto it = langs.find(lid);
        if (it != langs.end() && it->second.confusable) continue;
        nonconf.absorb(stats);
      }
      row.int_lid_acc_nonconfusable = nonconf.int_lid_acc();
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      std::cerr << "[matrix] mode " << row.mode << " failed: " << e.what() << "\n";
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "mode,cer,mer,lid_acc,int_lid_acc,int_lid_acc_nonconfusable,status,error\n";
  for (const auto& r : rows) {
    csv << r.mode << ",";
    if (r.ok) {
      csv << format_double(r.cer) << "," << format_double(r.mer) << ","
          << format_double(r.lid_acc) << ",";
      csv << (r.int_lid_acc ? format_double(*r.int_lid_acc) : std::string()) << ",";
      csv << (r.int_lid_acc_nonconfusable
                  ? format_double(*r.int_lid_acc_nonconfusable)
                  : std::string());
      csv << ",ok,";
    } else {
      csv << ",,,,,failed," << r.error;
    }
    csv << "\n";
  }
  write_text_file(out_dir + "/matrix.csv", csv.str());
  return rows;
}

}  // namespace hierctc
