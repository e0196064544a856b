// model.cc

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

#include "hierctc/model.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace hierctc {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T* v) {
  in.read(reinterpret_cast<char*>(v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

json encoder_cfg_json(const EncoderConfig& e) {
  return json{{"n_layers", e.n_layers},   {"d_model", e.d_model},
              {"n_heads", e.n_heads},     {"ffn_dim", e.ffn_dim},
              {"tap_layers", e.tap_layers}, {"mode", to_string(e.mode)},
              {"share_heads", e.share_heads}};
}

EncoderConfig encoder_cfg_from(const json& j) {
  EncoderConfig e;
  e.n_layers = j.at("n_layers").get<int>();
  e.d_model = j.at("d_model").get<int>();
  e.n_heads = j.at("n_heads").get<int>();
  e.ffn_dim = j.at("ffn_dim").get<int>();
  e.tap_layers = j.at("tap_layers").get<std::vector<int>>();
  e.mode = mode_from_string(j.at("mode").get<std::string>());
  e.share_heads = j.at("share_heads").get<bool>();
  return e;
}

}  // namespace

std::string ModelConfig::to_json() const {
  json j;
  j["input_dim"] = input_dim;
  j["vocab_size"] = vocab_size;
  j["n_lid"] = n_lid;
  j["encoder"] = encoder_cfg_json(encoder);
  j["decoder"] = json{{"n_layers", decoder.n_layers},
                      {"n_heads", decoder.n_heads},
                      {"ffn_dim", decoder.ffn_dim}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig cfg;
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.n_lid = j.at("n_lid").get<int>();
  cfg.encoder = encoder_cfg_from(j.at("encoder"));
  cfg.decoder.n_layers = j.at("decoder").at("n_layers").get<int>();
  cfg.decoder.n_heads = j.at("decoder").at("n_heads").get<int>();
  cfg.decoder.ffn_dim = j.at("decoder").at("ffn_dim").get<int>();
  return cfg;
}

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  Model m;
  m.cfg = cfg;
  Rng rng(mix_seed(seed, 0x6d6f64));
  ParamSink sink = [&m](const std::string& name, const Tensor& t) {
    m.params.emplace_back(name, t);
  };
  m.encoder = Encoder::init(cfg.encoder, cfg.input_dim, cfg.vocab_size, rng, sink);
  m.decoder = Decoder::init(cfg.decoder, cfg.encoder.d_model, cfg.vocab_size,
                            rng, sink);
  return m;
}

std::int64_t Model::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

void Model::zero_grads() {
  for (auto& [name, t] : params) t.zero_grad();
}

UtteranceLosses Model::forward_losses(const Tensor& features,
                                      const LabelBundle& labels) const {
  UtteranceLosses out;
  out.enc_out = encoder.forward(features);
  out.tap_kinds = out.enc_out.tap_kinds;
  for (size_t i = 0; i < out.enc_out.tap_posteriors.size(); ++i) {
    const TokenSeq& target = out.tap_kinds[i] == TapKind::asr
                                 ? labels.asr
                                 : out.tap_kinds[i] == TapKind::lid_utt
                                       ? labels.lid_utt
                                       : labels.lid_tok;
    out.tap_ctc.push_back(ctc_loss(out.enc_out.tap_posteriors[i], target));
  }
  out.enc_ctc =
      ctc_loss(encoder.final_posterior(out.enc_out.h_final), labels.asr);
  out.l_att = attention_loss(decoder, out.enc_out.h_final, labels.asr);
  return out;
}

LossBreakdown Model::compute_loss(const Tensor& features,
                                  const LabelBundle& labels,
                                  const LossConfig& loss_cfg) const {
  UtteranceLosses u = forward_losses(features, labels);
  std::vector<Tensor> tap_tensors;
  for (const auto& r : u.tap_ctc) tap_tensors.push_back(r.neg_log_prob);
  return total_loss(u.l_att, u.enc_ctc.neg_log_prob, tap_tensors, u.tap_kinds,
                    loss_cfg, cfg.encoder.mode);
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const std::string cfg_json = cfg.to_json();
  write_pod(out, static_cast<std::uint64_t>(cfg_json.size()));
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  write_pod(out, static_cast<std::uint64_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  read_pod(in, &version);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  std::uint64_t cfg_len = 0;
  read_pod(in, &cfg_len);
  std::string cfg_json(cfg_len, '\0');
  in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config");

  Model m = Model::build(ModelConfig::from_json(cfg_json), /*seed=*/0);
  std::unordered_map<std::string, Tensor> by_name;
  for (auto& [name, t] : m.params) by_name.emplace(name, t);

  std::uint64_t n_tensors = 0;
  read_pod(in, &n_tensors);
  if (n_tensors != m.params.size())
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::uint32_t name_len = 0;
    read_pod(in, &name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rank = 0;
    read_pod(in, &rank);
    std::vector<int> shape(rank);
    std::int64_t count = 1;
    for (auto& d : shape) {
      std::uint64_t v = 0;
      read_pod(in, &v);
      d = static_cast<int>(v);
      count *= d;
    }
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unknown tensor " + name);
    Tensor t = it->second;
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
  }
  return m;
}

}  // namespace hierctc
