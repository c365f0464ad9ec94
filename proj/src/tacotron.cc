// Copyright 2026 The ISG Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "isg/tacotron.h"

#include <cmath>

namespace isg {

using nn::Var;
namespace ad = isg::ad;

SpeechCoreConfig SpeechCoreConfig::toy() {
  SpeechCoreConfig c;
  c.embedding_dim = 64;
  c.encoder_dim = 64;
  c.attention_rnn_dim = 128;
  c.attention_dim = 16;
  c.location_filters = 4;
  c.decoder_rnn_dim = 128;
  c.prenet_dims = {32, 32};
  c.postnet_dim = 64;
  c.max_decoder_steps = 200;
  return c;
}

void SpeechCoreConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ValidationError(std::string("speech core: ") + name + " must be >= 1");
  };
  auto rate = [](double p, const char* name) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw ValidationError(std::string("speech core: ") + name + " must be in [0, 1)");
    }
  };
  positive(n_symbols, "n_symbols");
  positive(n_mels, "n_mels");
  positive(embedding_dim, "embedding_dim");
  positive(encoder_kernel, "encoder_kernel");
  positive(attention_rnn_dim, "attention_rnn_dim");
  positive(attention_dim, "attention_dim");
  positive(location_filters, "location_filters");
  positive(location_kernel, "location_kernel");
  positive(decoder_rnn_dim, "decoder_rnn_dim");
  positive(postnet_kernel, "postnet_kernel");
  positive(postnet_dim, "postnet_dim");
  positive(n_frames_per_step, "n_frames_per_step");
  positive(max_decoder_steps, "max_decoder_steps");
  if (encoder_dim < 2 || encoder_dim % 2 != 0) {
    throw ValidationError("speech core: encoder_dim must be even and >= 2");
  }
  if (encoder_n_convs < 0 || postnet_n_convs < 0) {
    throw ValidationError("speech core: conv counts must be >= 0");
  }
  if (encoder_kernel % 2 == 0 || location_kernel % 2 == 0 || postnet_kernel % 2 == 0) {
    throw ValidationError("speech core: kernels must be odd");
  }
  for (int d : prenet_dims) positive(d, "prenet width");
  rate(encoder_dropout, "encoder_dropout");
  rate(attention_dropout, "attention_dropout");
  rate(decoder_dropout, "decoder_dropout");
  rate(prenet_dropout, "prenet_dropout");
  rate(postnet_dropout, "postnet_dropout");
}

void to_json(nlohmann::json& j, const SpeechCoreConfig& c) {
  j = {{"n_symbols", c.n_symbols},
       {"n_mels", c.n_mels},
       {"embedding_dim", c.embedding_dim},
       {"encoder_n_convs", c.encoder_n_convs},
       {"encoder_kernel", c.encoder_kernel},
       {"encoder_dim", c.encoder_dim},
       {"encoder_dropout", c.encoder_dropout},
       {"attention_rnn_dim", c.attention_rnn_dim},
       {"attention_dim", c.attention_dim},
       {"location_filters", c.location_filters},
       {"location_kernel", c.location_kernel},
       {"attention_dropout", c.attention_dropout},
       {"decoder_rnn_dim", c.decoder_rnn_dim},
       {"decoder_dropout", c.decoder_dropout},
       {"prenet_dims", c.prenet_dims},
       {"prenet_dropout", c.prenet_dropout},
       {"postnet_n_convs", c.postnet_n_convs},
       {"postnet_dim", c.postnet_dim},
       {"postnet_kernel", c.postnet_kernel},
       {"postnet_dropout", c.postnet_dropout},
       {"n_frames_per_step", c.n_frames_per_step},
       {"max_decoder_steps", c.max_decoder_steps},
       {"stop_threshold", c.stop_threshold}};
}

void from_json(const nlohmann::json& j, SpeechCoreConfig& c) {
  SpeechCoreConfig d = j.value("preset", std::string("reference")) == "toy"
                           ? SpeechCoreConfig::toy()
                           : SpeechCoreConfig::reference();
#define ISG_FIELD(name) c.name = j.value(#name, d.name)
  ISG_FIELD(n_symbols);
  ISG_FIELD(n_mels);
  ISG_FIELD(embedding_dim);
  ISG_FIELD(encoder_n_convs);
  ISG_FIELD(encoder_kernel);
  ISG_FIELD(encoder_dim);
  ISG_FIELD(encoder_dropout);
  ISG_FIELD(attention_rnn_dim);
  ISG_FIELD(attention_dim);
  ISG_FIELD(location_filters);
  ISG_FIELD(location_kernel);
  ISG_FIELD(attention_dropout);
  ISG_FIELD(decoder_rnn_dim);
  ISG_FIELD(decoder_dropout);
  ISG_FIELD(prenet_dims);
  ISG_FIELD(prenet_dropout);
  ISG_FIELD(postnet_n_convs);
  ISG_FIELD(postnet_dim);
  ISG_FIELD(postnet_kernel);
  ISG_FIELD(postnet_dropout);
  ISG_FIELD(n_frames_per_step);
  ISG_FIELD(max_decoder_steps);
  ISG_FIELD(stop_threshold);
#undef ISG_FIELD
}

SpeechCore::SpeechCore(nn::ParameterStore& store, const std::string& prefix,
                       const SpeechCoreConfig& config, nn::Rng& rng)
    : config_(config), prefix_(prefix) {
  config_.validate();
  const SpeechCoreConfig& c = config_;
  const std::string p = prefix + ".";
  embedding_ = nn::Embedding(store, p + "embedding", c.n_symbols, c.embedding_dim, rng);
  int width = c.embedding_dim;
  for (int i = 0; i < c.encoder_n_convs; ++i) {
    encoder_convs_.emplace_back(store, p + "encoder.conv" + std::to_string(i), width,
                                c.encoder_dim, c.encoder_kernel, rng);
    width = c.encoder_dim;
  }
  encoder_fwd_ = nn::LstmCell(store, p + "encoder.lstm_fwd", width, c.encoder_dim / 2, rng);
  encoder_bwd_ = nn::LstmCell(store, p + "encoder.lstm_bwd", width, c.encoder_dim / 2, rng);

  int in = c.n_mels;
  for (std::size_t i = 0; i < c.prenet_dims.size(); ++i) {
    prenet_.emplace_back(store, p + "prenet" + std::to_string(i), in, c.prenet_dims[i], rng,
                         false);
    in = c.prenet_dims[i];
  }
  attention_rnn_ = nn::LstmCell(store, p + "attention_rnn", in + c.encoder_dim,
                                c.attention_rnn_dim, rng);
  query_ = nn::Linear(store, p + "attention.query", c.attention_rnn_dim, c.attention_dim, rng, false);
  memory_ = nn::Linear(store, p + "attention.memory", c.encoder_dim, c.attention_dim, rng, false);
  energy_ = nn::Linear(store, p + "attention.v", c.attention_dim, 1, rng, false);
  location_conv_ = nn::Conv1d(store, p + "attention.location_conv", 2, c.location_filters,
                              c.location_kernel, rng, 1, false);
  location_dense_ = nn::Linear(store, p + "attention.location_dense", c.location_filters,
                               c.attention_dim, rng, false);
  decoder_rnn_ = nn::LstmCell(store, p + "decoder_rnn", c.attention_rnn_dim + c.encoder_dim,
                              c.decoder_rnn_dim, rng);
  projection_ = nn::Linear(store, p + "projection", c.decoder_rnn_dim + c.encoder_dim,
                           c.n_mels * c.n_frames_per_step, rng);
  gate_ = nn::Linear(store, p + "gate", c.decoder_rnn_dim + c.encoder_dim, 1, rng);
  for (int i = 0; i < c.postnet_n_convs; ++i) {
    const int a = i == 0 ? c.n_mels : c.postnet_dim;
    const int b = i + 1 == c.postnet_n_convs ? c.n_mels : c.postnet_dim;
    postnet_.emplace_back(store, p + "postnet.conv" + std::to_string(i), a, b,
                          c.postnet_kernel, rng);
  }
}

Var SpeechCore::encode(const std::vector<int>& ids, bool training, nn::Rng& rng) const {
  if (ids.empty()) throw ValidationError("encode: empty token sequence");
  for (int id : ids) {
    if (id < 0 || id >= config_.n_symbols) {
      throw ValidationError("encode: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  Var x = embedding_(ids);
  for (const nn::Conv1d& conv : encoder_convs_) {
    x = ad::relu(conv(x));
    if (training && config_.encoder_dropout > 0) x = ad::dropout(x, config_.encoder_dropout, rng);
  }
  return ad::concat_cols({nn::run_lstm(encoder_fwd_, x, false), nn::run_lstm(encoder_bwd_, x, true)});
}

SpeechForward SpeechCore::teacher_forced(const std::vector<int>& ids, const Matrix& target,
                                         bool training, nn::Rng& rng) const {
  if (target.rows() == 0 || target.cols() != config_.n_mels) {
    throw ValidationError("teacher_forced: target must be frames x " +
                          std::to_string(config_.n_mels));
  }
  const Matrix padded = pad_to_multiple(target, config_.n_frames_per_step);
  return decode(encode(ids, training, rng), &padded, training, rng);
}

SpeechForward SpeechCore::free_running(const std::vector<int>& ids, bool training,
                                       nn::Rng& rng) const {
  return decode(encode(ids, training, rng), nullptr, training, rng);
}

SpeechForward SpeechCore::decode(const Var& memory, const Matrix* target, bool training,
                                 nn::Rng& rng) const {
  const SpeechCoreConfig& c = config_;
  const int r = c.n_frames_per_step;
  const Eigen::Index tokens = memory.rows();
  const Eigen::Index steps =
      target != nullptr ? target->rows() / r : static_cast<Eigen::Index>(c.max_decoder_steps);

  const Var processed_memory = memory_(memory);
  nn::LstmState att = attention_rnn_.initial_state();
  nn::LstmState dec = decoder_rnn_.initial_state();
  Var context = ad::constant(Matrix::Zero(1, c.encoder_dim));
  Var weights = ad::constant(Matrix::Zero(1, tokens));
  Var cumulative = weights;
  Var prev = ad::constant(Matrix::Zero(1, c.n_mels));

  std::vector<Var> frames, gates, states;
  std::vector<Eigen::RowVectorXd> align;
  bool stopped = false;
  for (Eigen::Index s = 0; s < steps; ++s) {
    if (target != nullptr && s > 0) prev = ad::constant(target->row(s * r - 1));
    Var x = prev;
    for (const nn::Linear& layer : prenet_) {
      x = ad::relu(layer(x));
      if (c.prenet_dropout > 0) x = ad::dropout(x, c.prenet_dropout, rng);
    }
    att = attention_rnn_(ad::concat_cols({x, context}), att);
    if (training && c.attention_dropout > 0) att.h = ad::dropout(att.h, c.attention_dropout, rng);

    const Var location = location_dense_(
        location_conv_(ad::transpose(ad::concat_rows({weights, cumulative}))));
    const Var energies =
        energy_(ad::tanh(ad::add(ad::add(processed_memory, location), query_(att.h))));
    weights = ad::softmax_rows(ad::transpose(energies));
    cumulative = ad::add(cumulative, weights);
    context = ad::matmul(weights, memory);

    dec = decoder_rnn_(ad::concat_cols({att.h, context}), dec);
    if (training && c.decoder_dropout > 0) dec.h = ad::dropout(dec.h, c.decoder_dropout, rng);
    const Var hc = ad::concat_cols({dec.h, context});
    const Var out = projection_(hc);
    const Var gate = gate_(hc);
    for (int k = 0; k < r; ++k) frames.push_back(ad::slice_cols(out, k * c.n_mels, c.n_mels));
    gates.push_back(gate);
    states.push_back(att.h);
    align.push_back(weights.value().row(0));
    if (target == nullptr) {
      prev = frames.back();
      if (1.0 / (1.0 + std::exp(-gate.item())) > c.stop_threshold) {
        stopped = true;
        break;
      }
    }
  }

  SpeechForward f;
  f.truncated = target == nullptr && !stopped;
  f.mel_pre = ad::concat_rows(frames);
  f.stop_logits = ad::concat_rows(gates);
  f.attn_states = ad::concat_rows(states);
  f.alignment.resize(static_cast<Eigen::Index>(align.size()), tokens);
  for (std::size_t s = 0; s < align.size(); ++s) f.alignment.row(static_cast<Eigen::Index>(s)) = align[s];
  Var y = f.mel_pre;
  for (std::size_t i = 0; i < postnet_.size(); ++i) {
    y = postnet_[i](y);
    if (i + 1 < postnet_.size()) y = ad::tanh(y);
    if (training && c.postnet_dropout > 0) y = ad::dropout(y, c.postnet_dropout, rng);
  }
  f.mel_post = postnet_.empty() ? f.mel_pre : ad::add(f.mel_pre, y);
  return f;
}

SpeechOutput to_speech_output(const SpeechForward& f, const MelConfig& mel) {
  SpeechOutput o;
  o.mel_pre.values = f.mel_pre.value();
  o.mel_post.values = f.mel_post.value();
  for (auto* m : {&o.mel_pre, &o.mel_post}) {
    m->fps = mel.fps();
    m->sample_rate = mel.sample_rate;
  }
  const Matrix& g = f.stop_logits.value();
  o.stop_logits.assign(g.data(), g.data() + g.size());
  o.attn.states = f.attn_states.value();
  o.attn.fps = mel.fps() * static_cast<double>(f.attn_states.rows()) /
               static_cast<double>(std::max<Eigen::Index>(1, f.mel_pre.rows()));
  o.alignment = f.alignment;
  o.truncated = f.truncated;
  return o;
}

Matrix stop_targets(Eigen::Index frames, int r) {
  const Eigen::Index steps = (frames + r - 1) / r;
  Matrix t = Matrix::Zero(steps, 1);
  if (steps > 0) t(steps - 1, 0) = 1.0;
  return t;
}

Matrix pad_to_multiple(const Matrix& m, int r) {
  const Eigen::Index rows = (m.rows() + r - 1) / r * r;
  if (rows == m.rows()) return m;
  Matrix out(rows, m.cols());
  out.topRows(m.rows()) = m;
  for (Eigen::Index i = m.rows(); i < rows; ++i) out.row(i) = m.row(m.rows() - 1);
  return out;
}

Var tts_loss(const SpeechForward& f, const Matrix& target_mel, const Matrix& target_stops) {
  const Eigen::Index steps = f.stop_logits.rows();
  if (steps == 0 || f.mel_pre.rows() % steps != 0) {
    throw ValidationError("tts_loss: malformed decoder output");
  }
  const int r = static_cast<int>(f.mel_pre.rows() / steps);
  const Matrix target = pad_to_multiple(target_mel, r);
  if (target.rows() != f.mel_pre.rows() || target.cols() != f.mel_pre.cols()) {
    throw ValidationError("tts_loss: target mel shape does not match the output");
  }
  if (target_stops.rows() != steps || target_stops.cols() != 1) {
    throw ValidationError("tts_loss: stop target shape does not match the output");
  }
  const Var t = ad::constant(target);
  return ad::add(ad::add(ad::mse(f.mel_pre, t), ad::mse(f.mel_post, t)),
                 ad::bce_with_logits(f.stop_logits, target_stops));
}

}  // namespace isg
