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

#include "isg/glow.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "isg/text.h"

namespace isg {

using Index = Eigen::Index;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2 pi)

Matrix sinusoid_positions(Index n, Index dim) {
  Matrix pe(n, dim);
  for (Index p = 0; p < n; ++p) {
    for (Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(p, i) = i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return pe;
}

ad::Var maybe_dropout(const ad::Var& x, double p, bool training, nn::Rng& rng) {
  return training ? ad::dropout(x, p, rng) : x;
}

}  // namespace

bool alignment_is_valid(const Alignment& a, int tokens) {
  if (tokens < 1 || static_cast<int>(a.size()) < tokens) return false;
  if (a.front() != 0 || a.back() != tokens - 1) return false;
  for (std::size_t t = 1; t < a.size(); ++t) {
    const int step = a[t] - a[t - 1];
    if (step != 0 && step != 1) return false;
  }
  return true;
}

Matrix frame_log_likelihood(const Matrix& z, const TokenPrior& prior) {
  if (z.cols() != prior.mu.cols() || prior.sigma.rows() != prior.mu.rows() ||
      prior.sigma.cols() != prior.mu.cols()) {
    throw ValidationError("frame_log_likelihood: shape mismatch");
  }
  const Matrix inv_var = prior.sigma.array().square().inverse().matrix();
  const Matrix mu_iv = prior.mu.cwiseProduct(inv_var);
  const Eigen::RowVectorXd per_token =
      (-0.5 * kLog2Pi * static_cast<double>(z.cols()) -
       prior.sigma.array().log().rowwise().sum() -
       0.5 * prior.mu.cwiseProduct(mu_iv).rowwise().sum().array())
          .matrix()
          .transpose();
  Matrix ll = -0.5 * z.array().square().matrix() * inv_var.transpose() +
              z * mu_iv.transpose();
  ll.rowwise() += per_token;
  return ll;
}

Alignment mas_align(const Matrix& ll) {
  const Index t_len = ll.rows(), n = ll.cols();
  if (n < 1) throw AlignmentError("alignment: no tokens");
  if (t_len < n) {
    throw AlignmentError("alignment infeasible: " + std::to_string(n) + " tokens but only " +
                         std::to_string(t_len) + " frames");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Matrix q = Matrix::Constant(t_len, n, kNegInf);
  q(0, 0) = ll(0, 0);
  for (Index t = 1; t < t_len; ++t) {
    const Index hi = std::min<Index>(t, n - 1);
    for (Index j = 0; j <= hi; ++j) {
      const double stay = q(t - 1, j);
      const double move = j > 0 ? q(t - 1, j - 1) : kNegInf;
      q(t, j) = ll(t, j) + std::max(stay, move);
    }
  }
  Alignment a(static_cast<std::size_t>(t_len));
  Index j = n - 1;
  for (Index t = t_len - 1; t > 0; --t) {
    a[static_cast<std::size_t>(t)] = static_cast<int>(j);
    if (j == 0) continue;
    const double stay = q(t - 1, j);
    const double move = q(t - 1, j - 1);
    const double tol = 1e-9 * std::max(1.0, std::abs(stay));
    if (stay == kNegInf || move >= stay - tol) --j;
  }
  a[0] = static_cast<int>(j);
  return a;
}

Alignment mas_align(const Matrix& z, const TokenPrior& prior) {
  return mas_align(frame_log_likelihood(z, prior));
}

std::vector<int> durations_from_alignment(const Alignment& a, int tokens) {
  std::vector<int> d(static_cast<std::size_t>(tokens), 0);
  for (int j : a) {
    if (j < 0 || j >= tokens) throw ValidationError("alignment index out of range");
    ++d[static_cast<std::size_t>(j)];
  }
  return d;
}

Alignment alignment_from_durations(const std::vector<int>& durations) {
  Alignment a;
  for (std::size_t j = 0; j < durations.size(); ++j) {
    if (durations[j] < 1) throw ValidationError("durations must be >= 1 frame");
    a.insert(a.end(), static_cast<std::size_t>(durations[j]), static_cast<int>(j));
  }
  return a;
}

std::vector<int> duration_frames(const std::vector<double>& durations, double length_scale) {
  if (!(length_scale > 0)) throw ValidationError("length scale must be > 0");
  std::vector<int> out;
  out.reserve(durations.size());
  for (double d : durations) {
    out.push_back(std::max(1, static_cast<int>(std::lround(d * length_scale))));
  }
  return out;
}

ad::Var nll_loss(const ad::Var& z, const ad::Var& mu, const ad::Var& log_sigma,
                 const ad::Var& logdet, const Alignment& alignment) {
  if (!alignment_is_valid(alignment, static_cast<int>(mu.rows())) ||
      static_cast<Index>(alignment.size()) != z.rows()) {
    throw AlignmentError("nll_loss: invalid alignment");
  }
  const double dims = static_cast<double>(z.rows() * z.cols());
  ad::Var mu_f = ad::gather_rows(mu, alignment);
  ad::Var ls_f = ad::gather_rows(log_sigma, alignment);
  ad::Var diff = ad::mul(ad::sub(z, mu_f), ad::exp(ad::neg(ls_f)));
  ad::Var total = ad::add(ad::sum(ls_f), ad::scale(ad::sum(ad::square(diff)), 0.5));
  total = ad::add_scalar(ad::sub(total, logdet), 0.5 * kLog2Pi * dims);
  return ad::scale(total, 1.0 / dims);
}

double nll_loss(const Matrix& z, const TokenPrior& prior, double logdet,
                const Alignment& alignment) {
  if (!alignment_is_valid(alignment, static_cast<int>(prior.mu.rows())) ||
      static_cast<Index>(alignment.size()) != z.rows()) {
    throw AlignmentError("nll_loss: invalid alignment");
  }
  double ll = 0.0;
  for (Index t = 0; t < z.rows(); ++t) {
    const int j = alignment[static_cast<std::size_t>(t)];
    const auto s = prior.sigma.row(j).array();
    ll += (-0.5 * kLog2Pi - s.log() -
           0.5 * ((z.row(t).array() - prior.mu.row(j).array()) / s).square())
              .sum();
  }
  return -(ll + logdet) / static_cast<double>(z.rows() * z.cols());
}

int GlowIsgConfig::padding_for(int channels, int group, int squeeze) {
  if (group < 1 || squeeze < 1) return 0;
  int p = 0;
  while (((channels + p) * squeeze) % group != 0) ++p;
  return p;
}

void GlowIsgConfig::resolve_channels() {
  pad_channels = padding_for(n_mels + motion_dim, decoder.group, decoder.squeeze);
  decoder.channels = joint_channels();
}

void GlowIsgConfig::validate() const {
  if (n_symbols < 1 || n_mels < 1 || motion_dim < 0 || pad_channels < 0) {
    throw ValidationError("glow config: invalid channel or symbol counts");
  }
  if (add_blank && (blank_id < 0 || blank_id >= n_symbols)) {
    throw ValidationError("glow config: blank id out of range");
  }
  if (encoder.hidden < 1 || encoder.heads < 1 || encoder.hidden % encoder.heads != 0) {
    throw ValidationError("glow config: encoder hidden size must be divisible by heads");
  }
  if (encoder.layers < 1 || encoder.filter < 1 || encoder.kernel < 1 || duration.filter < 1 ||
      duration.kernel < 1) {
    throw ValidationError("glow config: invalid encoder sizes");
  }
  if (decoder.channels != joint_channels()) {
    throw ValidationError("glow config: decoder channels " + std::to_string(decoder.channels) +
                          " != joint channels " + std::to_string(joint_channels()));
  }
  decoder.validate();
}

GlowIsgConfig GlowIsgConfig::reference() {
  GlowIsgConfig c;
  c.motion_dim = 45;
  c.resolve_channels();
  return c;
}

GlowIsgConfig GlowIsgConfig::toy() {
  GlowIsgConfig c;
  c.motion_dim = 30;
  c.encoder = {32, 64, 2, 2, 3, 0.1, false};
  c.duration = {32, 3, 0.1};
  c.decoder.n_blocks = 4;
  c.decoder.group = 4;
  c.decoder.wavenet = {32, 3, 2, 1, 0};
  c.resolve_channels();
  return c;
}

void to_json(nlohmann::json& j, const GlowIsgConfig& c) {
  j = {{"n_symbols", c.n_symbols},
       {"blank_id", c.blank_id},
       {"add_blank", c.add_blank},
       {"n_mels", c.n_mels},
       {"motion_dim", c.motion_dim},
       {"pad_channels", c.pad_channels},
       {"pad_noise_std", c.pad_noise_std},
       {"mean_only", c.mean_only},
       {"fps", c.fps},
       {"sample_rate", c.sample_rate},
       {"encoder",
        {{"hidden", c.encoder.hidden},
         {"filter", c.encoder.filter},
         {"heads", c.encoder.heads},
         {"layers", c.encoder.layers},
         {"kernel", c.encoder.kernel},
         {"dropout", c.encoder.dropout},
         {"prenet", c.encoder.prenet}}},
       {"duration",
        {{"filter", c.duration.filter},
         {"kernel", c.duration.kernel},
         {"dropout", c.duration.dropout}}},
       {"decoder", c.decoder}};
}

void from_json(const nlohmann::json& j, GlowIsgConfig& c) {
  c = j.value("preset", std::string("reference")) == "toy" ? GlowIsgConfig::toy()
                                                            : GlowIsgConfig::reference();
  c.n_symbols = j.value("n_symbols", c.n_symbols);
  c.blank_id = j.value("blank_id", c.blank_id);
  c.add_blank = j.value("add_blank", c.add_blank);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.motion_dim = j.value("motion_dim", c.motion_dim);
  c.pad_noise_std = j.value("pad_noise_std", c.pad_noise_std);
  c.mean_only = j.value("mean_only", c.mean_only);
  c.fps = j.value("fps", c.fps);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder.hidden = e.value("hidden", c.encoder.hidden);
    c.encoder.filter = e.value("filter", c.encoder.filter);
    c.encoder.heads = e.value("heads", c.encoder.heads);
    c.encoder.layers = e.value("layers", c.encoder.layers);
    c.encoder.kernel = e.value("kernel", c.encoder.kernel);
    c.encoder.dropout = e.value("dropout", c.encoder.dropout);
    c.encoder.prenet = e.value("prenet", c.encoder.prenet);
  }
  if (j.contains("duration")) {
    const auto& d = j.at("duration");
    c.duration.filter = d.value("filter", c.duration.filter);
    c.duration.kernel = d.value("kernel", c.duration.kernel);
    c.duration.dropout = d.value("dropout", c.duration.dropout);
  }
  if (j.contains("decoder")) c.decoder = j.at("decoder").get<flow::FlowDecoderConfig>();
  c.resolve_channels();
}

GlowIsg::GlowIsg(nn::ParameterStore& store, const std::string& prefix,
                 const GlowIsgConfig& config, nn::Rng& rng)
    : cfg_(config) {
  cfg_.validate();
  const int h = cfg_.encoder.hidden;
  const int c = cfg_.joint_channels();
  const std::string enc = prefix + ".encoder";
  embedding_ = std::make_unique<nn::Embedding>(store, enc + ".embedding", cfg_.n_symbols, h, rng);
  if (cfg_.encoder.prenet) {
    for (int i = 0; i < 3; ++i) {
      const std::string n = enc + ".prenet.conv" + std::to_string(i);
      prenet_convs_.emplace_back(store, n, h, h, 5, rng);
      prenet_norms_.emplace_back(store, n + ".norm", h);
    }
    prenet_proj_ = std::make_unique<nn::Linear>(store, enc + ".prenet.proj", h, h, rng);
    prenet_proj_->weight()->value.setZero();
  }
  for (int i = 0; i < cfg_.encoder.layers; ++i) {
    const std::string n = enc + ".layer" + std::to_string(i);
    layers_.push_back(EncoderLayer{
        nn::Linear(store, n + ".attn.q", h, h, rng), nn::Linear(store, n + ".attn.k", h, h, rng),
        nn::Linear(store, n + ".attn.v", h, h, rng), nn::Linear(store, n + ".attn.o", h, h, rng),
        nn::LayerNorm(store, n + ".norm1", h),
        nn::Conv1d(store, n + ".ffn1", h, cfg_.encoder.filter, cfg_.encoder.kernel, rng),
        nn::Conv1d(store, n + ".ffn2", cfg_.encoder.filter, h, cfg_.encoder.kernel, rng),
        nn::LayerNorm(store, n + ".norm2", h)});
  }
  proj_m_ = std::make_unique<nn::Linear>(store, enc + ".proj_m", h, c, rng);
  if (!cfg_.mean_only) {
    proj_s_ = std::make_unique<nn::Linear>(store, enc + ".proj_s", h, c, rng);
  }
  const std::string dp = prefix + ".duration";
  const int f = cfg_.duration.filter;
  dp_conv1_ = std::make_unique<nn::Conv1d>(store, dp + ".conv1", h, f, cfg_.duration.kernel, rng);
  dp_norm1_ = std::make_unique<nn::LayerNorm>(store, dp + ".norm1", f);
  dp_conv2_ = std::make_unique<nn::Conv1d>(store, dp + ".conv2", f, f, cfg_.duration.kernel, rng);
  dp_norm2_ = std::make_unique<nn::LayerNorm>(store, dp + ".norm2", f);
  dp_proj_ = std::make_unique<nn::Linear>(store, dp + ".proj", f, 1, rng);
  decoder_ = std::make_unique<flow::FlowDecoder>(store, prefix + ".decoder", cfg_.decoder, rng);
}

std::vector<int> GlowIsg::prepare_ids(const std::vector<int>& ids) const {
  return cfg_.add_blank ? intersperse(ids, cfg_.blank_id) : ids;
}

ad::Var GlowIsg::attention(const EncoderLayer& l, const ad::Var& x, bool training,
                           nn::Rng& rng) const {
  const int heads = cfg_.encoder.heads;
  const Index dk = cfg_.encoder.hidden / heads;
  ad::Var q = l.q(x), k = l.k(x), v = l.v(x);
  std::vector<ad::Var> outs;
  for (int hd = 0; hd < heads; ++hd) {
    ad::Var qh = ad::slice_cols(q, hd * dk, dk);
    ad::Var kh = ad::slice_cols(k, hd * dk, dk);
    ad::Var vh = ad::slice_cols(v, hd * dk, dk);
    ad::Var p = ad::softmax_rows(
        ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dk))));
    p = maybe_dropout(p, cfg_.encoder.dropout, training, rng);
    outs.push_back(ad::matmul(p, vh));
  }
  return l.o(ad::concat_cols(outs));
}

GlowIsg::Encoded GlowIsg::encode(const std::vector<int>& ids, bool training, nn::Rng& rng) const {
  if (ids.empty()) throw ValidationError("glow encoder: empty token sequence");
  for (int id : ids) {
    if (id < 0 || id >= cfg_.n_symbols) {
      throw ValidationError("glow encoder: token id " + std::to_string(id) + " out of range");
    }
  }
  const int h = cfg_.encoder.hidden;
  const double p = cfg_.encoder.dropout;
  ad::Var x = ad::scale((*embedding_)(ids), std::sqrt(static_cast<double>(h)));
  x = ad::add(x, ad::constant(sinusoid_positions(x.rows(), h)));
  if (cfg_.encoder.prenet) {
    ad::Var y = x;
    for (std::size_t i = 0; i < prenet_convs_.size(); ++i) {
      y = maybe_dropout(ad::relu(prenet_norms_[i](prenet_convs_[i](y))), 0.5, training, rng);
    }
    x = ad::add(x, (*prenet_proj_)(y));
  }
  for (const EncoderLayer& l : layers_) {
    x = l.norm1(ad::add(x, maybe_dropout(attention(l, x, training, rng), p, training, rng)));
    ad::Var f = l.ffn2(maybe_dropout(ad::relu(l.ffn1(x)), p, training, rng));
    x = l.norm2(ad::add(x, maybe_dropout(f, p, training, rng)));
  }
  Encoded e;
  e.hidden = x;
  e.mu = (*proj_m_)(x);
  e.log_sigma = cfg_.mean_only ? ad::constant(Matrix::Zero(x.rows(), cfg_.joint_channels()))
                               : (*proj_s_)(x);
  const double pd = cfg_.duration.dropout;
  ad::Var d = ad::stop_gradient(x);
  d = maybe_dropout((*dp_norm1_)(ad::relu((*dp_conv1_)(d))), pd, training, rng);
  d = maybe_dropout((*dp_norm2_)(ad::relu((*dp_conv2_)(d))), pd, training, rng);
  e.log_durations = (*dp_proj_)(d);
  return e;
}

TokenPrior GlowIsg::prior(const std::vector<int>& ids) const {
  ad::NoGradGuard ng;
  nn::Rng rng(0);
  const Encoded e = encode(ids, false, rng);
  return {e.mu.value(), e.log_sigma.value().array().exp().matrix(),
          e.log_durations.value().col(0)};
}

Matrix GlowIsg::joint_frames(const Matrix& mel, const Matrix& motion, std::uint64_t seed) const {
  if (mel.rows() != motion.rows()) {
    throw ValidationError("joint frames: mel has " + std::to_string(mel.rows()) +
                          " frames, motion has " + std::to_string(motion.rows()));
  }
  if (mel.cols() != cfg_.n_mels || motion.cols() != cfg_.motion_dim) {
    throw ValidationError("joint frames: channel mismatch");
  }
  const Index t = mel.rows() - mel.rows() % cfg_.decoder.squeeze;
  Matrix x(t, cfg_.joint_channels());
  x.leftCols(cfg_.n_mels) = mel.topRows(t);
  x.middleCols(cfg_.n_mels, cfg_.motion_dim) = motion.topRows(t);
  if (cfg_.pad_channels > 0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, cfg_.pad_noise_std);
    for (Index r = 0; r < t; ++r) {
      for (int k = 0; k < cfg_.pad_channels; ++k) x(r, cfg_.n_mels + cfg_.motion_dim + k) = n(gen);
    }
  }
  return x;
}

GlowLoss GlowIsg::loss(const std::vector<int>& ids, const Matrix& joint, bool training,
                       nn::Rng& rng) const {
  const Encoded e = encode(ids, training, rng);
  if (joint.rows() < static_cast<Index>(ids.size())) {
    throw AlignmentError("alignment infeasible: " + std::to_string(ids.size()) +
                         " tokens but only " + std::to_string(joint.rows()) + " frames");
  }
  flow::AdOps ops;
  auto [z, logdet] = decoder_->forward(ops, ad::constant(joint));
  const TokenPrior prior{e.mu.value(), e.log_sigma.value().array().exp().matrix(), {}};
  GlowLoss out;
  out.alignment = mas_align(z.value(), prior);
  out.nll = nll_loss(z, e.mu, e.log_sigma, logdet, out.alignment);
  const std::vector<int> counts =
      durations_from_alignment(out.alignment, static_cast<int>(ids.size()));
  Matrix target(static_cast<Index>(ids.size()), 1);
  for (std::size_t j = 0; j < counts.size(); ++j) target(static_cast<Index>(j), 0) = std::log(counts[j]);
  out.duration = ad::mse(e.log_durations, ad::constant(target));
  out.total = ad::add(out.nll, out.duration);
  return out;
}

std::vector<double> GlowIsg::predict_durations(const std::vector<int>& ids) const {
  const TokenPrior p = prior(ids);
  std::vector<double> d(static_cast<std::size_t>(p.log_durations.size()));
  for (Index j = 0; j < p.log_durations.size(); ++j) {
    d[static_cast<std::size_t>(j)] = std::exp(p.log_durations(j));
  }
  return d;
}

GlowSample GlowIsg::sample(const std::vector<int>& ids, double temperature, double length_scale,
                           std::uint64_t seed, const std::vector<int>* durations) const {
  if (!(temperature >= 0)) throw ValidationError("temperature must be >= 0");
  const TokenPrior p = prior(ids);
  std::vector<double> predicted(static_cast<std::size_t>(p.log_durations.size()));
  for (Index j = 0; j < p.log_durations.size(); ++j) {
    predicted[static_cast<std::size_t>(j)] = std::exp(p.log_durations(j));
  }
  const std::vector<int> frames =
      durations != nullptr ? *durations : duration_frames(predicted, length_scale);
  if (frames.size() != ids.size()) throw ValidationError("sample: one duration per token required");
  GlowSample out;
  out.alignment = alignment_from_durations(frames);
  const Index t = static_cast<Index>(out.alignment.size());
  const int s = cfg_.decoder.squeeze;
  const Index padded = (t + s - 1) / s * s;
  Alignment full = out.alignment;
  full.resize(static_cast<std::size_t>(padded), full.back());

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  const Index c = cfg_.joint_channels();
  Matrix z(padded, c);
  for (Index r = 0; r < padded; ++r) {
    const int j = full[static_cast<std::size_t>(r)];
    for (Index k = 0; k < c; ++k) {
      z(r, k) = p.mu(j, k) + temperature * p.sigma(j, k) * n01(gen);
    }
  }
  const Matrix x = decoder_->inverse(z).topRows(t);
  out.z = z.topRows(t);
  out.mel.values = x.leftCols(cfg_.n_mels);
  out.mel.fps = cfg_.fps;
  out.mel.sample_rate = cfg_.sample_rate;
  out.motion.values = x.middleCols(cfg_.n_mels, cfg_.motion_dim);
  out.motion.fps = cfg_.fps;
  return out;
}

}  // namespace isg
