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

#include "isg/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

namespace isg {

namespace {

constexpr double kPi = std::numbers::pi;

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;

Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

Eigen::Index frame_count(std::size_t len, int hop) {
  return static_cast<Eigen::Index>((len + hop - 1) / hop);
}

// RAII wrapper over a real-to-complex / complex-to-real FFTW plan pair.
class Fft {
 public:
  explicit Fft(int n) : n_(n) {
    real_ = fftw_alloc_real(static_cast<std::size_t>(n));
    spec_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  double* real() { return real_; }
  Complex spec(int k) const { return {spec_[k][0], spec_[k][1]}; }
  void set_spec(int k, Complex c) {
    spec_[k][0] = c.real();
    spec_[k][1] = c.imag();
  }
  void forward() { fftw_execute(fwd_); }
  void inverse() { fftw_execute(inv_); }  // unnormalized

 private:
  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

ComplexMatrix stft(std::span<const double> x, const MelConfig& c) {
  const int n = c.win;
  const int bins = n / 2 + 1;
  const Eigen::Index frames = frame_count(x.size(), c.hop);
  ComplexMatrix out(frames, bins);
  if (frames == 0) return out;
  const auto len = static_cast<Eigen::Index>(x.size());
  const std::vector<double> w = hann(n);
  Fft fft(n);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * c.hop - n / 2;
    for (int i = 0; i < n; ++i) {
      fft.real()[i] = w[i] * x[static_cast<std::size_t>(reflect(start + i, len))];
    }
    fft.forward();
    for (int k = 0; k < bins; ++k) out(f, k) = fft.spec(k);
  }
  return out;
}

std::vector<double> istft(const ComplexMatrix& spec, const MelConfig& c) {
  const int n = c.win;
  const Eigen::Index frames = spec.rows();
  const Eigen::Index len = frames * c.hop;
  std::vector<double> out(static_cast<std::size_t>(len), 0.0);
  std::vector<double> norm(static_cast<std::size_t>(len), 0.0);
  if (frames == 0) return out;
  const std::vector<double> w = hann(n);
  Fft fft(n);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (int k = 0; k < n / 2 + 1; ++k) fft.set_spec(k, spec(f, k));
    fft.inverse();
    const Eigen::Index start = f * c.hop - n / 2;
    for (int i = 0; i < n; ++i) {
      const Eigen::Index s = start + i;
      if (s < 0 || s >= len) continue;
      out[static_cast<std::size_t>(s)] += w[i] * fft.real()[i] / n;
      norm[static_cast<std::size_t>(s)] += w[i] * w[i];
    }
  }
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (norm[s] > 1e-8) out[s] /= norm[s];
  }
  return out;
}

Matrix log_mel_from_magnitude(const Matrix& mag, const Matrix& basis,
                              double floor) {
  Matrix mel = mag * basis.transpose();
  return mel.unaryExpr([floor](double v) { return std::log(std::max(v, floor)); });
}

}  // namespace

void MelConfig::validate() const {
  if (sample_rate <= 0 || hop <= 0 || win <= 0 || n_mels <= 0) {
    throw ValidationError("mel config: sample_rate, hop, win, n_mels must be > 0");
  }
  if (win % 2 != 0) throw ValidationError("mel config: win must be even");
  if (fps() * hop != static_cast<double>(sample_rate)) {
    throw ValidationError("mel config: fps * hop must equal sample_rate exactly");
  }
  if (!(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate / 2.0)) {
    throw ValidationError("mel config: need 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) throw ValidationError("mel config: log_floor must be > 0");
}

void to_json(nlohmann::json& j, const MelConfig& c) {
  j = {{"sample_rate", c.sample_rate}, {"hop", c.hop},   {"win", c.win},
       {"n_mels", c.n_mels},           {"fmin", c.fmin}, {"fmax", c.fmax},
       {"log_floor", c.log_floor}};
}

void from_json(const nlohmann::json& j, MelConfig& c) {
  MelConfig d;
  c.sample_rate = j.value("sample_rate", d.sample_rate);
  c.hop = j.value("hop", d.hop);
  c.win = j.value("win", d.win);
  c.n_mels = j.value("n_mels", d.n_mels);
  c.fmin = j.value("fmin", d.fmin);
  c.fmax = j.value("fmax", d.fmax);
  c.log_floor = j.value("log_floor", d.log_floor);
}

bool motion_is_valid(const MotionSequence& m, double eps) {
  if (!m.values.allFinite()) return false;
  if (m.values.cols() % 3 != 0) return false;
  for (Eigen::Index t = 0; t < m.values.rows(); ++t) {
    for (Eigen::Index j = 0; j < m.values.cols(); j += 3) {
      if (m.values.block(t, j, 1, 3).norm() >= kPi + eps) return false;
    }
  }
  return true;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_centers_hz(const MelConfig& c) {
  const double lo = hz_to_mel(c.fmin);
  const double hi = hz_to_mel(c.fmax);
  std::vector<double> centers(static_cast<std::size_t>(c.n_mels));
  for (int m = 0; m < c.n_mels; ++m) {
    centers[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (c.n_mels + 1));
  }
  return centers;
}

Matrix mel_filterbank(const MelConfig& c) {
  const int bins = c.win / 2 + 1;
  const double lo = hz_to_mel(c.fmin);
  const double hi = hz_to_mel(c.fmax);
  const double step = (hi - lo) / (c.n_mels + 1);
  Matrix fb = Matrix::Zero(c.n_mels, bins);
  for (int m = 0; m < c.n_mels; ++m) {
    const double center = lo + step * (m + 1);
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * c.sample_rate / c.win;
      const double v = 1.0 - std::abs(hz_to_mel(hz) - center) / step;
      if (v > 0.0) fb(m, k) = v;
    }
  }
  return fb;
}

Matrix stft_magnitude(std::span<const double> waveform, const MelConfig& c) {
  return stft(waveform, c).cwiseAbs();
}

MelSpectrogram mel_spectrogram(std::span<const double> waveform,
                               const MelConfig& c) {
  c.validate();
  if (waveform.empty()) throw ValidationError("mel_spectrogram: empty waveform");
  MelSpectrogram out;
  out.fps = c.fps();
  out.sample_rate = c.sample_rate;
  out.values = log_mel_from_magnitude(stft_magnitude(waveform, c),
                                      mel_filterbank(c), c.log_floor);
  return out;
}

std::vector<double> griffin_lim(const MelSpectrogram& mel, const MelConfig& c,
                                int n_iters, std::uint64_t seed,
                                std::vector<double>* trace) {
  if (n_iters < 1) throw ValidationError("griffin_lim: n_iters must be >= 1");
  if (mel.frames() == 0) return {};
  if (mel.n_mels() != c.n_mels) {
    throw ValidationError("griffin_lim: mel channel count does not match config");
  }
  const Matrix basis = mel_filterbank(c);
  const Matrix pinv = basis.completeOrthogonalDecomposition().pseudoInverse();
  const Matrix linear =
      (mel.values.array().exp().matrix() * pinv.transpose()).cwiseMax(0.0);
  const Eigen::Index frames = linear.rows();
  const Eigen::Index bins = linear.cols();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(-kPi, kPi);
  ComplexMatrix spec(frames, bins);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (Eigen::Index k = 0; k < bins; ++k) {
      spec(f, k) = std::polar(linear(f, k), phase(rng));
    }
  }
  if (trace != nullptr) trace->clear();
  std::vector<double> x;
  for (int it = 0; it < n_iters; ++it) {
    x = istft(spec, c);
    const ComplexMatrix re = stft(x, c);
    if (trace != nullptr) {
      const Matrix m = log_mel_from_magnitude(re.cwiseAbs(), basis, c.log_floor);
      trace->push_back((m - mel.values).cwiseAbs().mean());
    }
    for (Eigen::Index f = 0; f < frames; ++f) {
      for (Eigen::Index k = 0; k < bins; ++k) {
        const double a = std::abs(re(f, k));
        const Complex unit = a > 1e-12 ? re(f, k) / a : Complex(1.0, 0.0);
        spec(f, k) = linear(f, k) * unit;
      }
    }
  }
  return istft(spec, c);
}

Eigen::Vector3d rotation_to_expmap(const Eigen::Matrix3d& r, double tolerance) {
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  if (ortho > tolerance || std::abs(r.determinant() - 1.0) > tolerance) {
    throw ValidationError("rotation_to_expmap: matrix is not a rotation");
  }
  const Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Eigen::Vector3d axis = aa.axis();
  if (angle > kPi) {
    angle = 2.0 * kPi - angle;
    axis = -axis;
  }
  return axis * angle;
}

void canonicalize_expmaps(MotionSequence& motion) {
  if (motion.dims() % 3 != 0) throw ValidationError("motion dims not divisible by 3");
  for (Eigen::Index t = 0; t < motion.frames(); ++t) {
    for (Eigen::Index c = 0; c < motion.dims(); c += 3) {
      auto v = motion.values.block<1, 3>(t, c);
      const double angle = v.norm();
      if (!(angle > kPi)) continue;
      const double wrapped = std::fmod(angle, 2.0 * kPi);
      const double scale = wrapped > kPi ? -(2.0 * kPi - wrapped) / angle : wrapped / angle;
      v *= scale;
    }
  }
}

Eigen::Matrix3d expmap_to_rotation(const Eigen::Vector3d& e) {
  const double angle = e.norm();
  if (angle < 1e-15) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, e / angle).toRotationMatrix();
}

MotionSequence resample_motion(const MotionSequence& m, double fps_out) {
  if (!(fps_out > 0.0)) throw ValidationError("resample_motion: fps_out must be > 0");
  if (!(m.fps > 0.0)) throw ValidationError("resample_motion: input fps must be > 0");
  MotionSequence out;
  out.fps = fps_out;
  out.joint_names = m.joint_names;
  const Eigen::Index n = m.frames();
  if (n == 0) {
    out.values = Matrix(0, m.dims());
    return out;
  }
  if (m.fps == fps_out) {
    out.values = m.values;
    return out;
  }
  if (n == 1) {
    const auto copies = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(fps_out / m.fps)));
    out.values = m.values.replicate(copies, 1);
    return out;
  }
  const double span = static_cast<double>(n - 1) / m.fps;
  const auto n_out =
      static_cast<Eigen::Index>(std::floor(span * fps_out + 1e-9)) + 1;
  out.values.resize(n_out, m.dims());
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * m.fps / fps_out;
    auto lo = static_cast<Eigen::Index>(std::floor(pos + 1e-12));
    lo = std::min(lo, n - 1);
    const Eigen::Index hi = std::min(lo + 1, n - 1);
    const double frac = std::clamp(pos - static_cast<double>(lo), 0.0, 1.0);
    out.values.row(i) = (1.0 - frac) * m.values.row(lo) + frac * m.values.row(hi);
  }
  return out;
}

std::vector<double> gaussian_kernel(int window, double sigma) {
  if (window < 1 || window % 2 == 0) {
    throw ValidationError("gaussian_smooth: window must be odd and >= 1");
  }
  if (!(sigma > 0.0)) throw ValidationError("gaussian_smooth: sigma must be > 0");
  const int half = window / 2;
  std::vector<double> k(static_cast<std::size_t>(window));
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + half];
  }
  for (double& v : k) v /= total;
  return k;
}

MotionSequence gaussian_smooth(const MotionSequence& m, int window, int stride,
                               double sigma) {
  if (stride != 1) throw ValidationError("gaussian_smooth: only stride 1 is supported");
  const std::vector<double> k = gaussian_kernel(window, sigma);
  const int half = window / 2;
  MotionSequence out = m;
  const Eigen::Index n = m.frames();
  for (Eigen::Index t = 0; t < n; ++t) {
    double wsum = 0.0;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(m.dims());
    for (int i = -half; i <= half; ++i) {
      const Eigen::Index s = t + i;
      if (s < 0 || s >= n) continue;
      acc += k[i + half] * m.values.row(s);
      wsum += k[i + half];
    }
    out.values.row(t) = acc / wsum;
  }
  return out;
}

std::vector<double> resample_audio(std::span<const double> x, int rate_in,
                                   int rate_out) {
  if (rate_in <= 0 || rate_out <= 0) {
    throw ValidationError("resample_audio: rates must be > 0");
  }
  if (rate_in == rate_out) return {x.begin(), x.end()};
  const double ratio = static_cast<double>(rate_out) / rate_in;
  const double cutoff = std::min(1.0, ratio) * 0.95;
  constexpr int kZeroCrossings = 16;
  const double half_width = kZeroCrossings / cutoff;
  const auto n_out = static_cast<std::size_t>(std::llround(x.size() * ratio));
  const auto len = static_cast<long>(x.size());
  std::vector<double> y(n_out, 0.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const long lo = static_cast<long>(std::ceil(t - half_width));
    const long hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long k = std::max(0L, lo); k <= std::min(len - 1, hi); ++k) {
      const double d = t - static_cast<double>(k);
      const double arg = cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
      const double win = 0.5 + 0.5 * std::cos(kPi * d / half_width);
      acc += x[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    y[i] = acc;
  }
  return y;
}

void write_mel(const std::string& base, const MelSpectrogram& mel) {
  std::ofstream bin(base + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("write_mel: cannot open " + base + ".bin");
  for (Eigen::Index t = 0; t < mel.frames(); ++t) {
    for (Eigen::Index m = 0; m < mel.n_mels(); ++m) {
      const float v = static_cast<float>(mel.values(t, m));
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      unsigned char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
      bin.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  std::ofstream js(base + ".json", std::ios::trunc);
  js << nlohmann::json{{"frames", mel.frames()},
                       {"n_mels", mel.n_mels()},
                       {"fps", mel.fps},
                       {"sample_rate", mel.sample_rate}}
            .dump();
}

MelSpectrogram read_mel(const std::string& base) {
  std::ifstream js(base + ".json");
  if (!js) throw std::runtime_error("read_mel: cannot open " + base + ".json");
  const nlohmann::json meta = nlohmann::json::parse(js);
  MelSpectrogram mel;
  const auto frames = meta.at("frames").get<Eigen::Index>();
  const auto n_mels = meta.at("n_mels").get<Eigen::Index>();
  mel.fps = meta.at("fps").get<double>();
  mel.sample_rate = meta.value("sample_rate", 0);
  mel.values.resize(frames, n_mels);
  std::ifstream bin(base + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("read_mel: cannot open " + base + ".bin");
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index m = 0; m < n_mels; ++m) {
      unsigned char b[4];
      bin.read(reinterpret_cast<char*>(b), 4);
      if (!bin) throw std::runtime_error("read_mel: truncated " + base + ".bin");
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
      float v;
      std::memcpy(&v, &bits, sizeof v);
      mel.values(t, m) = v;
    }
  }
  return mel;
}

}  // namespace isg
