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

#ifndef ISG_FEATURES_H_
#define ISG_FEATURES_H_

// Audio and motion feature extraction.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace isg {

using Matrix = Eigen::MatrixXd;

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MelConfig {
  int sample_rate = 22050;
  int hop = 256;
  int win = 1024;  // also the FFT size
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  double fps() const { return static_cast<double>(sample_rate) / hop; }
  // Throws ValidationError unless fps() * hop == sample_rate exactly and all
  // fields are in range.
  void validate() const;

  static MelConfig tacotron() { return {}; }
  static MelConfig flow() { return {24000, 400, 1600, 80, 0.0, 8000.0, 1e-5}; }
};

void to_json(nlohmann::json& j, const MelConfig& c);
void from_json(const nlohmann::json& j, MelConfig& c);

struct MelSpectrogram {
  Matrix values;  // frames x n_mels, natural-log magnitudes
  double fps = 0.0;
  int sample_rate = 0;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index n_mels() const { return values.cols(); }
  double duration_s() const { return fps > 0 ? frames() / fps : 0.0; }
};

struct MotionSequence {
  Matrix values;  // frames x (3 * joints), exponential-map channels
  double fps = 0.0;
  std::vector<std::string> joint_names;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
  double duration_s() const { return fps > 0 ? frames() / fps : 0.0; }
};

// Checks finiteness and |expmap| < pi + eps for every joint and frame.
bool motion_is_valid(const MotionSequence& m, double eps = 1e-6);

// Triangular filters on the HTK mel scale with unit peak: n_mels x (win/2+1).
Matrix mel_filterbank(const MelConfig& config);
// Center frequency (Hz) of every mel filter.
std::vector<double> mel_centers_hz(const MelConfig& config);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// ceil(len / hop) frames; frame f is a Hann-windowed FFT centered on sample
// f * hop with reflection padding.
MelSpectrogram mel_spectrogram(std::span<const double> waveform,
                               const MelConfig& config);

// Magnitude STFT helpers (frames x (win/2+1)), exposed for the vocoder tests.
Matrix stft_magnitude(std::span<const double> waveform, const MelConfig& config);

// Reconstructs a waveform from a log-mel spectrogram. Phases start from a
// seeded uniform draw. If `mel_l1_trace` is non-null it receives the mean
// absolute log-mel error of the re-analyzed signal after every iteration.
std::vector<double> griffin_lim(const MelSpectrogram& mel, const MelConfig& config,
                                int n_iters, std::uint64_t seed = 0,
                                std::vector<double>* mel_l1_trace = nullptr);

Eigen::Vector3d rotation_to_expmap(const Eigen::Matrix3d& rotation,
                                   double tolerance = 1e-6);
Eigen::Matrix3d expmap_to_rotation(const Eigen::Vector3d& expmap);
// Rewrites every joint whose rotation angle exceeds pi as the equivalent
// rotation with angle in [0, pi]; other joints are left untouched.
void canonicalize_expmaps(MotionSequence& motion);

// Linear interpolation on the time axis. Frame i sits at i / fps.
MotionSequence resample_motion(const MotionSequence& motion, double fps_out);

// Per-channel normalized Gaussian filter; edge frames renormalize over the
// taps that fall inside the sequence.
MotionSequence gaussian_smooth(const MotionSequence& motion, int window = 3,
                               int stride = 1, double sigma = 1.0);
std::vector<double> gaussian_kernel(int window, double sigma);

// Band-limited (windowed-sinc) sample-rate conversion.
std::vector<double> resample_audio(std::span<const double> x, int rate_in,
                                   int rate_out);

// Mel tensors on disk: `<base>.bin` holds frames x n_mels float32 LE,
// `<base>.json` holds {"frames", "n_mels", "fps", "sample_rate"}.
void write_mel(const std::string& base, const MelSpectrogram& mel);
MelSpectrogram read_mel(const std::string& base);

}  // namespace isg

#endif  // ISG_FEATURES_H_
