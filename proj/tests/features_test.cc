#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "isg/audio_io.h"
#include "isg/features.h"

using isg::MelConfig;
using isg::MotionSequence;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double hz, int rate, std::size_t n, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * hz * i / rate);
  return x;
}

// Independent mel-center oracle: HTK mel scale, n_mels + 2 equally spaced
// points between fmin and fmax, interior points are the filter centers.
int nearest_center_bin(double hz, const MelConfig& c) {
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  const double lo = mel(c.fmin), hi = mel(c.fmax);
  int best = 0;
  double best_d = 1e300;
  for (int m = 0; m < c.n_mels; ++m) {
    const double center = lo + (hi - lo) * (m + 1) / (c.n_mels + 1);
    const double d = std::abs(center - mel(hz));
    if (d < best_d) { best_d = d; best = m; }
  }
  return best;
}

MotionSequence seq(const Eigen::MatrixXd& v, double fps) {
  MotionSequence m;
  m.values = v;
  m.fps = fps;
  return m;
}

double variation(const Eigen::MatrixXd& v) {
  return (v.bottomRows(v.rows() - 1) - v.topRows(v.rows() - 1)).cwiseAbs().mean();
}

}  // namespace

TEST_CASE("mel frame count is ceil(len / hop)") {
  MelConfig c;
  std::vector<double> silence(22050, 0.0);
  auto mel = isg::mel_spectrogram(silence, c);
  CHECK(mel.frames() == 87);
  CHECK(mel.n_mels() == 80);
  CHECK((mel.values.array() == std::log(c.log_floor)).all());
  CHECK(mel.fps * c.hop == c.sample_rate);
  std::vector<double> exact(256 * 10, 0.1);
  CHECK(isg::mel_spectrogram(exact, c).frames() == 10);
  CHECK_THROWS_AS(isg::mel_spectrogram(std::vector<double>{}, c), isg::ValidationError);
}

TEST_CASE("pure tone lands in the nearest-center mel bin") {
  MelConfig c;
  auto mel = isg::mel_spectrogram(sine(440.0, c.sample_rate, 22050), c);
  const int expected = nearest_center_bin(440.0, c);
  CHECK(mel.values.allFinite());
  // The last frame sees only 34 real samples past its center; the rest of its
  // window is reflected padding, which smears the tone into the bin below.
  for (Eigen::Index t = 0; t + 1 < mel.frames(); ++t) {
    Eigen::Index arg;
    mel.values.row(t).maxCoeff(&arg);
    INFO("frame " << t);
    CHECK(arg == expected);
  }
}

TEST_CASE("mel config validation") {
  MelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK_NOTHROW(MelConfig::flow().validate());
  CHECK(MelConfig::flow().fps() == 60.0);
  c.hop = 0;
  CHECK_THROWS_AS(c.validate(), isg::ValidationError);
  c = MelConfig{};
  c.fmax = 20000;
  CHECK_THROWS_AS(c.validate(), isg::ValidationError);
}

TEST_CASE("griffin-lim reconstructs the tone frequency") {
  MelConfig c;
  const auto x = sine(440.0, c.sample_rate, 11025);
  auto mel = isg::mel_spectrogram(x, c);
  std::vector<double> trace;
  const auto y = isg::griffin_lim(mel, c, 32, 3, &trace);
  REQUIRE(y.size() == static_cast<std::size_t>(mel.frames() * c.hop));
  const Eigen::MatrixXd mag = isg::stft_magnitude(y, c);
  const Eigen::RowVectorXd avg = mag.colwise().mean();
  Eigen::Index peak;
  avg.maxCoeff(&peak);
  const double bin_hz = static_cast<double>(c.sample_rate) / c.win;
  CHECK(std::abs(peak * bin_hz - 440.0) <= bin_hz);
  REQUIRE(trace.size() == 32);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
  CHECK(trace.back() < trace.front());
  // Deterministic for a fixed seed.
  CHECK(isg::griffin_lim(mel, c, 4, 3) == isg::griffin_lim(mel, c, 4, 3));
  isg::MelSpectrogram empty;
  empty.values.resize(0, 80);
  CHECK(isg::griffin_lim(empty, c, 4).empty());
}

TEST_CASE("expmap conversions") {
  CHECK(isg::rotation_to_expmap(Eigen::Matrix3d::Identity()).norm() == 0.0);
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(kPi / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Vector3d e = isg::rotation_to_expmap(rz);
  CHECK(e.isApprox(Eigen::Vector3d(0, 0, kPi / 2), 1e-12));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Quaterniond q(n01(rng), n01(rng), n01(rng), n01(rng));
    q.normalize();
    const Eigen::Matrix3d r = q.toRotationMatrix();
    const Eigen::Vector3d v = isg::rotation_to_expmap(r);
    CHECK(v.norm() <= kPi + 1e-12);
    worst = std::max(worst, (r - isg::expmap_to_rotation(v)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-6);
  const Eigen::Matrix3d flip = Eigen::AngleAxisd(kPi, Eigen::Vector3d::UnitX()).toRotationMatrix();
  CHECK(isg::rotation_to_expmap(flip).norm() == doctest::Approx(kPi));
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 0) = 1.1;
  CHECK_THROWS_AS(isg::rotation_to_expmap(bad), isg::ValidationError);
  CHECK_THROWS_AS(isg::rotation_to_expmap(-Eigen::Matrix3d::Identity()), isg::ValidationError);
}

TEST_CASE("canonical exponential maps") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  MotionSequence m;
  m.values = Eigen::MatrixXd(40, 6);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = 3.0 * n01(rng);
  m.values.row(0) << 0.1, 0.2, 0.3, 0.0, 0.0, 7.0;
  const MotionSequence before = m;
  isg::canonicalize_expmaps(m);
  CHECK(isg::motion_is_valid(m));
  CHECK(m.values.row(0).head(3) == before.values.row(0).head(3));  // already canonical
  CHECK(m.values(0, 5) == doctest::Approx(7.0 - 2.0 * kPi));
  for (Eigen::Index t = 0; t < m.frames(); ++t) {
    for (int j = 0; j < 2; ++j) {
      const Eigen::Vector3d a = before.values.block<1, 3>(t, 3 * j).transpose();
      const Eigen::Vector3d b = m.values.block<1, 3>(t, 3 * j).transpose();
      const Eigen::Matrix3d ra = Eigen::AngleAxisd(a.norm(), a.normalized()).toRotationMatrix();
      const Eigen::Matrix3d rb =
          b.norm() > 0 ? Eigen::AngleAxisd(b.norm(), b.normalized()).toRotationMatrix()
                       : Eigen::Matrix3d::Identity();
      CHECK((ra - rb).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("motion resampling") {
  Eigen::MatrixXd v(5, 2);
  v.setRandom();
  CHECK(isg::resample_motion(seq(v, 60), 60).values == v);
  Eigen::MatrixXd two(2, 1);
  two << 0, 1;
  const auto up = isg::resample_motion(seq(two, 10), 20);
  REQUIRE(up.frames() == 3);
  CHECK(up.values(0, 0) == 0.0);
  CHECK(up.values(1, 0) == 0.5);
  CHECK(up.values(2, 0) == 1.0);
  Eigen::MatrixXd ramp(61, 1);
  for (int i = 0; i < 61; ++i) ramp(i, 0) = i / 60.0;
  const auto down = isg::resample_motion(seq(ramp, 60), 20);
  CHECK(down.frames() == 21);
  const auto back = isg::resample_motion(down, 60);
  REQUIRE(back.frames() == 61);
  CHECK((back.values - ramp).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::MatrixXd one(1, 3);
  one << 1, 2, 3;
  const auto rep = isg::resample_motion(seq(one, 20), 60);
  CHECK(rep.frames() == 3);
  CHECK(rep.values.row(2) == one);
  CHECK_THROWS_AS(isg::resample_motion(seq(one, 20), 0), isg::ValidationError);
}

TEST_CASE("gaussian smoothing") {
  const auto k = isg::gaussian_kernel(3, 1.0);
  CHECK(k[0] == doctest::Approx(0.274068619).epsilon(1e-9));
  CHECK(k[1] == doctest::Approx(0.451862762).epsilon(1e-9));
  // Impulse response measured away from the edges.
  Eigen::MatrixXd imp = Eigen::MatrixXd::Zero(7, 1);
  imp(3, 0) = 1.0;
  const auto r = isg::gaussian_smooth(seq(imp, 20), 3, 1, 1.0);
  CHECK(r.values(2, 0) == doctest::Approx(0.274).epsilon(1e-3));
  CHECK(r.values(3, 0) == doctest::Approx(0.452).epsilon(1e-3));
  CHECK(r.values(4, 0) == doctest::Approx(0.274).epsilon(1e-3));
  const auto flat = isg::gaussian_smooth(seq(Eigen::MatrixXd::Constant(10, 2, 3.5), 20));
  CHECK((flat.values.array() - 3.5).abs().maxCoeff() < 1e-12);
  const auto len = isg::gaussian_smooth(seq(Eigen::MatrixXd::Random(100, 4), 20));
  CHECK(len.frames() == 100);
  // Interior-supported signal keeps its per-channel mean.
  Eigen::MatrixXd bump = Eigen::MatrixXd::Zero(30, 1);
  bump.block(10, 0, 10, 1).setRandom();
  const auto sb = isg::gaussian_smooth(seq(bump, 20));
  CHECK(std::abs(sb.values.mean() - bump.mean()) < 1e-9);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd m(2 + trial % 40, 3);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    CHECK(variation(isg::gaussian_smooth(seq(m, 20)).values) <= variation(m) + 1e-12);
  }
  CHECK_THROWS_AS(isg::gaussian_smooth(seq(imp, 20), 4), isg::ValidationError);
  CHECK_THROWS_AS(isg::gaussian_smooth(seq(imp, 20), 3, 2), isg::ValidationError);
}

TEST_CASE("audio resampling preserves a low tone") {
  const auto x = sine(300.0, 22050, 22050);
  const auto y = isg::resample_audio(x, 22050, 24000);
  CHECK(y.size() == 24000);
  const auto ref = sine(300.0, 24000, 24000);
  double err = 0;
  for (std::size_t i = 200; i < 23800; ++i) err = std::max(err, std::abs(y[i] - ref[i]));
  CHECK(err < 5e-3);
}

TEST_CASE("wav and mel files round-trip") {
  const auto x = sine(200.0, 16000, 1600);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string wav = (dir / "isg_features_test.wav").string();
  const std::string mel_base = (dir / "isg_features_test_mel").string();
  isg::write_wav(wav, x, 16000);
  const auto w = isg::read_wav(wav);
  CHECK(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(w.samples[i] - x[i]) < 1e-4);
  isg::MelSpectrogram mel;
  mel.values = Eigen::MatrixXd::Random(5, 3);
  mel.fps = 60;
  mel.sample_rate = 24000;
  isg::write_mel(mel_base, mel);
  const auto back = isg::read_mel(mel_base);
  CHECK(back.fps == 60);
  CHECK((back.values - mel.values).cwiseAbs().maxCoeff() < 1e-6);
}
