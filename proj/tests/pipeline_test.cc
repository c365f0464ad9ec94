#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "gradcheck.h"
#include "isg/optim.h"
#include "isg/pipeline.h"
#include "oracles.h"

namespace ad = isg::ad;
namespace flow = isg::flow;
using isg::AudioGestureConfig;
using isg::AudioGestureFlow;
using isg::Matrix;

namespace {

AudioGestureConfig small_config() {
  AudioGestureConfig c;
  c.n_flow_steps = 3;
  c.hidden = 6;
  c.lstm_layers = 2;
  c.n_mels = 3;
  c.pose_dim = 5;
  c.past_poses = 2;
  c.context = 1;
  c.frame_ratio = 2;
  return c;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * n01(gen);
  return m;
}

isg::MelSpectrogram random_mel(Eigen::Index frames, int n_mels, std::mt19937_64& gen) {
  isg::MelSpectrogram mel;
  mel.values = random_matrix(frames, n_mels, gen).array() - 4.0;
  mel.fps = 20.0;
  mel.sample_rate = 16000;
  return mel;
}

class MeanPoseStub : public isg::AudioGestureModel {
 public:
  explicit MeanPoseStub(Eigen::RowVectorXd pose) : pose_(std::move(pose)) {}
  isg::MotionSequence generate(const isg::MelSpectrogram& mel, std::uint64_t) const override {
    isg::MotionSequence m;
    m.values = pose_.replicate((mel.frames() + 3) / 4, 1);
    m.fps = mel.fps / 4;
    return m;
  }
  std::int64_t parameter_count() const override { return 0; }

 private:
  Eigen::RowVectorXd pose_;
};

}  // namespace

TEST_CASE("audio gesture config") {
  AudioGestureConfig c = AudioGestureConfig::reference();
  CHECK(c.n_flow_steps == 16);
  CHECK(c.hidden == 512);
  CHECK(c.silence_pad_s == 1.0);
  CHECK(c.cond_dim() == 5 * 45 + 21 * 80);
  CHECK_NOTHROW(c.validate());
  c.n_flow_steps = 0;
  CHECK_THROWS_AS(c.validate(), isg::ValidationError);
  c = AudioGestureConfig::toy();
  c.pose_mean = {1.0, 2.0};
  CHECK_THROWS_AS(c.validate(), isg::ValidationError);

  AudioGestureConfig t = AudioGestureConfig::toy();
  t.audio_mean = -3.5;
  nlohmann::json j = t;
  AudioGestureConfig back = j.get<AudioGestureConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.audio_mean == -3.5);
}

TEST_CASE("parameter count from the configuration matches the instantiated model") {
  for (const AudioGestureConfig& c : {small_config(), AudioGestureConfig::toy()}) {
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(3);
    AudioGestureFlow model(store, "gesture", c, rng);
    CHECK(model.parameter_count() == AudioGestureFlow::parameter_count_for(c));
    CHECK(model.parameter_count() == store.count());
  }
  const std::int64_t ref = AudioGestureFlow::parameter_count_for(AudioGestureConfig::reference());
  CHECK(ref > 100'000'000);
  CHECK(ref < 120'000'000);
}

TEST_CASE("flow round trip at both precisions") {
  std::mt19937_64 gen(7);
  for (int draw = 0; draw < 10; ++draw) {
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(static_cast<std::uint64_t>(draw));
    AudioGestureFlow model(store, "g", small_config(), rng);
    isg::testing::randomize_flow(store, "g", gen);
    const Matrix x = random_matrix(9, 5, gen);
    const Matrix cond = random_matrix(9, small_config().cond_dim(), gen);

    flow::NumOps<double> d;
    const Matrix z = model.forward(d, x, cond).first;
    CHECK((model.inverse(d, z, cond) - x).cwiseAbs().maxCoeff() < 1e-8);

    flow::NumOps<float> f;
    const Eigen::MatrixXf zf = model.forward(f, x.cast<float>().eval(), cond.cast<float>().eval()).first;
    const Eigen::MatrixXf xf = model.inverse(f, zf, cond.cast<float>().eval());
    CHECK((xf.cast<double>() - x).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("logdet matches the finite-difference Jacobian") {
  std::mt19937_64 gen(11);
  AudioGestureConfig c = small_config();
  c.pose_dim = 4;
  for (int draw = 0; draw < 5; ++draw) {
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(static_cast<std::uint64_t>(draw));
    AudioGestureFlow model(store, "g", c, rng);
    isg::testing::randomize_flow(store, "g", gen);
    const Matrix x = random_matrix(2, 4, gen);
    const Matrix cond = random_matrix(2, c.cond_dim(), gen);
    flow::NumOps<double> ops;
    const double logdet = model.forward(ops, x, cond).second(0, 0);
    const double numeric = isg::testing::numeric_logabsdet(
        [&](const Matrix& v) { return model.forward(ops, v, cond).first; }, x);
    CHECK(std::abs(logdet - numeric) < 1e-3);
  }
}

TEST_CASE("nll gradient and numeric agreement") {
  std::mt19937_64 gen(5);
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(2);
  AudioGestureFlow model(store, "g", small_config(), rng);
  isg::testing::randomize_flow(store, "g", gen);
  const Matrix mel = random_matrix(7, 3, gen);
  const Matrix motion = random_matrix(4, 5, gen, 0.5);
  ad::Var l = model.nll(mel, motion);
  CHECK(l.item() == doctest::Approx(model.nll_value(mel, motion)).epsilon(1e-12));
  ad::Tape::current().clear();
  const auto res = isg::testing::gradcheck([&] { return model.nll(mel, motion); }, store.all(),
                                           1e-5, 30);
  CHECK(res.checked > 100);
  CHECK(res.max_rel_error < 1e-4);
  CHECK_THROWS_AS(model.nll(mel, random_matrix(3, 5, gen)), isg::ValidationError);
}

TEST_CASE("identity flow has the standard normal likelihood") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(2);
  AudioGestureConfig c = small_config();
  AudioGestureFlow model(store, "g", c, rng);
  for (ad::Parameter* p : store.with_prefix("g")) {
    if (p->name.ends_with(".mix.weight")) p->value.setIdentity();
  }
  std::mt19937_64 gen(1);
  const Matrix mel = random_matrix(8, 3, gen);
  const Matrix motion = random_matrix(4, 5, gen);
  const double expect =
      0.5 * motion.squaredNorm() / 20.0 + 0.5 * std::log(2.0 * std::acos(-1.0));
  CHECK(model.nll_value(mel, motion) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("conditioning layout and audio downsampling") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(2);
  AudioGestureConfig c = small_config();
  c.silence_value = -9.0;
  AudioGestureFlow model(store, "g", c, rng);
  Matrix mel(5, 3);
  for (int t = 0; t < 5; ++t) mel.row(t).setConstant(t);
  const Matrix audio = model.audio_frames(mel, 4);
  CHECK(audio(0, 0) == doctest::Approx(0.5));
  CHECK(audio(1, 2) == doctest::Approx(2.5));
  CHECK(audio(2, 1) == doctest::Approx(4.0));  // partial block
  CHECK(audio(3, 0) == doctest::Approx(-9.0));  // past the end

  Matrix poses(3, 5);
  for (int t = 0; t < 3; ++t) poses.row(t).setConstant(10.0 + t);
  const Matrix cond = model.conditioning(poses, audio);
  REQUIRE(cond.cols() == c.cond_dim());
  CHECK(cond.row(0).head(10).isZero());  // mean pose before the start
  CHECK(cond(2, 0) == 11.0);  // previous pose first
  CHECK(cond(2, 5) == 10.0);
  CHECK(cond(0, 10) == doctest::Approx(-9.0));  // audio before the start
  CHECK(cond(0, 13) == doctest::Approx(0.5));
  CHECK(cond(0, 16) == doctest::Approx(2.5));
}

TEST_CASE("normalization statistics") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(2);
  AudioGestureFlow model(store, "g", small_config(), rng);
  std::mt19937_64 gen(9);
  const Matrix motion = (random_matrix(50, 5, gen, 2.0).array() + 3.0).matrix();
  const Matrix mel = (random_matrix(99, 3, gen, 2.0).array() - 5.0).matrix();
  model.fit_normalization({&mel}, {&motion});
  const Matrix x = model.normalize_poses(motion);
  CHECK(x.colwise().mean().cwiseAbs().maxCoeff() < 1e-9);
  for (int c = 0; c < 5; ++c) {
    CHECK(std::sqrt(x.col(c).squaredNorm() / 50.0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK((model.denormalize_poses(x) - motion).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(model.config().audio_mean == doctest::Approx(mel.mean()));
}

TEST_CASE("generation is seeded, trims the padding and starts from the mean pose") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(4);
  AudioGestureConfig c = small_config();
  c.silence_pad_s = 1.0;
  AudioGestureFlow model(store, "g", c, rng);
  std::mt19937_64 gen(3);
  isg::testing::randomize_flow(store, "g", gen);
  const isg::MelSpectrogram mel = random_mel(13, 3, gen);

  const isg::MotionSequence a = model.generate(mel, 5);
  const isg::MotionSequence b = model.generate(mel, 5);
  const isg::MotionSequence other = model.generate(mel, 6);
  CHECK(a.values == b.values);
  CHECK(a.values != other.values);
  CHECK(a.frames() == 7);  // ceil(13 / 2), padding removed
  CHECK(a.fps == doctest::Approx(10.0));
  CHECK(a.values.allFinite());

  c.temperature = 0.0;
  isg::nn::ParameterStore store2;
  isg::nn::Rng rng2(4);
  AudioGestureFlow identity(store2, "g", c, rng2);
  for (ad::Parameter* p : store2.with_prefix("g")) {
    if (p->name.ends_with(".mix.weight")) p->value.setIdentity();
  }
  const isg::MotionSequence still = identity.generate(mel, 1);
  CHECK(still.values.isZero());  // z = 0 maps to the (zero) mean pose
}

TEST_CASE("generation errors") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(4);
  AudioGestureFlow model(store, "g", small_config(), rng);
  std::mt19937_64 gen(3);
  CHECK_THROWS_AS(model.generate(random_mel(small_config().min_mel_frames() - 1, 3, gen), 1),
                  isg::ValidationError);
  CHECK_NOTHROW(model.generate(random_mel(small_config().min_mel_frames(), 3, gen), 1));
  CHECK_THROWS_AS(model.generate(random_mel(20, 4, gen), 1), isg::ValidationError);
}

TEST_CASE("inverse cache computes each mixing inverse once") {
  std::mt19937_64 gen(3);
  const isg::MelSpectrogram mel = random_mel(12, 3, gen);
  for (bool cache : {true, false}) {
    AudioGestureConfig c = small_config();
    c.cache_inverse = cache;
    c.silence_pad_s = 0.0;
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(4);
    AudioGestureFlow model(store, "g", c, rng);
    isg::testing::randomize_flow(store, "g", gen);
    const isg::MotionSequence m = model.generate(mel, 2);
    CHECK(model.last_inversions() == (cache ? 3 : 3 * 6));
  }
  AudioGestureConfig c = small_config();
  c.silence_pad_s = 0.0;
  isg::nn::ParameterStore s1, s2;
  isg::nn::Rng r1(4), r2(4);
  AudioGestureFlow m1(s1, "g", c, r1);
  c.cache_inverse = false;
  AudioGestureFlow m2(s2, "g", c, r2);
  std::mt19937_64 g1(8), g2(8);
  isg::testing::randomize_flow(s1, "g", g1);
  isg::testing::randomize_flow(s2, "g", g2);
  CHECK((m1.generate(mel, 3).values - m2.generate(mel, 3).values).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a few optimizer steps lower the nll") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(4);
  AudioGestureFlow model(store, "g", small_config(), rng);
  std::mt19937_64 gen(3);
  const Matrix mel = random_matrix(10, 3, gen);
  const Matrix motion = random_matrix(5, 5, gen, 0.3);
  model.initialize(mel, motion);
  const double before = model.nll_value(mel, motion);
  isg::optim::Adam opt(store.all(), {});
  for (int it = 0; it < 30; ++it) {
    ad::Tape::current().clear();
    store.zero_grad();
    ad::backward(model.nll(mel, motion));
    opt.step();
  }
  ad::Tape::current().clear();
  CHECK(model.nll_value(mel, motion) < before - 0.1);
}

TEST_CASE("pipeline runs the stages in order") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(1);
  isg::SpeechCore speech(store, "speech", isg::SpeechCoreConfig::toy(), rng);
  Eigen::RowVectorXd pose = Eigen::RowVectorXd::LinSpaced(30, -0.5, 0.5);
  MeanPoseStub stub(pose);
  const isg::MelConfig mel_cfg;
  const auto out = isg::pipeline_synthesize(&speech, mel_cfg, &stub, {3, 4, 5}, 9);
  CHECK(out.timings.sequential());
  CHECK(out.timings.total_s() >= out.timings.speech_s() + out.timings.gesture_s());
  CHECK(out.motion.frames() == (out.speech.mel_post.frames() + 3) / 4);
  for (Eigen::Index t = 0; t < out.motion.frames(); ++t) CHECK(out.motion.values.row(t) == pose);

  const auto again = isg::pipeline_synthesize(&speech, mel_cfg, &stub, {3, 4, 5}, 9);
  CHECK(again.speech.mel_post.values == out.speech.mel_post.values);

  try {
    isg::pipeline_synthesize(&speech, mel_cfg, nullptr, {3}, 1);
    FAIL("expected an error");
  } catch (const isg::ValidationError& e) {
    CHECK(std::string(e.what()).find("gesture") != std::string::npos);
  }
  try {
    isg::pipeline_synthesize(nullptr, mel_cfg, &stub, {3}, 1);
    FAIL("expected an error");
  } catch (const isg::ValidationError& e) {
    CHECK(std::string(e.what()).find("speech") != std::string::npos);
  }
}

TEST_CASE("pipeline with the flow gesture model") {
  isg::nn::ParameterStore store;
  isg::nn::Rng rng(1);
  isg::SpeechCore speech(store, "speech", isg::SpeechCoreConfig::toy(), rng);
  AudioGestureFlow gesture(store, "gesture", AudioGestureConfig::toy(), rng);
  CHECK(store.count() == store.count("speech.") + gesture.parameter_count());
  const auto out = isg::pipeline_synthesize(&speech, isg::MelConfig{}, &gesture, {7, 8, 9, 10}, 2);
  CHECK(out.timings.sequential());
  CHECK(out.motion.dims() == 30);
  CHECK(out.motion.frames() == (out.speech.mel_post.frames() + 3) / 4);
  CHECK(out.motion.values.allFinite());
  const nlohmann::json j = out.timings;
  CHECK(j.at("sequential").get<bool>());
  CHECK(j.at("gesture_start_offset_s").get<double>() >= j.at("speech_end_offset_s").get<double>());
}
