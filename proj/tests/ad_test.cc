#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.h"
#include "isg/ad.h"
#include "isg/nn.h"

using isg::ad::Matrix;
using isg::ad::Parameter;
using isg::ad::Var;
namespace ad = isg::ad;

namespace {

Parameter make_param(const char* name, int rows, int cols, unsigned seed,
                     double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Parameter p;
  p.name = name;
  p.value = Matrix(rows, cols);
  for (int i = 0; i < p.value.size(); ++i) p.value.data()[i] = d(rng);
  p.zero_grad();
  return p;
}

double check(const std::function<Var()>& f, std::vector<Parameter*> ps) {
  return isg::testing::gradcheck(f, ps).max_rel_error;
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Parameter a = make_param("a", 3, 4, 1);
  Parameter b = make_param("b", 3, 4, 2);
  Parameter r = make_param("r", 1, 4, 3);
  Parameter pos = make_param("pos", 3, 4, 4, 0.5, 2.0);
  CHECK(check([&] { return ad::sum(ad::mul(ad::param(a), ad::param(b))); },
              {&a, &b}) < 1e-6);
  CHECK(check([&] { return ad::sum(ad::square(ad::add(ad::param(a), ad::param(r)))); },
              {&a, &r}) < 1e-6);
  CHECK(check([&] { return ad::sum(ad::mul(ad::sub(ad::param(a), ad::param(r)), ad::param(b))); },
              {&a, &r, &b}) < 1e-6);
  CHECK(check([&] { return ad::sum(ad::mul(ad::sigmoid(ad::param(a)), ad::tanh(ad::param(b)))); },
              {&a, &b}) < 1e-6);
  CHECK(check([&] { return ad::mean(ad::mul(ad::log(ad::param(pos)), ad::exp(ad::param(a)))); },
              {&pos, &a}) < 1e-6);
  CHECK(check([&] { return ad::sum(ad::softplus(ad::scale(ad::param(a), 3.0))); }, {&a}) < 1e-6);
}

TEST_CASE("structural ops match finite differences") {
  Parameter a = make_param("a", 5, 3, 5);
  Parameter b = make_param("b", 3, 2, 6);
  Parameter c = make_param("c", 5, 2, 7);
  CHECK(check([&] {
          Var m = ad::matmul(ad::param(a), ad::param(b));
          Var cat = ad::concat_cols({m, ad::param(c), ad::slice_cols(ad::param(a), 1, 2)});
          return ad::sum(ad::square(cat));
        },
        {&a, &b, &c}) < 1e-6);
  CHECK(check([&] {
          Var g = ad::gather_rows(ad::param(a), {4, 0, 0, 2});
          Var rows = ad::concat_rows({g, ad::row(ad::param(a), 1), ad::transpose(ad::param(b))});
          return ad::sum(ad::mul(rows, rows));
        },
        {&a, &b}) < 1e-6);
  CHECK(check([&] {
          return ad::sum(ad::square(ad::sum_rows(ad::param(a))));
        },
        {&a}) < 1e-6);
}

TEST_CASE("softmax and layer norm gradients") {
  Parameter a = make_param("a", 4, 6, 8);
  Parameter w = make_param("w", 4, 6, 9);
  CHECK(check([&] { return ad::sum(ad::mul(ad::softmax_rows(ad::param(a)), ad::param(w))); },
              {&a, &w}) < 1e-6);
  CHECK(check([&] { return ad::sum(ad::mul(ad::layer_norm_rows(ad::param(a)), ad::param(w))); },
              {&a}) < 1e-5);
  Var s = ad::softmax_rows(ad::param(a));
  for (int r = 0; r < 4; ++r) CHECK(s.value().row(r).sum() == doctest::Approx(1.0));
  ad::Tape::current().clear();
}

TEST_CASE("conv patches, logdet and lstm cell gradients") {
  Parameter x = make_param("x", 7, 3, 10);
  Parameter k = make_param("k", 9, 2, 11);
  CHECK(check([&] { return ad::sum(ad::square(ad::matmul(ad::im2col(ad::param(x), 3, 2), ad::param(k)))); },
              {&x, &k}) < 1e-6);
  Parameter w = make_param("w", 4, 4, 12);
  w.value += Matrix::Identity(4, 4) * 2.0;
  CHECK(check([&] { return ad::logabsdet(ad::param(w)); }, {&w}) < 1e-6);
  Parameter gx = make_param("gx", 3, 8, 18);
  const std::vector<int> perm = {0, 1, 4, 5, 2, 3, 6, 7};
  CHECK(check([&] { return ad::sum(ad::square(ad::group_mix(ad::param(gx), ad::param(w), perm))); },
              {&gx, &w}) < 1e-6);
  {
    // Group j of row r is x[r, perm[j*4..]] * w.
    const Var y = ad::group_mix(ad::constant(gx.value), ad::constant(w.value), perm);
    Eigen::RowVectorXd g1(4);
    g1 << gx.value(1, 2), gx.value(1, 3), gx.value(1, 6), gx.value(1, 7);
    const Eigen::RowVectorXd m1 = g1 * w.value;
    CHECK(y.value()(1, 2) == doctest::Approx(m1(0)));
    CHECK(y.value()(1, 7) == doctest::Approx(m1(3)));
    ad::Tape::current().clear();
  }
  Parameter in = make_param("in", 1, 3, 13);
  Parameter h = make_param("h", 1, 2, 14);
  Parameter c = make_param("c", 1, 2, 15);
  Parameter lw = make_param("lw", 5, 8, 16);
  Parameter lb = make_param("lb", 1, 8, 17);
  CHECK(check([&] {
          Var hc = ad::lstm_cell(ad::param(in), ad::param(h), ad::param(c), ad::param(lw), ad::param(lb));
          Var hc2 = ad::lstm_cell(ad::param(in), ad::slice_cols(hc, 0, 2), ad::slice_cols(hc, 2, 2),
                                  ad::param(lw), ad::param(lb));
          return ad::sum(ad::square(hc2));
        },
        {&in, &h, &c, &lw, &lb}) < 1e-6);
}

TEST_CASE("losses") {
  Parameter a = make_param("a", 3, 3, 18);
  Parameter b = make_param("b", 3, 3, 19);
  CHECK(check([&] { return ad::mse(ad::param(a), ad::param(b)); }, {&a, &b}) < 1e-6);
  Matrix t(3, 3);
  t << 0, 1, 0, 1, 1, 0, 0, 0, 1;
  CHECK(check([&] { return ad::bce_with_logits(ad::param(a), t); }, {&a}) < 1e-6);
  Var z = ad::bce_with_logits(ad::constant(Matrix::Zero(1, 1)), Matrix::Zero(1, 1));
  CHECK(z.item() == doctest::Approx(std::log(2.0)));
  ad::Tape::current().clear();
}

TEST_CASE("frozen and no-grad parameters receive no gradient") {
  Parameter a = make_param("a", 2, 2, 20);
  Parameter b = make_param("b", 2, 2, 21);
  b.frozen = true;
  Var l = ad::sum(ad::mul(ad::param(a), ad::param(b)));
  ad::backward(l);
  CHECK(a.grad.isApprox(b.value));
  CHECK(b.grad.isZero());
  ad::Tape::current().clear();
  {
    ad::NoGradGuard guard;
    Var l2 = ad::sum(ad::param(a));
    CHECK_FALSE(l2.needs_grad());
  }
  ad::Tape::current().clear();
}

TEST_CASE("parameter leaves are shared within a tape generation") {
  Parameter a = make_param("a", 2, 2, 22);
  Var u = ad::param(a);
  Var v = ad::param(a);
  CHECK(u.node() == v.node());
  ad::backward(ad::sum(ad::add(u, v)));
  CHECK(a.grad.isApprox(Matrix::Constant(2, 2, 2.0)));
  ad::Tape::current().clear();
  Var w = ad::param(a);
  CHECK(w.value().isApprox(a.value));
  ad::Tape::current().clear();
}

TEST_CASE("shape errors are reported") {
  Var a = ad::constant(Matrix::Zero(2, 3));
  Var b = ad::constant(Matrix::Zero(2, 2));
  CHECK_THROWS_AS(ad::add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(ad::matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(ad::mse(a, b), std::invalid_argument);
  ad::Tape::current().clear();
}
