// Independent reference computations shared by the unit and acceptance tests.
#ifndef ISG_TESTS_ORACLES_H_
#define ISG_TESTS_ORACLES_H_

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isg/flow.h"
#include "isg/nn.h"

namespace isg::testing {

// Draws every flow parameter under `prefix` from a well-conditioned random
// distribution so that no block is the identity.
inline void randomize_flow(nn::ParameterStore& store, const std::string& prefix,
                           std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n01;
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (ad::Parameter* p : store.with_prefix(prefix)) {
    Eigen::MatrixXd& v = p->value;
    if (ends_with(p->name, ".logs")) {
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 0.2 * u(gen);
    } else if (ends_with(p->name, ".mix.weight")) {
      Eigen::MatrixXd a(v.rows(), v.cols());
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(gen);
      Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
      for (Eigen::Index c = 0; c < q.cols(); ++c) q.col(c) *= std::exp(0.3 * u(gen));
      v = q;
    } else if (ends_with(p->name, ".end.weight") || ends_with(p->name, ".coupling.out.weight")) {
      const double b = 0.3 / std::sqrt(static_cast<double>(v.rows()));
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = b * u(gen);
    } else if (ends_with(p->name, ".weight")) {
      const double b = 1.0 / std::sqrt(static_cast<double>(v.rows()));
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = b * u(gen);
    } else {
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 0.1 * u(gen);
    }
  }
}

// ln|det J| of f at x by central differences over every input element.
inline double numeric_logabsdet(const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& f,
                                const Eigen::MatrixXd& x, double h = 1e-5) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const Eigen::MatrixXd d = (f(xp) - f(xm)) / (2 * h);
    for (Eigen::Index k = 0; k < n; ++k) jac(k, i) = d.data()[k];
  }
  return std::log(std::abs(jac.determinant()));
}

// Best alignment by enumerating every monotonic surjective assignment of
// frames to tokens. Among alignments whose score is within a relative 1e-9
// of the best, returns the one that is lexicographically smallest when read
// from the last frame backwards.
inline std::vector<int> brute_force_alignment(const Eigen::MatrixXd& ll) {
  const int t_len = static_cast<int>(ll.rows()), n = static_cast<int>(ll.cols());
  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  std::function<void(int, int)> rec = [&](int t, int j) {
    if (t == t_len) {
      if (j == n - 1) all.push_back(cur);
      return;
    }
    for (int next : {j, j + 1}) {
      if (next >= n || (t == 0 && next != 0)) continue;
      if (n - 1 - next > t_len - 1 - t) continue;
      cur.push_back(next);
      rec(t + 1, next);
      cur.pop_back();
    }
  };
  cur.reserve(static_cast<std::size_t>(t_len));
  rec(0, 0);
  auto score = [&](const std::vector<int>& a) {
    double s = 0;
    for (int t = 0; t < t_len; ++t) s += ll(t, a[static_cast<std::size_t>(t)]);
    return s;
  };
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : all) best = std::max(best, score(a));
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  std::vector<int> chosen;
  for (const auto& a : all) {
    if (score(a) < best - tol) continue;
    if (chosen.empty() ||
        std::lexicographical_compare(a.rbegin(), a.rend(), chosen.rbegin(), chosen.rend())) {
      chosen = a;
    }
  }
  return chosen;
}

}  // namespace isg::testing

#endif  // ISG_TESTS_ORACLES_H_
