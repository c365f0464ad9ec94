// Finite-difference gradient oracle shared by the unit tests.
#ifndef ISG_TESTS_GRADCHECK_H_
#define ISG_TESTS_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "isg/ad.h"

namespace isg::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Compares analytic gradients of `loss` w.r.t. `params` against central
// differences. `loss` must rebuild the graph from scratch on every call and
// be deterministic. At most `max_per_param` entries per tensor are probed.
inline GradCheckResult gradcheck(const std::function<ad::Var()>& loss,
                                 const std::vector<ad::Parameter*>& params,
                                 double h = 1e-5, int max_per_param = 12,
                                 unsigned seed = 1) {
  ad::Tape::current().clear();
  for (ad::Parameter* p : params) p->zero_grad();
  ad::Var l = loss();
  ad::backward(l);
  std::vector<ad::Matrix> analytic;
  for (ad::Parameter* p : params) analytic.push_back(p->grad);
  ad::Tape::current().clear();

  GradCheckResult r;
  std::mt19937 rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Parameter* p = params[k];
    const ad::Index n = p->value.size();
    std::vector<ad::Index> idx(static_cast<std::size_t>(n));
    for (ad::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const ad::Index probes = std::min<ad::Index>(n, max_per_param);
    for (ad::Index s = 0; s < probes; ++s) {
      const ad::Index i = idx[static_cast<std::size_t>(s)];
      double& v = p->value.data()[i];
      const double orig = v;
      double fp, fm;
      {
        ad::NoGradGuard g;
        v = orig + h;
        fp = loss().item();
        ad::Tape::current().clear();
        v = orig - h;
        fm = loss().item();
        ad::Tape::current().clear();
      }
      v = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[k].data()[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(fd - an) / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace isg::testing

#endif  // ISG_TESTS_GRADCHECK_H_
