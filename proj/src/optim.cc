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

#include "isg/optim.h"

#include <cmath>

namespace isg::optim {

Adam::Adam(std::vector<ad::Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ad::Parameter* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const ad::Parameter* p : params_) {
    if (!p->frozen && p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  double clip = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) {
    clip = config_.clip_norm / (norm + 1e-12);
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Parameter* p = params_[k];
    if (p->frozen || p->grad.size() == 0) continue;
    ad::Matrix g = p->grad * clip;
    if (config_.weight_decay > 0.0) g += config_.weight_decay * p->value;
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseAbs2();
    p->value.array() -= config_.lr * (m_[k].array() / bc1) /
                        ((v_[k].array() / bc2).sqrt() + config_.eps);
  }
  return norm;
}

}  // namespace isg::optim
