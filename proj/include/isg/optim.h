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

#ifndef ISG_OPTIM_H_
#define ISG_OPTIM_H_

#include <vector>

#include "isg/ad.h"

namespace isg::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, AdamConfig config);

  // Applies one update from the accumulated gradients and returns the
  // global gradient norm before clipping. Frozen parameters are skipped.
  double step();
  const AdamConfig& config() const { return config_; }
  const std::vector<ad::Parameter*>& params() const { return params_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  AdamConfig config_;
  long steps_ = 0;
};

}  // namespace isg::optim

#endif  // ISG_OPTIM_H_
