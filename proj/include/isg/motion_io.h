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

#ifndef ISG_MOTION_IO_H_
#define ISG_MOTION_IO_H_

// Skeletons, forward kinematics and motion file formats (CSV, BVH).

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isg/features.h"

namespace isg {

struct Joint {
  std::string name;
  int parent = -1;  // index into Skeleton::joints, -1 for the root
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

struct Skeleton {
  std::vector<Joint> joints;  // parents precede children

  int size() const { return static_cast<int>(joints.size()); }
  int index_of(const std::string& name) const;  // -1 if absent
  std::vector<std::string> names() const;
};

// Ten-joint upper-body skeleton shipped with the synthetic corpus. Arms hang
// along the x axis in the rest pose; y is up and z points out of the frontal
// plane.
Skeleton toy_skeleton();

// World joint positions (joints x 3) for one frame of exponential maps laid
// out as 3 channels per joint in skeleton order.
Eigen::MatrixXd forward_kinematics(const Skeleton& skeleton,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& frame);

// CSV: header row `<joint>_x,<joint>_y,<joint>_z,...`, one row per frame.
void write_motion_csv(const std::string& path, const MotionSequence& motion);
MotionSequence read_motion_csv(const std::string& path, double fps);

struct BvhFile {
  Skeleton skeleton;
  MotionSequence motion;  // exponential maps, root translation dropped
};

// Channels may be any order of X/Y/Zrotation (positions are ignored on read).
// Written files use a ZXY rotation order and a zero root translation.
BvhFile read_bvh(const std::string& path);
void write_bvh(const std::string& path, const Skeleton& skeleton,
               const MotionSequence& motion);

}  // namespace isg

#endif  // ISG_MOTION_IO_H_
