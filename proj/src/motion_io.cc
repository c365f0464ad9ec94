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

#include "isg/motion_io.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace isg {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

Eigen::Matrix3d axis_rotation(char axis, double degrees) {
  const Eigen::Vector3d a = axis == 'X'   ? Eigen::Vector3d::UnitX()
                            : axis == 'Y' ? Eigen::Vector3d::UnitY()
                                          : Eigen::Vector3d::UnitZ();
  return Eigen::AngleAxisd(degrees * kDeg, a).toRotationMatrix();
}

struct BvhChannelSet {
  int joint = -1;
  std::vector<std::string> channels;
};

class BvhParser {
 public:
  explicit BvhParser(std::istream& in) : in_(in) {}

  BvhFile parse() {
    expect("HIERARCHY");
    std::string word = next();
    if (word != "ROOT") fail("expected ROOT");
    parse_joint(-1);
    expect("MOTION");
    expect("Frames:");
    const long frames = std::stol(next());
    expect("Frame");
    expect("Time:");
    const double frame_time = std::stod(next());
    if (frames < 0 || frame_time <= 0) fail("bad frame header");

    BvhFile out;
    out.skeleton = skeleton_;
    out.motion.fps = 1.0 / frame_time;
    out.motion.joint_names = skeleton_.names();
    out.motion.values.resize(frames, 3 * skeleton_.size());
    for (long f = 0; f < frames; ++f) {
      for (const BvhChannelSet& set : channel_sets_) {
        Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
        for (const std::string& ch : set.channels) {
          const double v = std::stod(next());
          if (ch.size() == 9 && ch.substr(1) == "rotation") r = r * axis_rotation(ch[0], v);
        }
        out.motion.values.block<1, 3>(f, 3 * set.joint) =
            rotation_to_expmap(r, 1e-4).transpose();
      }
    }
    return out;
  }

 private:
  std::string next() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = next();
    if (got != w) fail("expected '" + w + "', got '" + got + "'");
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw ValidationError("bvh: " + msg);
  }

  void parse_joint(int parent) {
    Joint j;
    j.name = next();
    j.parent = parent;
    expect("{");
    expect("OFFSET");
    for (int k = 0; k < 3; ++k) j.offset[k] = std::stod(next());
    const int index = skeleton_.size();
    skeleton_.joints.push_back(j);
    expect("CHANNELS");
    const int n = std::stoi(next());
    BvhChannelSet set;
    set.joint = index;
    for (int k = 0; k < n; ++k) set.channels.push_back(next());
    channel_sets_.push_back(std::move(set));
    for (;;) {
      const std::string w = next();
      if (w == "}") return;
      if (w == "JOINT") {
        parse_joint(index);
      } else if (w == "End") {
        next();  // "Site"
        expect("{");
        expect("OFFSET");
        for (int k = 0; k < 3; ++k) next();
        expect("}");
      } else {
        fail("unexpected token '" + w + "'");
      }
    }
  }

  std::istream& in_;
  Skeleton skeleton_;
  std::vector<BvhChannelSet> channel_sets_;
};

void write_joint(std::ostream& out, const Skeleton& s, int j, int depth) {
  const std::string pad(2 * depth, ' ');
  const Joint& joint = s.joints[j];
  out << pad << (joint.parent < 0 ? "ROOT " : "JOINT ") << joint.name << "\n"
      << pad << "{\n"
      << pad << "  OFFSET " << joint.offset.x() << " " << joint.offset.y() << " "
      << joint.offset.z() << "\n";
  if (joint.parent < 0) {
    out << pad << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n";
  } else {
    out << pad << "  CHANNELS 3 Zrotation Xrotation Yrotation\n";
  }
  bool leaf = true;
  for (int c = 0; c < s.size(); ++c) {
    if (s.joints[c].parent == j) {
      leaf = false;
      write_joint(out, s, c, depth + 1);
    }
  }
  if (leaf) {
    out << pad << "  End Site\n" << pad << "  {\n" << pad << "    OFFSET 0 0 0\n"
        << pad << "  }\n";
  }
  out << pad << "}\n";
}

void collect_order(const Skeleton& s, int j, std::vector<int>& order) {
  order.push_back(j);
  for (int c = 0; c < s.size(); ++c) {
    if (s.joints[c].parent == j) collect_order(s, c, order);
  }
}

}  // namespace

int Skeleton::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (joints[i].name == name) return i;
  }
  return -1;
}

std::vector<std::string> Skeleton::names() const {
  std::vector<std::string> out;
  for (const Joint& j : joints) out.push_back(j.name);
  return out;
}

Skeleton toy_skeleton() {
  Skeleton s;
  auto add = [&](const std::string& name, int parent, double x, double y) {
    s.joints.push_back({name, parent, Eigen::Vector3d(x, y, 0.0)});
  };
  add("Hips", -1, 0, 0);
  add("Spine", 0, 0, 20);
  add("Neck", 1, 0, 25);
  add("Head", 2, 0, 10);
  add("RightShoulder", 2, -15, -3);
  add("RightElbow", 4, -25, 0);
  add("RightWrist", 5, -22, 0);
  add("LeftShoulder", 2, 15, -3);
  add("LeftElbow", 7, 25, 0);
  add("LeftWrist", 8, 22, 0);
  return s;
}

Eigen::MatrixXd forward_kinematics(const Skeleton& skeleton,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& frame) {
  const int n = skeleton.size();
  if (frame.size() != 3 * n) {
    throw ValidationError("forward_kinematics: frame has " + std::to_string(frame.size()) +
                          " channels, skeleton needs " + std::to_string(3 * n));
  }
  std::vector<Eigen::Matrix3d> global(n);
  Eigen::MatrixXd pos(n, 3);
  for (int j = 0; j < n; ++j) {
    const Joint& joint = skeleton.joints[j];
    const Eigen::Matrix3d local =
        expmap_to_rotation(frame.segment<3>(3 * j).transpose());
    if (joint.parent < 0) {
      global[j] = local;
      pos.row(j) = joint.offset.transpose();
    } else {
      const int p = joint.parent;
      if (p >= j) throw ValidationError("forward_kinematics: parent after child");
      global[j] = global[p] * local;
      pos.row(j) = pos.row(p) + (global[p] * joint.offset).transpose();
    }
  }
  return pos;
}

void write_motion_csv(const std::string& path, const MotionSequence& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Eigen::Index joints = m.dims() / 3;
  if (m.dims() % 3 != 0) throw ValidationError("motion dims not divisible by 3");
  for (Eigen::Index j = 0; j < joints; ++j) {
    const std::string name = j < static_cast<Eigen::Index>(m.joint_names.size())
                                 ? m.joint_names[j]
                                 : "joint" + std::to_string(j);
    out << (j ? "," : "") << name << "_x," << name << "_y," << name << "_z";
  }
  out << "\n" << std::setprecision(17);
  for (Eigen::Index f = 0; f < m.frames(); ++f) {
    for (Eigen::Index c = 0; c < m.dims(); ++c) out << (c ? "," : "") << m.values(f, c);
    out << "\n";
  }
}

MotionSequence read_motion_csv(const std::string& path, double fps) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open motion file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty motion file " + path);
  const auto header = split(line, ',');
  if (header.empty() || header.size() % 3 != 0) {
    throw ValidationError(path + ": header must name 3 channels per joint");
  }
  MotionSequence m;
  m.fps = fps;
  for (std::size_t c = 0; c < header.size(); c += 3) {
    const std::string& h = header[c];
    m.joint_names.push_back(h.size() > 2 ? h.substr(0, h.size() - 2) : h);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw ValidationError(path + ": row " + std::to_string(rows.size() + 1) +
                            " has wrong column count");
    }
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(std::stod(c));
    rows.push_back(std::move(r));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(header.size()));
  for (std::size_t f = 0; f < rows.size(); ++f) {
    for (std::size_t c = 0; c < header.size(); ++c) m.values(f, c) = rows[f][c];
  }
  return m;
}

BvhFile read_bvh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return BvhParser(in).parse();
  } catch (const std::logic_error& e) {  // stod / stoi failures
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw ValidationError("bvh: malformed number in " + path);
  }
}

void write_bvh(const std::string& path, const Skeleton& s, const MotionSequence& m) {
  if (m.dims() != 3 * s.size()) {
    throw ValidationError("write_bvh: motion has " + std::to_string(m.dims()) +
                          " channels, skeleton needs " + std::to_string(3 * s.size()));
  }
  if (s.size() == 0 || s.joints[0].parent != -1) {
    throw ValidationError("write_bvh: first joint must be the root");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(10) << "HIERARCHY\n";
  write_joint(out, s, 0, 0);
  std::vector<int> order;
  collect_order(s, 0, order);
  out << "MOTION\nFrames: " << m.frames() << "\nFrame Time: " << 1.0 / m.fps << "\n";
  for (Eigen::Index f = 0; f < m.frames(); ++f) {
    out << "0 0 0";
    for (int j : order) {
      const Eigen::Matrix3d r = expmap_to_rotation(m.values.block<1, 3>(f, 3 * j).transpose());
      const Eigen::Vector3d zxy = r.eulerAngles(2, 0, 1) / kDeg;  // R = Rz Rx Ry
      out << " " << zxy[0] << " " << zxy[1] << " " << zxy[2];
    }
    out << "\n";
  }
}

}  // namespace isg
