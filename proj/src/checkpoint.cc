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

#include "isg/checkpoint.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace isg {

namespace {

constexpr char kMagic[8] = {'I', 'S', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void append_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double read_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

void append_matrix(std::vector<std::uint8_t>& out, const ad::Matrix& m) {
  for (ad::Index i = 0; i < m.rows(); ++i) {
    for (ad::Index j = 0; j < m.cols(); ++j) append_f64(out, m(i, j));
  }
}

}  // namespace

Checkpoint snapshot(const nn::ParameterStore& store, const std::string& model,
                    std::int64_t iteration, const nlohmann::json& config) {
  Checkpoint c;
  c.model = model;
  c.iteration = iteration;
  c.config = config;
  for (const ad::Parameter* p : store.all()) c.tensors[p->name] = p->value;
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["model"] = ckpt.model;
  header["iteration"] = ckpt.iteration;
  header["config"] = ckpt.config;
  header["tensors"] = nlohmann::json::array();
  std::vector<std::uint8_t> payload;
  for (const auto& [name, m] : ckpt.tensors) {
    header["tensors"].push_back({{"name", name},
                                 {"rows", m.rows()},
                                 {"cols", m.cols()},
                                 {"offset", payload.size()}});
    append_matrix(payload, m);
  }
  const std::string text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, sizeof kMagic);
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("checkpoint: cannot rename into " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const std::uint64_t len = get_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
  std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
  const nlohmann::json header = nlohmann::json::parse(text);
  Checkpoint c;
  c.model = header.at("model").get<std::string>();
  c.iteration = header.at("iteration").get<std::int64_t>();
  c.config = header.at("config");
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<ad::Index>();
    const auto cols = t.at("cols").get<ad::Index>();
    const auto off = t.at("offset").get<std::size_t>();
    if (off + static_cast<std::size_t>(rows * cols) * 8 > payload.size()) {
      throw std::runtime_error("checkpoint: tensor extends past payload");
    }
    ad::Matrix m(rows, cols);
    const std::uint8_t* p = payload.data() + off;
    for (ad::Index i = 0; i < rows; ++i) {
      for (ad::Index j = 0; j < cols; ++j, p += 8) m(i, j) = read_f64(p);
    }
    c.tensors[t.at("name").get<std::string>()] = std::move(m);
  }
  return c;
}

std::size_t restore(nn::ParameterStore& store, const Checkpoint& ckpt) {
  std::size_t n = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    ad::Parameter* p = store.find(name);
    if (p == nullptr) continue;
    if (p->value.rows() != m.rows() || p->value.cols() != m.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    p->value = m;
    ++n;
  }
  return n;
}

std::vector<std::uint8_t> serialize_parameters(const nn::ParameterStore& store,
                                               const std::string& prefix) {
  std::vector<std::uint8_t> out;
  for (const ad::Parameter* p : store.all()) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    for (char ch : p->name) out.push_back(static_cast<std::uint8_t>(ch));
    append_matrix(out, p->value);
  }
  return out;
}

}  // namespace isg
