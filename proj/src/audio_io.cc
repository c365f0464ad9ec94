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

#include "isg/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace isg {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::ostream& os, std::uint16_t v) {
  os.put(static_cast<char>(v & 0xff));
  os.put(static_cast<char>((v >> 8) & 0xff));
}
std::uint32_t u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, std::span<const double> samples,
               int sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_wav: cannot open " + path);
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  put_u32(os, static_cast<std::uint32_t>(sample_rate));
  put_u32(os, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(os, static_cast<std::uint16_t>(v));
  }
  if (!os) throw std::runtime_error("write_wav: write failed for " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);
  }
  Waveform w;
  int channels = 0;
  int bits = 0;
  std::size_t pos = 12;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = u32(&buf[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw std::runtime_error("read_wav: truncated chunk in " + path);
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      if (u16(&buf[body]) != 1) throw std::runtime_error("read_wav: only PCM is supported: " + path);
      channels = u16(&buf[body + 2]);
      w.sample_rate = static_cast<int>(u32(&buf[body + 4]));
      bits = u16(&buf[body + 14]);
      have_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      if (!have_fmt || channels != 1 || bits != 16) {
        throw std::runtime_error("read_wav: expected 16-bit mono PCM: " + path);
      }
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(u16(&buf[body + 2 * i]));
        w.samples[i] = v / 32767.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw std::runtime_error("read_wav: no data chunk in " + path);
}

}  // namespace isg
