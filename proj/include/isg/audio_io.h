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

#ifndef ISG_AUDIO_IO_H_
#define ISG_AUDIO_IO_H_

#include <span>
#include <string>
#include <vector>

namespace isg {

struct Waveform {
  std::vector<double> samples;  // [-1, 1]
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// 16-bit PCM mono RIFF/WAVE. Samples are clipped to [-1, 1] on write.
void write_wav(const std::string& path, std::span<const double> samples,
               int sample_rate);
Waveform read_wav(const std::string& path);

}  // namespace isg

#endif  // ISG_AUDIO_IO_H_
