#pragma once

#include <string>
#include <vector>

namespace neutart::dsp {

struct Waveform {
  std::vector<double> samples; // in [-1, 1]
  long sample_rate = 0;
};

// RIFF/WAVE, PCM 16-bit. Stereo is downmixed by averaging the channels.
Waveform read_wav(const std::string& path);

// Mono PCM 16-bit; samples are clamped to [-1, 1] before quantization.
void write_wav(const std::string& path, const Waveform& w);

} // namespace neutart::dsp
