#pragma once

#include <complex>
#include <vector>

#include "neutart/audio.hpp"
#include "neutart/tensor.hpp"

namespace neutart::dsp {

struct AudioConfig {
  long sample_rate = 22050;
  long n_fft = 1024;
  long win_length = 1024;
  long hop_length = 256;
  long n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;
  double pitch_min_hz = 60.0;
  double pitch_max_hz = 500.0;
  double voicing_threshold = 0.3;

  double hop_seconds() const {
    return static_cast<double>(hop_length) / static_cast<double>(sample_rate);
  }
  // Frames are centered by reflect padding; frame t sits at sample t*hop.
  long frame_count(long num_samples) const {
    return 1 + (num_samples - win_length) / hop_length;
  }
};

struct MelSpectrogram {
  num::Tensor frames; // T x n_mels, natural-log power mel
  long sample_rate = 0;
  long n_fft = 0;
  long hop_length = 0;
  long win_length = 0;
  double fmin = 0.0;
  double fmax = 0.0;
};

// In-place radix-2 complex FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool invert);

// Slaney-scale triangular filterbank, area-normalized; n_mels x (n_fft/2 + 1).
num::Tensor mel_filterbank(const AudioConfig& cfg);

// Center frequency (Hz) of each mel filter, for diagnostics and tests.
std::vector<double> mel_filter_centers_hz(const AudioConfig& cfg);

// Hann-window STFT magnitudes, T x (n_fft/2 + 1). Reflect-pads win/2 at both
// ends; T = 1 + floor((len - win) / hop).
num::Tensor stft_magnitude(const Waveform& w, const AudioConfig& cfg);

// Log power mel: ln(max(M |X|^2, log_floor)).
MelSpectrogram mel_spectrogram(const Waveform& w, const AudioConfig& cfg);

// Per-frame F0 in Hz, 0 where unvoiced. Same framing as the mel transform.
std::vector<double> extract_pitch(const Waveform& w, const AudioConfig& cfg);

// Per-frame L2 norm of the linear-magnitude STFT frame.
std::vector<double> extract_energy(const num::Tensor& stft_mag);

// Phase recovery against the filterbank pseudo-inverse of `mel`. Output is
// exactly T*hop samples; iterations = 0 keeps the zero-phase estimate.
Waveform griffin_lim(const MelSpectrogram& mel, long iterations);

} // namespace neutart::dsp
