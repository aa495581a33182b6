#include "neutart/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "neutart/errors.hpp"

namespace neutart::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(long n) { return n > 0 && (n & (n - 1)) == 0; }

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_hz / f_sp + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_mel = 1000.0 / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return 1000.0 * std::exp(logstep * (mel - min_log_mel));
}

std::vector<double> hann_window(long n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n)));
  return w;
}

// Reflect padding by win/2 on both sides (edge sample not repeated).
std::vector<double> reflect_pad(const std::vector<double>& x, long pad) {
  long n = static_cast<long>(x.size());
  if (n <= pad)
    throw DataError("dsp: signal of " + std::to_string(n) +
                    " samples is too short for reflect padding of " +
                    std::to_string(pad));
  std::vector<double> y(static_cast<size_t>(n + 2 * pad));
  for (long i = 0; i < pad; ++i) y[static_cast<size_t>(i)] = x[static_cast<size_t>(pad - i)];
  std::copy(x.begin(), x.end(), y.begin() + pad);
  for (long i = 0; i < pad; ++i)
    y[static_cast<size_t>(n + pad + i)] = x[static_cast<size_t>(n - 2 - i)];
  return y;
}

void check_cfg(const AudioConfig& cfg) {
  if (!is_pow2(cfg.n_fft)) throw ConfigError("dsp: n_fft must be a power of two");
  if (cfg.hop_length > cfg.win_length || cfg.win_length > cfg.n_fft)
    throw ConfigError("dsp: need hop <= win <= n_fft");
  if (cfg.sample_rate <= 0) throw ConfigError("dsp: sample_rate must be > 0");
  if (cfg.fmax <= cfg.fmin) throw ConfigError("dsp: fmax must exceed fmin");
  if (cfg.fmax > static_cast<double>(cfg.sample_rate) / 2.0)
    throw ConfigError("dsp: fmax above Nyquist");
}

// One-sided spectra (T x B complex) of a signal already in the padded domain.
std::vector<std::vector<std::complex<double>>> spectra_of(
    const std::vector<double>& padded, const AudioConfig& cfg, long frames) {
  long win = cfg.win_length;
  long bins = cfg.n_fft / 2 + 1;
  const auto window = hann_window(win);
  std::vector<std::vector<std::complex<double>>> out(
      static_cast<size_t>(frames));
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  for (long t = 0; t < frames; ++t) {
    long off = t * cfg.hop_length;
    for (long i = 0; i < win; ++i)
      buf[static_cast<size_t>(i)] = padded[static_cast<size_t>(off + i)] *
                                    window[static_cast<size_t>(i)];
    for (long i = win; i < cfg.n_fft; ++i) buf[static_cast<size_t>(i)] = 0.0;
    fft(buf, false);
    out[static_cast<size_t>(t)].assign(buf.begin(), buf.begin() + bins);
  }
  return out;
}

// Weighted overlap-add inverse; returns (T-1)*hop + win padded-domain samples.
std::vector<double> signal_of(
    const std::vector<std::vector<std::complex<double>>>& spectra,
    const AudioConfig& cfg) {
  long frames = static_cast<long>(spectra.size());
  long win = cfg.win_length;
  long bins = cfg.n_fft / 2 + 1;
  long out_len = (frames - 1) * cfg.hop_length + win;
  const auto window = hann_window(win);
  std::vector<double> acc(static_cast<size_t>(out_len), 0.0);
  std::vector<double> norm(static_cast<size_t>(out_len), 0.0);
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  for (long t = 0; t < frames; ++t) {
    for (long b = 0; b < bins; ++b) buf[static_cast<size_t>(b)] = spectra[static_cast<size_t>(t)][static_cast<size_t>(b)];
    for (long b = 1; b < bins - 1; ++b)
      buf[static_cast<size_t>(cfg.n_fft - b)] = std::conj(buf[static_cast<size_t>(b)]);
    fft(buf, true);
    long off = t * cfg.hop_length;
    for (long i = 0; i < win; ++i) {
      double wv = window[static_cast<size_t>(i)];
      acc[static_cast<size_t>(off + i)] += wv * buf[static_cast<size_t>(i)].real();
      norm[static_cast<size_t>(off + i)] += wv * wv;
    }
  }
  for (long i = 0; i < out_len; ++i)
    if (norm[static_cast<size_t>(i)] > 1e-11) acc[static_cast<size_t>(i)] /= norm[static_cast<size_t>(i)];
  return acc;
}

} // namespace

void fft(std::vector<std::complex<double>>& a, bool invert) {
  size_t n = a.size();
  if (!is_pow2(static_cast<long>(n)))
    throw ConfigError("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (invert ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (invert)
    for (auto& x : a) x /= static_cast<double>(n);
}

num::Tensor mel_filterbank(const AudioConfig& cfg) {
  check_cfg(cfg);
  long bins = cfg.n_fft / 2 + 1;
  num::Tensor fb = num::Tensor::zeros({cfg.n_mels, bins});

  double mel_lo = hz_to_mel(cfg.fmin);
  double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> pts(static_cast<size_t>(cfg.n_mels + 2));
  for (long m = 0; m < cfg.n_mels + 2; ++m)
    pts[static_cast<size_t>(m)] = mel_to_hz(
        mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                     static_cast<double>(cfg.n_mels + 1));

  for (long m = 0; m < cfg.n_mels; ++m) {
    double lo = pts[static_cast<size_t>(m)];
    double mid = pts[static_cast<size_t>(m + 1)];
    double hi = pts[static_cast<size_t>(m + 2)];
    double enorm = 2.0 / (hi - lo); // area normalization
    for (long b = 0; b < bins; ++b) {
      double f = static_cast<double>(b) * static_cast<double>(cfg.sample_rate) /
                 static_cast<double>(cfg.n_fft);
      double up = (f - lo) / (mid - lo);
      double down = (hi - f) / (hi - mid);
      double w = std::max(0.0, std::min(up, down));
      fb.at(m, b) = w * enorm;
    }
  }
  return fb;
}

std::vector<double> mel_filter_centers_hz(const AudioConfig& cfg) {
  double mel_lo = hz_to_mel(cfg.fmin);
  double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(static_cast<size_t>(cfg.n_mels));
  for (long m = 0; m < cfg.n_mels; ++m)
    centers[static_cast<size_t>(m)] = mel_to_hz(
        mel_lo + (mel_hi - mel_lo) * static_cast<double>(m + 1) /
                     static_cast<double>(cfg.n_mels + 1));
  return centers;
}

num::Tensor stft_magnitude(const Waveform& w, const AudioConfig& cfg) {
  check_cfg(cfg);
  long n = static_cast<long>(w.samples.size());
  if (n < cfg.win_length)
    throw DataError("dsp: signal of " + std::to_string(n) +
                    " samples is shorter than one window (" +
                    std::to_string(cfg.win_length) + ")");
  long frames = cfg.frame_count(n);
  auto padded = reflect_pad(w.samples, cfg.win_length / 2);
  auto spectra = spectra_of(padded, cfg, frames);
  long bins = cfg.n_fft / 2 + 1;
  num::Tensor mag = num::Tensor::zeros({frames, bins});
  for (long t = 0; t < frames; ++t)
    for (long b = 0; b < bins; ++b)
      mag.at(t, b) = std::abs(spectra[static_cast<size_t>(t)][static_cast<size_t>(b)]);
  return mag;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const AudioConfig& cfg) {
  num::Tensor mag = stft_magnitude(w, cfg);
  num::Tensor fb = mel_filterbank(cfg);
  long frames = mag.rows();
  long bins = mag.cols();
  MelSpectrogram mel;
  mel.frames = num::Tensor::zeros({frames, cfg.n_mels});
  mel.sample_rate = cfg.sample_rate;
  mel.n_fft = cfg.n_fft;
  mel.hop_length = cfg.hop_length;
  mel.win_length = cfg.win_length;
  mel.fmin = cfg.fmin;
  mel.fmax = cfg.fmax;
  for (long t = 0; t < frames; ++t) {
    for (long m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (long b = 0; b < bins; ++b) {
        double a = mag.at(t, b);
        acc += fb.at(m, b) * a * a;
      }
      mel.frames.at(t, m) = std::log(std::max(acc, cfg.log_floor));
    }
  }
  return mel;
}

std::vector<double> extract_pitch(const Waveform& w, const AudioConfig& cfg) {
  check_cfg(cfg);
  long n = static_cast<long>(w.samples.size());
  long frames = cfg.frame_count(n);
  long win = cfg.win_length;
  auto padded = reflect_pad(w.samples, win / 2);

  double sr = static_cast<double>(cfg.sample_rate);
  long lag_min = static_cast<long>(std::ceil(sr / cfg.pitch_max_hz));
  long lag_max = std::min(static_cast<long>(std::floor(sr / cfg.pitch_min_hz)), win - 2);

  std::vector<double> f0(static_cast<size_t>(frames), 0.0);
  std::vector<double> r(static_cast<size_t>(lag_max + 2), 0.0);
  for (long t = 0; t < frames; ++t) {
    const double* s = padded.data() + t * cfg.hop_length;
    double r0 = 0.0;
    for (long i = 0; i < win; ++i) r0 += s[i] * s[i];
    if (r0 < 1e-10) continue;

    // Biased autocorrelation; the taper toward long lags prefers the true
    // period over its multiples.
    for (long lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      double acc = 0.0;
      for (long i = 0; i + lag < win; ++i) acc += s[i] * s[i + lag];
      r[static_cast<size_t>(lag - lag_min + 1)] = acc / r0;
    }
    long best = 0;
    double best_v = -2.0;
    for (long lag = lag_min; lag <= lag_max; ++lag) {
      double v = r[static_cast<size_t>(lag - lag_min + 1)];
      if (v > best_v) {
        best_v = v;
        best = lag;
      }
    }
    if (best_v < cfg.voicing_threshold) continue;

    double rm = r[static_cast<size_t>(best - lag_min)];
    double rc = r[static_cast<size_t>(best - lag_min + 1)];
    double rp = r[static_cast<size_t>(best - lag_min + 2)];
    double denom = rm - 2.0 * rc + rp;
    double delta = std::abs(denom) > 1e-12 ? 0.5 * (rm - rp) / denom : 0.0;
    delta = std::clamp(delta, -1.0, 1.0);
    f0[static_cast<size_t>(t)] = sr / (static_cast<double>(best) + delta);
  }
  return f0;
}

std::vector<double> extract_energy(const num::Tensor& stft_mag) {
  long frames = stft_mag.rows();
  long bins = stft_mag.cols();
  std::vector<double> e(static_cast<size_t>(frames), 0.0);
  for (long t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (long b = 0; b < bins; ++b) {
      double v = stft_mag.at(t, b);
      acc += v * v;
    }
    e[static_cast<size_t>(t)] = std::sqrt(acc);
  }
  return e;
}

Waveform griffin_lim(const MelSpectrogram& mel, long iterations) {
  if (iterations < 0) throw ConfigError("griffin_lim: iterations must be >= 0");
  AudioConfig cfg;
  cfg.sample_rate = mel.sample_rate;
  cfg.n_fft = mel.n_fft;
  cfg.hop_length = mel.hop_length;
  cfg.win_length = mel.win_length;
  cfg.n_mels = mel.frames.cols();
  cfg.fmin = mel.fmin;
  cfg.fmax = mel.fmax;
  check_cfg(cfg);

  long frames = mel.frames.rows();
  long n_mels = cfg.n_mels;
  long bins = cfg.n_fft / 2 + 1;
  if (frames < 1) throw DataError("griffin_lim: empty mel spectrogram");

  // Least-squares mel inversion: solve (F F^T) Y = F, take P = Y^T mel_power.
  num::Tensor fb = mel_filterbank(cfg);
  num::Tensor gram = num::Tensor::zeros({n_mels, n_mels});
  for (long i = 0; i < n_mels; ++i)
    for (long j = i; j < n_mels; ++j) {
      double acc = 0.0;
      for (long b = 0; b < bins; ++b) acc += fb.at(i, b) * fb.at(j, b);
      gram.at(i, j) = acc;
      gram.at(j, i) = acc;
    }
  num::Tensor y = fb; // augmented solve overwrites in place
  for (long col = 0; col < n_mels; ++col) {
    long pivot = col;
    for (long rr = col + 1; rr < n_mels; ++rr)
      if (std::abs(gram.at(rr, col)) > std::abs(gram.at(pivot, col))) pivot = rr;
    if (std::abs(gram.at(pivot, col)) < 1e-14)
      throw NumericError("griffin_lim: singular filterbank gram matrix");
    if (pivot != col) {
      for (long c = 0; c < n_mels; ++c) std::swap(gram.at(pivot, c), gram.at(col, c));
      for (long b = 0; b < bins; ++b) std::swap(y.at(pivot, b), y.at(col, b));
    }
    double inv = 1.0 / gram.at(col, col);
    for (long rr = 0; rr < n_mels; ++rr) {
      if (rr == col) continue;
      double f = gram.at(rr, col) * inv;
      if (f == 0.0) continue;
      for (long c = col; c < n_mels; ++c) gram.at(rr, c) -= f * gram.at(col, c);
      for (long b = 0; b < bins; ++b) y.at(rr, b) -= f * y.at(col, b);
    }
    double scale = inv;
    for (long c = col; c < n_mels; ++c) gram.at(col, c) *= scale;
    for (long b = 0; b < bins; ++b) y.at(col, b) *= scale;
  }

  // Clamping the pseudo-inverse alone leaves large mel-domain error (the
  // min-norm solution rings negative, and truncation misroutes that power),
  // so refine with multiplicative non-negative least-squares updates until
  // the filterbank applied to the estimate matches the mel input again.
  std::vector<double> colsum(static_cast<size_t>(bins), 0.0);
  for (long b = 0; b < bins; ++b) {
    double s = 0.0;
    for (long m = 0; m < n_mels; ++m) s += fb.at(m, b);
    colsum[static_cast<size_t>(b)] = s;
  }
  num::Tensor target_mag = num::Tensor::zeros({frames, bins});
  std::vector<double> p(static_cast<size_t>(bins)), mel_row(static_cast<size_t>(n_mels)),
      fp(static_cast<size_t>(n_mels));
  for (long t = 0; t < frames; ++t) {
    for (long m = 0; m < n_mels; ++m)
      mel_row[static_cast<size_t>(m)] = std::exp(mel.frames.at(t, m));
    double peak = 0.0;
    for (long b = 0; b < bins; ++b) {
      double acc = 0.0;
      for (long m = 0; m < n_mels; ++m) acc += y.at(m, b) * mel_row[static_cast<size_t>(m)];
      p[static_cast<size_t>(b)] = std::max(acc, 0.0);
      peak = std::max(peak, acc);
    }
    // Lift exact zeros inside the band; multiplicative updates cannot move
    // a zero.
    double lift = 1e-8 * (peak > 0.0 ? peak : 1.0);
    for (long b = 0; b < bins; ++b)
      if (colsum[static_cast<size_t>(b)] > 0.0)
        p[static_cast<size_t>(b)] = std::max(p[static_cast<size_t>(b)], lift);
    for (long it = 0; it < 60; ++it) {
      for (long m = 0; m < n_mels; ++m) {
        double acc = 0.0;
        for (long b = 0; b < bins; ++b) acc += fb.at(m, b) * p[static_cast<size_t>(b)];
        fp[static_cast<size_t>(m)] = acc;
      }
      for (long b = 0; b < bins; ++b) {
        if (colsum[static_cast<size_t>(b)] <= 0.0) continue;
        double nu = 0.0, de = 0.0;
        for (long m = 0; m < n_mels; ++m) {
          nu += fb.at(m, b) * mel_row[static_cast<size_t>(m)];
          de += fb.at(m, b) * fp[static_cast<size_t>(m)];
        }
        if (de > 1e-30) p[static_cast<size_t>(b)] *= nu / de;
      }
    }
    for (long b = 0; b < bins; ++b)
      target_mag.at(t, b) = std::sqrt(p[static_cast<size_t>(b)]);
  }

  // Zero-phase start keeps the whole reconstruction deterministic; the
  // momentum extrapolation is the fast variant of the update.
  constexpr double kMomentum = 0.99;
  std::vector<std::vector<std::complex<double>>> spectra(
      static_cast<size_t>(frames),
      std::vector<std::complex<double>>(static_cast<size_t>(bins)));
  std::vector<std::vector<std::complex<double>>> prev(
      static_cast<size_t>(frames),
      std::vector<std::complex<double>>(static_cast<size_t>(bins), 0.0));
  for (long t = 0; t < frames; ++t)
    for (long b = 0; b < bins; ++b)
      spectra[static_cast<size_t>(t)][static_cast<size_t>(b)] = target_mag.at(t, b);

  for (long it = 0; it < iterations; ++it) {
    auto sig = signal_of(spectra, cfg);
    auto est = spectra_of(sig, cfg, frames);
    for (long t = 0; t < frames; ++t)
      for (long b = 0; b < bins; ++b) {
        auto& pv = prev[static_cast<size_t>(t)][static_cast<size_t>(b)];
        std::complex<double> v = est[static_cast<size_t>(t)][static_cast<size_t>(b)];
        std::complex<double> ex = v - (kMomentum / (1.0 + kMomentum)) * pv;
        pv = v;
        double a = std::abs(ex);
        std::complex<double> phase = a > 1e-16 ? ex / a : std::complex<double>(1.0);
        spectra[static_cast<size_t>(t)][static_cast<size_t>(b)] =
            target_mag.at(t, b) * phase;
      }
  }

  auto sig = signal_of(spectra, cfg);
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  long start = cfg.win_length / 2;
  long want = frames * cfg.hop_length;
  sig.resize(static_cast<size_t>(std::max(start + want, static_cast<long>(sig.size()))),
             0.0);
  out.samples.assign(sig.begin() + start, sig.begin() + start + want);
  return out;
}

} // namespace neutart::dsp
