#include "neutart/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "neutart/errors.hpp"

namespace neutart::dsp {

namespace {

uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("wav: truncated file " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& is, const std::string& path) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2))
    throw DataError("wav: truncated file " + path);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

} // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("wav: cannot open " + path);

  char tag[4];
  if (!is.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError("wav: not a RIFF file: " + path);
  read_u32(is, path); // riff size, unused
  if (!is.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError("wav: not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<int16_t> pcm;

  while (is.read(tag, 4)) {
    uint32_t chunk_size = read_u32(is, path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(is, path);
      channels = read_u16(is, path);
      sample_rate = read_u32(is, path);
      read_u32(is, path); // byte rate
      read_u16(is, path); // block align
      bits = read_u16(is, path);
      have_fmt = true;
      if (chunk_size > 16) is.seekg(chunk_size - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data chunk before fmt in " + path);
      if (format != 1 || bits != 16)
        throw DataError("wav: unsupported encoding in " + path +
                        " (need PCM 16-bit, got format " + std::to_string(format) +
                        ", " + std::to_string(bits) + " bits)");
      if (channels == 0) throw DataError("wav: zero channels in " + path);
      size_t count = chunk_size / 2;
      pcm.resize(count);
      if (!is.read(reinterpret_cast<char*>(pcm.data()),
                   static_cast<std::streamsize>(count * 2)))
        throw DataError("wav: truncated data chunk in " + path);
      break;
    } else {
      // Skip unknown chunks (LIST, fact, ...). Chunks are word-aligned.
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  if (pcm.empty() && !have_fmt) throw DataError("wav: no fmt chunk in " + path);

  Waveform w;
  w.sample_rate = static_cast<long>(sample_rate);
  size_t frames = pcm.size() / channels;
  w.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) acc += pcm[i * channels + c];
    w.samples[i] = acc / (32768.0 * channels);
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw ConfigError("wav: sample_rate must be > 0");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("wav: cannot write " + path);

  uint32_t n = static_cast<uint32_t>(w.samples.size());
  uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 1); // PCM
  write_u16(os, 1); // mono
  write_u32(os, static_cast<uint32_t>(w.sample_rate));
  write_u32(os, static_cast<uint32_t>(w.sample_rate * 2));
  write_u16(os, 2);  // block align
  write_u16(os, 16); // bits
  os.write("data", 4);
  write_u32(os, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    double v = std::clamp(w.samples[i], -1.0, 1.0);
    auto q = static_cast<int16_t>(std::lrint(v * 32767.0));
    write_u16(os, static_cast<uint16_t>(q));
  }
  if (!os) throw DataError("wav: write failed for " + path);
}

} // namespace neutart::dsp
