#include "neutart/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "neutart/audio.hpp"
#include "neutart/checkpoint.hpp"
#include "neutart/dsp.hpp"
#include "neutart/errors.hpp"
#include "neutart/flame.hpp"
#include "neutart/lexicon.hpp"
#include "neutart/rng.hpp"
#include "neutart/textgrid.hpp"

namespace neutart::corpus {

namespace fs = std::filesystem;
using num::Tensor;

namespace {

constexpr char kMagic[8] = {'N', 'T', 'A', 'U', '0', '0', '0', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32(const unsigned char* data, size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_i64(std::vector<unsigned char>& buf, long v) {
  put_u64(buf, static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
}

void put_f64(std::vector<unsigned char>& buf, double v) {
  put_u64(buf, std::bit_cast<std::uint64_t>(v));
}

void put_str(std::vector<unsigned char>& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf.insert(buf.end(), s.begin(), s.end());
}

// Cursor over a fully loaded file; reads past the end report where they fell.
struct ByteReader {
  const std::vector<unsigned char>& buf;
  size_t pos = 0;
  const std::string& path;

  void need(std::uint64_t n) const {
    if (n > buf.size() || pos > buf.size() - n)
      throw DataError("utterance record: truncated file " + path + " (need " +
                      std::to_string(n) + " more bytes at byte offset " + std::to_string(pos) +
                      ", file has " + std::to_string(buf.size()) + ")");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  long i64() { return static_cast<long>(static_cast<std::int64_t>(u64())); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  // Bounds the element count before the bulk need() so a corrupt header
  // cannot request a near-2^64 allocation.
  std::uint64_t count(const char* what, std::uint64_t limit) {
    std::uint64_t n = u64();
    if (n > limit)
      throw DataError("utterance record: implausible " + std::string(what) + " count " +
                      std::to_string(n) + " in " + path);
    return n;
  }
};

std::vector<unsigned char> read_all(const std::string& path, const char* kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(std::string(kind) + ": cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  return buf;
}

void write_all(const std::string& path, const std::vector<unsigned char>& buf,
               const char* kind) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(std::string(kind) + ": cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError(std::string(kind) + ": short write to " + path);
}

std::string json_string(const nlohmann::json& obj, const char* key, const std::string& path,
                        long line) {
  if (!obj.contains(key))
    throw ParseError(path, line, std::string("manifest row is missing \"") + key + "\"");
  if (!obj[key].is_string())
    throw ParseError(path, line, std::string("manifest key \"") + key + "\" must be a string");
  return obj[key].get<std::string>();
}

} // namespace

std::vector<ManifestRow> parse_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open " + path);
  std::vector<ManifestRow> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
    if (trimmed.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(trimmed, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      throw ParseError(path, lineno, "manifest line is not a JSON object");
    ManifestRow row;
    row.wav = cfg::sibling_path(path, json_string(obj, "wav", path, lineno));
    row.textgrid = cfg::sibling_path(path, json_string(obj, "textgrid", path, lineno));
    row.flame = cfg::sibling_path(path, json_string(obj, "flame", path, lineno));
    row.transcript = json_string(obj, "transcript", path, lineno);
    if (obj.contains("id")) {
      row.id = json_string(obj, "id", path, lineno);
    } else {
      row.id = fs::path(json_string(obj, "wav", path, lineno)).stem().string();
    }
    if (row.id.empty()) throw ParseError(path, lineno, "manifest row has an empty id");
    if (obj.contains("speaker")) {
      if (!obj["speaker"].is_number_integer())
        throw ParseError(path, lineno, "manifest key \"speaker\" must be an integer");
      row.speaker_id = obj["speaker"].get<long>();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_utterance(const std::string& path, const model::AlignedUtterance& u) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32(buf, kVersion);
  put_str(buf, u.id);

  const long n = u.phonemes.size();
  put_u64(buf, static_cast<std::uint64_t>(n));
  for (long i = 0; i < n; ++i) {
    put_str(buf, u.phonemes.symbols[i]);
    put_i64(buf, u.phonemes.stresses[i]);
    put_i64(buf, u.phonemes.indices[i]);
  }
  put_u64(buf, u.phonemes.word_boundaries.size());
  for (long b : u.phonemes.word_boundaries) put_i64(buf, b);

  for (long i = 0; i < u.variance.pitch.size(); ++i) put_f64(buf, u.variance.pitch[i]);
  for (long i = 0; i < u.variance.energy.size(); ++i) put_f64(buf, u.variance.energy[i]);
  for (long d : u.variance.durations) put_i64(buf, d);

  const auto& mel = u.target_mel;
  put_u64(buf, static_cast<std::uint64_t>(mel.frames.rows()));
  put_u64(buf, static_cast<std::uint64_t>(mel.frames.cols()));
  put_i64(buf, mel.sample_rate);
  put_i64(buf, mel.n_fft);
  put_i64(buf, mel.hop_length);
  put_i64(buf, mel.win_length);
  put_f64(buf, mel.fmin);
  put_f64(buf, mel.fmax);
  for (long i = 0; i < mel.frames.size(); ++i) put_f64(buf, mel.frames[i]);

  put_u64(buf, static_cast<std::uint64_t>(u.target_flame.frames.rows()));
  put_u64(buf, static_cast<std::uint64_t>(u.target_flame.frames.cols()));
  for (long i = 0; i < u.target_flame.frames.size(); ++i) put_f64(buf, u.target_flame.frames[i]);
  put_u64(buf, static_cast<std::uint64_t>(u.target_flame.identity_beta.size()));
  for (long i = 0; i < u.target_flame.identity_beta.size(); ++i)
    put_f64(buf, u.target_flame.identity_beta[i]);

  put_i64(buf, u.speaker_id);
  put_u32(buf, crc32(buf.data(), buf.size()));
  write_all(path, buf, "utterance record");
}

model::AlignedUtterance load_utterance(const std::string& path) {
  std::vector<unsigned char> buf = read_all(path, "utterance record");
  if (buf.size() < 12 + 4 || !std::equal(kMagic, kMagic + 8, buf.begin()))
    throw DataError("utterance record: " + path + " is not an NTAU0001 file");
  size_t payload = buf.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[payload + i]) << (8 * i);
  if (crc32(buf.data(), payload) != stored)
    throw DataError("utterance record: checksum mismatch in " + path);

  ByteReader r{buf, 8, path};
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("utterance record: unsupported version " + std::to_string(version) +
                    " in " + path);

  model::AlignedUtterance u;
  u.id = r.str();

  std::uint64_t n = r.count("phoneme", 1'000'000);
  if (n == 0) throw DataError("utterance record: " + path + " holds zero phonemes");
  u.phonemes.symbols.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    u.phonemes.symbols.push_back(r.str());
    u.phonemes.stresses.push_back(static_cast<int>(r.i64()));
    u.phonemes.indices.push_back(r.i64());
  }
  std::uint64_t nb = r.count("word boundary", 1'000'000);
  for (std::uint64_t i = 0; i < nb; ++i) u.phonemes.word_boundaries.push_back(r.i64());

  u.variance.pitch = Tensor({static_cast<long>(n)});
  r.need(n * 8);
  for (std::uint64_t i = 0; i < n; ++i) u.variance.pitch[static_cast<long>(i)] = r.f64();
  u.variance.energy = Tensor({static_cast<long>(n)});
  r.need(n * 8);
  for (std::uint64_t i = 0; i < n; ++i) u.variance.energy[static_cast<long>(i)] = r.f64();
  u.variance.durations.resize(n);
  r.need(n * 8);
  for (std::uint64_t i = 0; i < n; ++i) u.variance.durations[i] = r.i64();

  std::uint64_t mt = r.count("mel frame", 100'000'000);
  std::uint64_t mc = r.count("mel channel", 100'000);
  u.target_mel.frames = Tensor({static_cast<long>(mt), static_cast<long>(mc)});
  u.target_mel.sample_rate = r.i64();
  u.target_mel.n_fft = r.i64();
  u.target_mel.hop_length = r.i64();
  u.target_mel.win_length = r.i64();
  u.target_mel.fmin = r.f64();
  u.target_mel.fmax = r.f64();
  r.need(mt * mc * 8);
  for (long i = 0; i < u.target_mel.frames.size(); ++i) u.target_mel.frames[i] = r.f64();

  std::uint64_t ft = r.count("face frame", 100'000'000);
  std::uint64_t fc = r.count("face channel", 100'000);
  u.target_flame.frames = Tensor({static_cast<long>(ft), static_cast<long>(fc)});
  r.need(ft * fc * 8);
  for (long i = 0; i < u.target_flame.frames.size(); ++i) u.target_flame.frames[i] = r.f64();
  std::uint64_t betas = r.count("identity coefficient", 100'000);
  u.target_flame.identity_beta = Tensor({static_cast<long>(betas)});
  r.need(betas * 8);
  for (std::uint64_t i = 0; i < betas; ++i)
    u.target_flame.identity_beta[static_cast<long>(i)] = r.f64();

  u.speaker_id = r.i64();
  if (r.pos != payload)
    throw DataError("utterance record: " + std::to_string(payload - r.pos) +
                    " unread bytes before the checksum in " + path);
  return u;
}

namespace {

struct RowOutcome {
  bool ok = false;
  model::AlignedUtterance utt;
  std::string reason;
};

RowOutcome reject(std::string reason) {
  RowOutcome o;
  o.reason = std::move(reason);
  return o;
}

// Frame count the alignment implies for this audio config; mirrors the STFT
// framing so a short final interval is not misread as a mismatch.
long aligned_frame_count(const text::AlignmentTrack& track, const dsp::AudioConfig& audio) {
  long samples = std::llround(track.total_duration_seconds *
                              static_cast<double>(audio.sample_rate));
  if (samples < audio.win_length) return 0;
  return audio.frame_count(samples);
}

RowOutcome prepare_row(const ManifestRow& row, const cfg::RunConfig& config,
                       const text::PronunciationLexicon& lex) {
  try {
    const dsp::AudioConfig& audio = config.audio;
    dsp::Waveform w = dsp::read_wav(row.wav);
    if (w.sample_rate != audio.sample_rate)
      return reject("sample rate " + std::to_string(w.sample_rate) + ", corpus expects " +
                    std::to_string(audio.sample_rate));
    if (static_cast<long>(w.samples.size()) < audio.win_length)
      return reject("audio is shorter than one analysis window");

    dsp::MelSpectrogram mel = dsp::mel_spectrogram(w, audio);
    const long t_mel = mel.frames.rows();
    std::vector<double> energy_track = dsp::extract_energy(dsp::stft_magnitude(w, audio));
    std::vector<double> pitch_track = dsp::extract_pitch(w, audio);

    text::AlignmentTrack track = text::parse_textgrid(row.textgrid, config.prepare_tier);
    long t_align = aligned_frame_count(track, audio);
    if (std::labs(t_align - t_mel) > 1)
      return reject("alignment covers " + std::to_string(t_align) + " frames, audio has " +
                    std::to_string(t_mel));
    text::FrameDurations fd =
        text::quantize_durations(track, audio.hop_seconds(), t_mel);

    std::vector<std::string> labels;
    labels.reserve(track.intervals.size());
    for (const auto& iv : track.intervals) labels.push_back(iv.label);
    text::PhonemeSequence seq = text::sequence_from_labels(labels, lex);

    flame::FlameFrameSequence face = flame::load_flame_frames(row.flame);
    long drift = face.frame_count() - t_mel;
    if (std::labs(drift) > 1)
      return reject("face track has " + std::to_string(face.frame_count()) +
                    " frames for " + std::to_string(t_mel) + " audio frames");
    if (drift != 0) {
      Tensor fixed({t_mel, face.frames.cols()});
      for (long t = 0; t < t_mel; ++t) {
        long src = std::min(t, face.frame_count() - 1);
        for (long c = 0; c < face.frames.cols(); ++c) fixed.at(t, c) = face.frames.at(src, c);
      }
      face.frames = std::move(fixed);
    }

    const long n = seq.size();
    Tensor pitch({n});
    Tensor energy({n});
    long start = 0;
    for (long i = 0; i < n; ++i) {
      long len = fd.frames_per_phoneme[i];
      double pitch_sum = 0.0;
      long voiced = 0;
      double energy_sum = 0.0;
      for (long t = start; t < start + len; ++t) {
        if (pitch_track[t] > 0.0) {
          pitch_sum += pitch_track[t];
          ++voiced;
        }
        energy_sum += energy_track[t];
      }
      pitch[i] = voiced > 0 ? pitch_sum / static_cast<double>(voiced) : 0.0;
      energy[i] = len > 0 ? energy_sum / static_cast<double>(len) : 0.0;
      start += len;
    }

    RowOutcome o;
    o.utt.id = row.id;
    o.utt.phonemes = std::move(seq);
    o.utt.variance.pitch = std::move(pitch);
    o.utt.variance.energy = std::move(energy);
    o.utt.variance.durations = std::move(fd.frames_per_phoneme);
    o.utt.target_mel = std::move(mel);
    o.utt.target_flame = std::move(face);
    o.utt.speaker_id = row.speaker_id;
    o.utt.validate(config.model);
    o.ok = true;
    return o;
  } catch (const Error& e) {
    return reject(e.what());
  }
}

bool safe_record_id(const std::string& id) {
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return !id.empty() && id != "." && id != "..";
}

} // namespace

PrepareResult prepare_corpus(const cfg::RunConfig& config) {
  config.validate();
  text::PronunciationLexicon lex =
      text::parse_lexicon(cfg::resolve_path(config.paths.lexicon));
  std::string manifest_path = cfg::resolve_path(config.paths.corpus_manifest);
  std::vector<ManifestRow> rows = parse_manifest(manifest_path);
  if (rows.empty()) throw DataError("manifest: " + manifest_path + " lists no utterances");

  {
    std::vector<std::string> ids;
    for (const auto& r : rows) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end())
      throw DataError("manifest: duplicate utterance id '" + *dup + "' in " + manifest_path);
  }

  fs::path out_root = cfg::resolve_path(config.paths.output_dir);
  fs::path prepared = out_root / "prepared";
  fs::create_directories(prepared / "records");

  std::vector<RowOutcome> outcomes(rows.size());
  size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (size_t base = 0; base < rows.size(); base += workers) {
    size_t end = std::min(rows.size(), base + workers);
    std::vector<std::future<RowOutcome>> futs;
    for (size_t i = base; i < end; ++i)
      futs.push_back(std::async(std::launch::async, prepare_row, std::cref(rows[i]),
                                std::cref(config), std::cref(lex)));
    for (size_t i = base; i < end; ++i) outcomes[i] = futs[i - base].get();
  }

  PrepareResult result;
  result.stats.mel_mean = Tensor({config.model.mel_channels});
  std::ofstream index(prepared / "index.txt");
  std::ofstream rejects(prepared / "rejects.txt");
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!outcomes[i].ok) {
      result.rejects.emplace_back(rows[i].id, outcomes[i].reason);
      rejects << rows[i].id << '\t' << outcomes[i].reason << '\n';
      continue;
    }
    if (!safe_record_id(rows[i].id)) {
      result.rejects.emplace_back(rows[i].id, "utterance id contains unsafe characters");
      rejects << rows[i].id << '\t' << "utterance id contains unsafe characters" << '\n';
      continue;
    }
    const model::AlignedUtterance& u = outcomes[i].utt;
    std::string rel = "records/" + u.id + ".ntau";
    save_utterance((prepared / rel).string(), u);
    index << u.id << '\t' << rel << '\n';
    result.accepted_ids.push_back(u.id);
    for (long t = 0; t < u.target_mel.frames.rows(); ++t)
      for (long c = 0; c < u.target_mel.frames.cols(); ++c)
        result.stats.mel_mean[c] += u.target_mel.frames.at(t, c);
    result.total_frames += u.target_mel.frames.rows();
  }
  if (result.total_frames > 0)
    for (long c = 0; c < result.stats.mel_mean.size(); ++c)
      result.stats.mel_mean[c] /= static_cast<double>(result.total_frames);
  num::save_tensors((prepared / "stats.ntck").string(),
                    {{"mel_mean", &result.stats.mel_mean}});
  return result;
}

PreparedCorpus load_prepared(const std::string& dir) {
  fs::path root(dir);
  std::ifstream index(root / "index.txt");
  if (!index)
    throw DataError("prepared corpus: " + dir + " has no index.txt (run prepare first)");
  PreparedCorpus out;
  std::string line;
  long lineno = 0;
  while (std::getline(index, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError((root / "index.txt").string(), lineno, "expected '<id>\\t<path>'");
    out.utterances.push_back(load_utterance((root / line.substr(tab + 1)).string()));
  }
  if (out.utterances.empty())
    throw DataError("prepared corpus: " + dir + " holds no accepted utterances");
  auto stats = num::load_tensors((root / "stats.ntck").string());
  auto it = stats.find("mel_mean");
  if (it == stats.end())
    throw DataError("prepared corpus: stats.ntck in " + dir + " lacks mel_mean");
  out.stats.mel_mean = it->second;
  return out;
}

namespace {

struct PhonePlan {
  std::string label; // TextGrid label, stress digit included
  long hops = 0;
  double tone_hz = 0.0; // 0 for noise or silence
  bool silence = false;
};

double vowel_hz(const std::string& v) {
  if (v == "AA") return 140.0;
  if (v == "IY") return 210.0;
  if (v == "OW") return 170.0;
  return 190.0; // EY
}

constexpr const char* kDictText =
    "BA  B AA1\n"
    "BEE  B IY1\n"
    "KAY  K EY1\n"
    "KO  K OW1\n"
    "MAY  M EY1\n"
    "MO  M OW1\n"
    "TA  T AA1\n"
    "TEE  T IY1\n";

constexpr const char* kWords[8] = {"BA", "BEE", "KAY", "KO", "MAY", "MO", "TA", "TEE"};

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("synthetic corpus: cannot open " + path.string() + " for writing");
  os << text;
}

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10f", s);
  return buf;
}

std::string textgrid_text(const std::vector<PhonePlan>& plan, double hop_seconds) {
  double total = 0.0;
  for (const auto& p : plan) total += static_cast<double>(p.hops) * hop_seconds;
  std::ostringstream os;
  os << "File type = \"ooTextFile\"\n";
  os << "Object class = \"TextGrid\"\n\n";
  os << "xmin = 0\nxmax = " << format_seconds(total) << "\n";
  os << "tiers? <exists>\nsize = 1\nitem []:\n";
  os << "    item [1]:\n";
  os << "        class = \"IntervalTier\"\n";
  os << "        name = \"phones\"\n";
  os << "        xmin = 0\n";
  os << "        xmax = " << format_seconds(total) << "\n";
  os << "        intervals: size = " << plan.size() << "\n";
  double t = 0.0;
  for (size_t i = 0; i < plan.size(); ++i) {
    double next = t + static_cast<double>(plan[i].hops) * hop_seconds;
    os << "        intervals [" << (i + 1) << "]:\n";
    os << "            xmin = " << format_seconds(t) << "\n";
    os << "            xmax = " << format_seconds(next) << "\n";
    os << "            text = \"" << (plan[i].silence ? "sil" : plan[i].label) << "\"\n";
    t = next;
  }
  return os.str();
}

} // namespace

std::string generate_synthetic_corpus(const std::string& dir, std::uint64_t seed,
                                      long utterance_count) {
  if (utterance_count < 1)
    throw ConfigError("synthetic corpus: utterance count must be positive");
  fs::path root(dir);
  fs::create_directories(root / "wav");
  fs::create_directories(root / "align");
  fs::create_directories(root / "face");

  write_text_file(root / "mini.dict", kDictText);
  flame::FlameAsset asset = flame::make_synthetic_asset();
  flame::save_flame_asset((root / "face_asset.ntfa").string(), asset);

  dsp::AudioConfig audio; // library defaults; the emitted config repeats them
  const double hop_sec = audio.hop_seconds();
  const double sr = static_cast<double>(audio.sample_rate);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  Lcg rng(seed);
  std::ostringstream manifest;
  for (long ui = 0; ui < utterance_count; ++ui) {
    char id[32];
    std::snprintf(id, sizeof(id), "utt_%03ld", ui);

    long word_count = 1 + rng.next_below(3);
    std::vector<std::string> words;
    for (long wi = 0; wi < word_count; ++wi) words.push_back(kWords[rng.next_below(8)]);

    std::vector<PhonePlan> plan;
    plan.push_back({"sil", 12, 0.0, true});
    for (const auto& w : words) {
      std::string consonant(1, w[0]);
      std::string vowel = w == "BA" || w == "TA"    ? "AA"
                          : w == "BEE" || w == "TEE" ? "IY"
                          : w == "KO" || w == "MO"   ? "OW"
                                                     : "EY";
      plan.push_back({consonant, 5 + rng.next_below(3), 0.0, false});
      plan.push_back({vowel + "1", 10 + rng.next_below(6), vowel_hz(vowel), false});
    }
    plan.push_back({"sil", 12, 0.0, true});

    long total_hops = 0;
    for (const auto& p : plan) total_hops += p.hops;
    const long total_samples = total_hops * audio.hop_length;

    dsp::Waveform w;
    w.sample_rate = audio.sample_rate;
    w.samples.assign(total_samples, 0.0);
    const double fade = 0.003 * sr;
    long s0 = 0;
    for (const auto& p : plan) {
      long len = p.hops * audio.hop_length;
      if (!p.silence) {
        for (long t = s0; t < s0 + len; ++t) {
          double into = static_cast<double>(t - s0) + 1.0;
          double left = static_cast<double>(s0 + len - t);
          double env = std::min({1.0, into / fade, left / fade});
          double ts = static_cast<double>(t) / sr;
          double x;
          if (p.tone_hz > 0.0) {
            x = 0.35 * std::sin(kTwoPi * p.tone_hz * ts) +
                0.08 * std::sin(kTwoPi * 2.0 * p.tone_hz * ts + 0.7);
          } else {
            x = 0.1 * (2.0 * rng.next_double() - 1.0);
          }
          w.samples[t] = env * x;
        }
      }
      s0 += len;
    }
    dsp::write_wav((root / "wav" / (std::string(id) + ".wav")).string(), w);

    fs::path tg_path = root / "align" / (std::string(id) + ".TextGrid");
    write_text_file(tg_path, textgrid_text(plan, hop_sec));

    // Quantizing the track as parsed back from disk keeps the face spans
    // bit-identical to what feature extraction will compute from this file.
    text::AlignmentTrack track = text::parse_textgrid(tg_path.string(), "phones");
    const long t_mel = audio.frame_count(total_samples);
    text::FrameDurations fd = text::quantize_durations(track, hop_sec, t_mel);
    flame::FlameFrameSequence face;
    face.identity_beta = Tensor({asset.identity_count});
    face.frames = Tensor({t_mel, flame::kFlameChannels});
    long start = 0;
    for (size_t pi = 0; pi < plan.size(); ++pi) {
      long len = fd.frames_per_phoneme[pi];
      for (long t = start; t < start + len; ++t) {
        if (plan[pi].tone_hz > 0.0) {
          double pos = (static_cast<double>(t - start) + 0.5) / static_cast<double>(len);
          face.frames.at(t, 0) = 0.18 * 0.5 * (1.0 - std::cos(kTwoPi * pos));
        }
        double time = static_cast<double>(t) * hop_sec;
        for (long e = 0; e < flame::kExpressionChannels; ++e) {
          double freq = 0.5 + 0.13 * static_cast<double>(e % 7);
          double phase = 0.37 * static_cast<double>(e) + 0.11 * static_cast<double>(ui);
          double amp = 0.1 / (1.0 + 0.15 * static_cast<double>(e));
          face.frames.at(t, flame::kJawChannels + e) =
              amp * std::sin(kTwoPi * freq * time + phase);
        }
      }
      start += len;
    }
    flame::save_flame_frames((root / "face" / (std::string(id) + ".ntff")).string(), face);

    std::string transcript;
    for (const auto& word : words) {
      if (!transcript.empty()) transcript += ' ';
      for (char c : word) transcript += static_cast<char>(c - 'A' + 'a');
    }
    manifest << "{\"id\": \"" << id << "\", \"wav\": \"wav/" << id
             << ".wav\", \"textgrid\": \"align/" << id << ".TextGrid\", \"flame\": \"face/"
             << id << ".ntff\", \"transcript\": \"" << transcript << "\"}\n";
  }
  write_text_file(root / "manifest.jsonl", manifest.str());

  cfg::RunConfig config;
  config.model.hidden_dim = 64;
  config.model.ffn_dim = 128;
  config.training.learning_rate = 3e-3;
  config.training.batch_size = 2;
  config.training.iterations = 500;
  config.training.checkpoint_every = 250;
  config.training.log_every = 10;
  config.training.seed = seed;
  config.paths.lexicon = fs::absolute(root / "mini.dict").string();
  config.paths.flame_asset = fs::absolute(root / "face_asset.ntfa").string();
  config.paths.corpus_manifest = fs::absolute(root / "manifest.jsonl").string();
  config.paths.output_dir = fs::absolute(root / "run").string();
  config.validate();
  std::string config_path = (root / "config.txt").string();
  write_text_file(config_path, config.to_map().serialize());
  return config_path;
}

} // namespace neutart::corpus
