#include "neutart/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "neutart/errors.hpp"

namespace neutart::cfg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
  return true;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

ConfigMap ConfigMap::parse_text(const std::string& text, const std::string& origin) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin, line_no, "expected 'key = value', got '" + body + "'");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (!valid_key(key))
      throw ParseError(origin, line_no, "invalid config key '" + key + "'");
    if (map.entries_.count(key))
      throw ParseError(origin, line_no, "duplicate config key '" + key + "'");
    map.entries_[key] = value;
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

std::string ConfigMap::serialize() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

long ConfigMap::get_long(const std::string& key, long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second;
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
  return v;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
  return v;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second;
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError("invalid config key '" + key + "'");
  entries_[key] = value;
}

void ConfigMap::set_long(const std::string& key, long v) { set(key, std::to_string(v)); }
void ConfigMap::set_double(const std::string& key, double v) { set(key, format_double(v)); }
void ConfigMap::set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

// ---------------------------------------------------------------------------

namespace {

// Wraps a ConfigMap and remembers which keys were read, so from_map can
// reject typos instead of ignoring them.
struct Reader {
  const ConfigMap& map;
  std::set<std::string> used;

  std::string str(const std::string& k, const std::string& fb) {
    used.insert(k);
    return map.get_string(k, fb);
  }
  long i(const std::string& k, long fb) {
    used.insert(k);
    return map.get_long(k, fb);
  }
  double d(const std::string& k, double fb) {
    used.insert(k);
    return map.get_double(k, fb);
  }
  bool b(const std::string& k, bool fb) {
    used.insert(k);
    return map.get_bool(k, fb);
  }
};

} // namespace

RunConfig RunConfig::from_map(const ConfigMap& map) {
  RunConfig c;
  Reader r{map, {}};

  c.model.encoder_layers = r.i("model.encoder_layers", c.model.encoder_layers);
  c.model.audio_decoder_layers = r.i("model.audio_decoder_layers", c.model.audio_decoder_layers);
  c.model.visual_decoder_layers =
      r.i("model.visual_decoder_layers", c.model.visual_decoder_layers);
  c.model.hidden_dim = r.i("model.hidden_dim", c.model.hidden_dim);
  c.model.attention_heads = r.i("model.attention_heads", c.model.attention_heads);
  c.model.ffn_dim = r.i("model.ffn_dim", c.model.ffn_dim);
  c.model.mel_channels = r.i("model.mel_channels", c.model.mel_channels);
  c.model.flame_channels = r.i("model.flame_channels", c.model.flame_channels);
  c.model.pitch_bins = r.i("model.pitch_bins", c.model.pitch_bins);
  c.model.energy_bins = r.i("model.energy_bins", c.model.energy_bins);
  c.model.dropout = r.d("model.dropout", c.model.dropout);
  c.model.max_sequence_length = r.i("model.max_sequence_length", c.model.max_sequence_length);
  c.model.speaker_count = r.i("model.speaker_count", c.model.speaker_count);
  c.model.pitch_max_hz = r.d("model.pitch_max_hz", c.model.pitch_max_hz);
  c.model.energy_max = r.d("model.energy_max", c.model.energy_max);

  c.audio.sample_rate = r.i("audio.sample_rate", c.audio.sample_rate);
  c.audio.n_fft = r.i("audio.n_fft", c.audio.n_fft);
  c.audio.win_length = r.i("audio.win_length", c.audio.win_length);
  c.audio.hop_length = r.i("audio.hop_length", c.audio.hop_length);
  c.audio.fmin = r.d("audio.fmin", c.audio.fmin);
  c.audio.fmax = r.d("audio.fmax", c.audio.fmax);
  c.audio.log_floor = r.d("audio.log_floor", c.audio.log_floor);
  c.audio.pitch_min_hz = r.d("audio.pitch_min_hz", c.audio.pitch_min_hz);
  c.audio.pitch_max_hz = r.d("audio.pitch_max_hz", c.audio.pitch_max_hz);
  c.audio.voicing_threshold = r.d("audio.voicing_threshold", c.audio.voicing_threshold);
  c.audio.n_mels = c.model.mel_channels;

  c.training.learning_rate = r.d("training.learning_rate", c.training.learning_rate);
  c.training.momentum = r.d("training.momentum", c.training.momentum);
  c.training.batch_size = r.i("training.batch_size", c.training.batch_size);
  c.training.iterations = r.i("training.iterations", c.training.iterations);
  c.training.seed = static_cast<std::uint64_t>(
      r.i("training.seed", static_cast<long>(c.training.seed)));
  c.training.checkpoint_every = r.i("training.checkpoint_every", c.training.checkpoint_every);
  c.training.log_every = r.i("training.log_every", c.training.log_every);

  c.paths.lexicon = r.str("paths.lexicon", c.paths.lexicon);
  c.paths.flame_asset = r.str("paths.flame_asset", c.paths.flame_asset);
  c.paths.corpus_manifest = r.str("paths.corpus_manifest", c.paths.corpus_manifest);
  c.paths.output_dir = r.str("paths.output_dir", c.paths.output_dir);
  c.paths.visemes = r.str("paths.visemes", c.paths.visemes);

  c.losses.use_pitch = r.b("losses.pitch", c.losses.use_pitch);
  c.losses.use_energy = r.b("losses.energy", c.losses.use_energy);
  c.losses.use_duration = r.b("losses.duration", c.losses.use_duration);
  c.losses.use_spectrogram = r.b("losses.spectrogram", c.losses.use_spectrogram);
  c.losses.use_flame = r.b("losses.flame", c.losses.use_flame);
  c.losses.use_grad = r.b("losses.grad", c.losses.use_grad);
  c.losses.use_flow = r.b("losses.flow", c.losses.use_flow);
  c.losses.use_lipread = r.b("losses.lipread", c.losses.use_lipread);
  c.losses.use_expr_reg = r.b("losses.expr_reg", c.losses.use_expr_reg);

  c.prepare_tier = r.str("prepare.tier", c.prepare_tier);
  c.griffin_lim_iterations = r.i("synth.griffin_lim_iterations", c.griffin_lim_iterations);

  for (const auto& [key, value] : map.entries())
    if (!r.used.count(key)) throw ConfigError("unknown config key '" + key + "'");

  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  return from_map(ConfigMap::parse_file(path));
}

ConfigMap RunConfig::to_map() const {
  ConfigMap m;
  m.set_long("model.encoder_layers", model.encoder_layers);
  m.set_long("model.audio_decoder_layers", model.audio_decoder_layers);
  m.set_long("model.visual_decoder_layers", model.visual_decoder_layers);
  m.set_long("model.hidden_dim", model.hidden_dim);
  m.set_long("model.attention_heads", model.attention_heads);
  m.set_long("model.ffn_dim", model.ffn_dim);
  m.set_long("model.mel_channels", model.mel_channels);
  m.set_long("model.flame_channels", model.flame_channels);
  m.set_long("model.pitch_bins", model.pitch_bins);
  m.set_long("model.energy_bins", model.energy_bins);
  m.set_double("model.dropout", model.dropout);
  m.set_long("model.max_sequence_length", model.max_sequence_length);
  m.set_long("model.speaker_count", model.speaker_count);
  m.set_double("model.pitch_max_hz", model.pitch_max_hz);
  m.set_double("model.energy_max", model.energy_max);

  m.set_long("audio.sample_rate", audio.sample_rate);
  m.set_long("audio.n_fft", audio.n_fft);
  m.set_long("audio.win_length", audio.win_length);
  m.set_long("audio.hop_length", audio.hop_length);
  m.set_double("audio.fmin", audio.fmin);
  m.set_double("audio.fmax", audio.fmax);
  m.set_double("audio.log_floor", audio.log_floor);
  m.set_double("audio.pitch_min_hz", audio.pitch_min_hz);
  m.set_double("audio.pitch_max_hz", audio.pitch_max_hz);
  m.set_double("audio.voicing_threshold", audio.voicing_threshold);

  m.set_double("training.learning_rate", training.learning_rate);
  m.set_double("training.momentum", training.momentum);
  m.set_long("training.batch_size", training.batch_size);
  m.set_long("training.iterations", training.iterations);
  m.set_long("training.seed", static_cast<long>(training.seed));
  m.set_long("training.checkpoint_every", training.checkpoint_every);
  m.set_long("training.log_every", training.log_every);

  m.set("paths.lexicon", paths.lexicon);
  m.set("paths.flame_asset", paths.flame_asset);
  m.set("paths.corpus_manifest", paths.corpus_manifest);
  m.set("paths.output_dir", paths.output_dir);
  m.set("paths.visemes", paths.visemes);

  m.set_bool("losses.pitch", losses.use_pitch);
  m.set_bool("losses.energy", losses.use_energy);
  m.set_bool("losses.duration", losses.use_duration);
  m.set_bool("losses.spectrogram", losses.use_spectrogram);
  m.set_bool("losses.flame", losses.use_flame);
  m.set_bool("losses.grad", losses.use_grad);
  m.set_bool("losses.flow", losses.use_flow);
  m.set_bool("losses.lipread", losses.use_lipread);
  m.set_bool("losses.expr_reg", losses.use_expr_reg);

  m.set("prepare.tier", prepare_tier);
  m.set_long("synth.griffin_lim_iterations", griffin_lim_iterations);
  return m;
}

void RunConfig::validate() const {
  model.validate();
  loss::validate_loss_flags(losses);
  if (audio.sample_rate < 1) throw ConfigError("audio.sample_rate must be positive");
  if (audio.n_fft < 2 || (audio.n_fft & (audio.n_fft - 1)) != 0)
    throw ConfigError("audio.n_fft must be a power of two, got " + std::to_string(audio.n_fft));
  if (audio.win_length < 1 || audio.win_length > audio.n_fft)
    throw ConfigError("audio.win_length must lie in [1, n_fft]");
  if (audio.hop_length < 1 || audio.hop_length > audio.win_length)
    throw ConfigError("audio.hop_length must lie in [1, win_length]");
  if (audio.fmax <= audio.fmin || audio.fmax > audio.sample_rate / 2.0)
    throw ConfigError("audio mel range [" + std::to_string(audio.fmin) + ", " +
                      std::to_string(audio.fmax) + ") is not inside (fmin, sample_rate/2]");
  if (audio.log_floor <= 0.0) throw ConfigError("audio.log_floor must be positive");
  if (training.learning_rate <= 0.0) throw ConfigError("training.learning_rate must be positive");
  if (training.momentum < 0.0 || training.momentum >= 1.0)
    throw ConfigError("training.momentum must lie in [0, 1)");
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (training.iterations < 1) throw ConfigError("training.iterations must be >= 1");
  if (training.checkpoint_every < 1) throw ConfigError("training.checkpoint_every must be >= 1");
  if (training.log_every < 1) throw ConfigError("training.log_every must be >= 1");
  if (griffin_lim_iterations < 0) throw ConfigError("synth.griffin_lim_iterations must be >= 0");
  if (prepare_tier.empty()) throw ConfigError("prepare.tier must name an alignment tier");
}

std::string resolve_path(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  const char* root = std::getenv("NEUTART_DATA_DIR");
  if (root == nullptr || *root == '\0') return path;
  std::string base(root);
  if (base.back() != '/') base += '/';
  return base + path;
}

std::string sibling_path(const std::string& anchor_file, const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  size_t slash = anchor_file.find_last_of('/');
  if (slash == std::string::npos) return path;
  return anchor_file.substr(0, slash + 1) + path;
}

} // namespace neutart::cfg
