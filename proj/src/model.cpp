#include "neutart/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "neutart/checkpoint.hpp"
#include "neutart/errors.hpp"
#include "neutart/lip_features.hpp"

namespace neutart::model {

namespace {

void require_positive(long v, const char* what) {
  if (v < 1) throw ConfigError(std::string(what) + " must be >= 1, got " + std::to_string(v));
}

// Interleaved sinusoidal positions: column 2i is sin(t / 10000^(2i/D)),
// column 2i+1 the matching cosine.
num::Tensor position_encoding(long length, long dim) {
  num::Tensor pe({length, dim});
  for (long t = 0; t < length; ++t) {
    for (long i = 0; i < dim; i += 2) {
      double angle = static_cast<double>(t) *
                     std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe.at(t, i) = std::sin(angle);
      if (i + 1 < dim) pe.at(t, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

num::Tensor log1p_tensor(const num::Tensor& t) {
  num::Tensor out = t;
  for (long i = 0; i < out.size(); ++i) out[i] = std::log1p(out[i]);
  return out;
}

} // namespace

void ModelConfig::validate() const {
  require_positive(encoder_layers, "encoder_layers");
  require_positive(audio_decoder_layers, "audio_decoder_layers");
  require_positive(visual_decoder_layers, "visual_decoder_layers");
  require_positive(hidden_dim, "hidden_dim");
  require_positive(attention_heads, "attention_heads");
  require_positive(ffn_dim, "ffn_dim");
  require_positive(mel_channels, "mel_channels");
  require_positive(pitch_bins, "pitch_bins");
  require_positive(energy_bins, "energy_bins");
  require_positive(max_sequence_length, "max_sequence_length");
  require_positive(speaker_count, "speaker_count");
  if (flame_channels < flame::kJawChannels + 1)
    throw ConfigError("flame_channels must cover jaw pose plus expression, got " +
                      std::to_string(flame_channels));
  if (hidden_dim % attention_heads != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " not divisible by attention_heads " + std::to_string(attention_heads));
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(dropout));
  if (pitch_max_hz <= 0.0) throw ConfigError("pitch_max_hz must be positive");
  if (energy_max <= 0.0) throw ConfigError("energy_max must be positive");
}

void AlignedUtterance::validate(const ModelConfig& cfg) const {
  if (phonemes.size() == 0) throw ShapeError("utterance '" + id + "' has no phonemes");
  variance.validate();
  if (variance.count() != phonemes.size())
    throw ShapeError("utterance '" + id + "': " + std::to_string(variance.count()) +
                     " variance entries for " + std::to_string(phonemes.size()) + " phonemes");
  const num::Tensor& mel = target_mel.frames;
  const num::Tensor& fl = target_flame.frames;
  if (mel.ndim() != 2 || mel.cols() != cfg.mel_channels)
    throw ShapeError("utterance '" + id + "': target mel shape " + mel.shape_str() +
                     ", expected T x " + std::to_string(cfg.mel_channels));
  if (fl.ndim() != 2 || fl.cols() != cfg.flame_channels)
    throw ShapeError("utterance '" + id + "': target face shape " + fl.shape_str() +
                     ", expected T x " + std::to_string(cfg.flame_channels));
  long frames = variance.total_frames();
  if (mel.rows() != frames || fl.rows() != frames)
    throw ShapeError("utterance '" + id + "': durations sum to " + std::to_string(frames) +
                     " frames but mel has " + std::to_string(mel.rows()) + " and face has " +
                     std::to_string(fl.rows()));
  if (speaker_id < 0 || speaker_id >= cfg.speaker_count)
    throw DataError("utterance '" + id + "': speaker id " + std::to_string(speaker_id) +
                    " outside [0, " + std::to_string(cfg.speaker_count) + ")");
}

// ---------------------------------------------------------------------------
// ParamStore

num::NodePtr ParamStore::insert(const std::string& name, num::Tensor init) {
  auto it = by_name_.find(name);
  if (it != by_name_.end()) {
    if (!it->second->value.same_shape(init))
      throw ShapeError("parameter '" + name + "' re-declared with shape " + init.shape_str() +
                       ", stored " + it->second->value.shape_str());
    return it->second;
  }
  num::NodePtr node = num::parameter(std::move(init));
  by_name_[name] = node;
  names_.push_back(name);
  nodes_.push_back(node);
  return node;
}

num::NodePtr ParamStore::weight(const std::string& name, long rows, long cols) {
  if (by_name_.count(name)) return insert(name, num::Tensor({rows, cols}));
  double bound = std::sqrt(1.0 / static_cast<double>(rows));
  num::Tensor t({rows, cols});
  for (long i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-bound, bound);
  return insert(name, std::move(t));
}

num::NodePtr ParamStore::embedding(const std::string& name, long rows, long cols) {
  if (by_name_.count(name)) return insert(name, num::Tensor({rows, cols}));
  num::Tensor t({rows, cols});
  for (long i = 0; i < t.size(); ++i) t[i] = rng_.normal(0.0, 0.1);
  return insert(name, std::move(t));
}

num::NodePtr ParamStore::vec(const std::string& name, long n, double fill) {
  return insert(name, num::Tensor::full({n}, fill));
}

num::NodePtr ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

long ParamStore::total_parameters() const {
  long n = 0;
  for (const auto& node : nodes_) n += node->value.size();
  return n;
}

void ParamStore::load_values(const std::map<std::string, num::Tensor>& values) {
  for (const auto& [name, tensor] : values) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw DataError("checkpoint carries unknown parameter '" + name + "'");
    if (!it->second->value.same_shape(tensor))
      throw DataError("checkpoint parameter '" + name + "' has shape " + tensor.shape_str() +
                      ", model expects " + it->second->value.shape_str());
    it->second->value = tensor;
  }
  if (values.size() != by_name_.size())
    for (const auto& name : names_)
      if (!values.count(name)) throw DataError("checkpoint is missing parameter '" + name + "'");
}

// ---------------------------------------------------------------------------
// AvModel

AvModel::AvModel(ModelConfig cfg, long inventory_size, std::uint64_t seed)
    : cfg_(cfg), inventory_(inventory_size), seed_(seed), store_(seed),
      dropout_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  if (inventory_ < 1) throw ConfigError("phoneme inventory must be non-empty");
  stats_.mel_mean = num::Tensor({cfg_.mel_channels});
  build_parameters();
}

void AvModel::set_audio_config(const dsp::AudioConfig& audio) {
  if (audio.n_mels != cfg_.mel_channels)
    throw ConfigError("audio n_mels " + std::to_string(audio.n_mels) +
                      " does not match mel_channels " + std::to_string(cfg_.mel_channels));
  audio_ = audio;
}

void AvModel::set_corpus_stats(CorpusStats stats) {
  if (stats.mel_mean.size() == 0) stats.mel_mean = num::Tensor({cfg_.mel_channels});
  if (stats.mel_mean.size() != cfg_.mel_channels)
    throw ShapeError("mel_mean has " + std::to_string(stats.mel_mean.size()) +
                     " entries, expected " + std::to_string(cfg_.mel_channels));
  stats_ = std::move(stats);
}

void AvModel::build_parameters() {
  long d = cfg_.hidden_dim;
  store_.embedding("embed", inventory_, d);
  store_.embedding("speaker", cfg_.speaker_count, d);

  auto stack = [&](const std::string& prefix, long layers) {
    for (long l = 0; l < layers; ++l) {
      std::string p = prefix + ".l" + std::to_string(l);
      store_.vec(p + ".ln1.g", d, 1.0);
      store_.vec(p + ".ln1.b", d, 0.0);
      store_.weight(p + ".attn.wq", d, d);
      store_.weight(p + ".attn.wk", d, d);
      store_.weight(p + ".attn.wv", d, d);
      store_.weight(p + ".attn.wo", d, d);
      store_.vec(p + ".attn.bo", d, 0.0);
      store_.vec(p + ".ln2.g", d, 1.0);
      store_.vec(p + ".ln2.b", d, 0.0);
      store_.weight(p + ".ffn.w1", d, cfg_.ffn_dim);
      store_.vec(p + ".ffn.b1", cfg_.ffn_dim, 0.0);
      store_.weight(p + ".ffn.w2", cfg_.ffn_dim, d);
      store_.vec(p + ".ffn.b2", d, 0.0);
    }
    store_.vec(prefix + ".ln_out.g", d, 1.0);
    store_.vec(prefix + ".ln_out.b", d, 0.0);
  };
  stack("enc", cfg_.encoder_layers);
  stack("adec", cfg_.audio_decoder_layers);
  stack("vdec", cfg_.visual_decoder_layers);

  long h2 = std::max<long>(d / 2, 1);
  for (const char* head : {"va.dur", "va.pitch", "va.energy"}) {
    std::string p(head);
    store_.weight(p + ".w1", d, h2);
    store_.vec(p + ".b1", h2, 0.0);
    store_.weight(p + ".w2", h2, 1);
    store_.vec(p + ".b2", 1, 0.0);
  }
  store_.embedding("va.pitch_embed", cfg_.pitch_bins, d);
  store_.embedding("va.energy_embed", cfg_.energy_bins, d);

  store_.weight("adec.out.w", d, cfg_.mel_channels);
  store_.vec("adec.out.b", cfg_.mel_channels, 0.0);
  store_.weight("vdec.out.w", d, cfg_.flame_channels);
  store_.vec("vdec.out.b", cfg_.flame_channels, 0.0);
}

num::NodePtr AvModel::maybe_dropout(const num::NodePtr& x, bool training) const {
  if (!training || cfg_.dropout <= 0.0) return x;
  return num::dropout(x, cfg_.dropout, dropout_rng_);
}

num::NodePtr AvModel::transformer_stack(const num::NodePtr& input, const std::string& prefix,
                                        long layers, bool training) const {
  auto P = [&](const std::string& name) { return store_.find(name); };
  long d = cfg_.hidden_dim;
  long heads = cfg_.attention_heads;
  long dh = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  num::NodePtr x = input;
  long n = x->value.rows();
  for (long l = 0; l < layers; ++l) {
    std::string p = prefix + ".l" + std::to_string(l);
    num::NodePtr normed = num::layer_norm(x, P(p + ".ln1.g"), P(p + ".ln1.b"));
    num::NodePtr q = num::matmul(normed, P(p + ".attn.wq"));
    num::NodePtr k = num::matmul(normed, P(p + ".attn.wk"));
    num::NodePtr v = num::matmul(normed, P(p + ".attn.wv"));
    num::NodePtr heads_out;
    for (long h = 0; h < heads; ++h) {
      num::NodePtr qh = num::slice(q, 0, n, h * dh, (h + 1) * dh);
      num::NodePtr kh = num::slice(k, 0, n, h * dh, (h + 1) * dh);
      num::NodePtr vh = num::slice(v, 0, n, h * dh, (h + 1) * dh);
      num::NodePtr att = num::softmax_rows(num::mul(num::matmul(qh, num::transpose(kh)), scale));
      num::NodePtr oh = num::matmul(att, vh);
      heads_out = heads_out ? num::concat(heads_out, oh, 1) : oh;
    }
    num::NodePtr attn = num::add_row_bias(num::matmul(heads_out, P(p + ".attn.wo")),
                                          P(p + ".attn.bo"));
    x = num::add(x, maybe_dropout(attn, training));

    num::NodePtr normed2 = num::layer_norm(x, P(p + ".ln2.g"), P(p + ".ln2.b"));
    num::NodePtr hidden = num::relu(num::add_row_bias(num::matmul(normed2, P(p + ".ffn.w1")),
                                                      P(p + ".ffn.b1")));
    num::NodePtr ffn = num::add_row_bias(num::matmul(hidden, P(p + ".ffn.w2")),
                                         P(p + ".ffn.b2"));
    x = num::add(x, maybe_dropout(ffn, training));
  }
  return num::layer_norm(x, P(prefix + ".ln_out.g"), P(prefix + ".ln_out.b"));
}

num::NodePtr AvModel::encode(const std::vector<long>& phoneme_ids, long speaker_id,
                             bool training) const {
  long n = static_cast<long>(phoneme_ids.size());
  if (n == 0) throw ShapeError("empty phoneme sequence");
  if (n > cfg_.max_sequence_length)
    throw DataError("sequence of " + std::to_string(n) + " phonemes exceeds maximum " +
                    std::to_string(cfg_.max_sequence_length));
  for (long id : phoneme_ids)
    if (id < 0 || id >= inventory_)
      throw DataError("phoneme index " + std::to_string(id) + " outside inventory of " +
                      std::to_string(inventory_));
  if (speaker_id < 0 || speaker_id >= cfg_.speaker_count)
    throw DataError("speaker id " + std::to_string(speaker_id) + " outside [0, " +
                    std::to_string(cfg_.speaker_count) + ")");

  num::NodePtr x = num::embedding_lookup(store_.find("embed"), phoneme_ids);
  x = num::add(x, num::constant(position_encoding(n, cfg_.hidden_dim)));
  num::NodePtr spk = num::reshape(
      num::embedding_lookup(store_.find("speaker"), {speaker_id}), {cfg_.hidden_dim});
  x = num::add_row_bias(x, spk);
  x = maybe_dropout(x, training);
  return transformer_stack(x, "enc", cfg_.encoder_layers, training);
}

num::NodePtr AvModel::length_regulate(const num::NodePtr& hidden,
                                      const std::vector<long>& durations) {
  if (hidden->value.ndim() != 2)
    throw ShapeError("length_regulate expects N x D hidden, got " + hidden->value.shape_str());
  long n = hidden->value.rows();
  if (static_cast<long>(durations.size()) != n)
    throw ShapeError("length_regulate got " + std::to_string(durations.size()) +
                     " durations for " + std::to_string(n) + " rows");
  std::vector<long> frame_ids;
  for (long i = 0; i < n; ++i) {
    long d = durations[static_cast<size_t>(i)];
    if (d < 0) throw DataError("negative duration " + std::to_string(d) + " at phoneme " +
                               std::to_string(i));
    frame_ids.insert(frame_ids.end(), static_cast<size_t>(d), i);
  }
  if (frame_ids.empty())
    return num::constant(num::Tensor({0, hidden->value.cols()}));
  return num::embedding_lookup(hidden, frame_ids);
}

num::NodePtr AvModel::predictor_head(const num::NodePtr& hidden, const std::string& prefix,
                                     bool training) const {
  num::NodePtr h = num::relu(num::add_row_bias(num::matmul(hidden, store_.find(prefix + ".w1")),
                                               store_.find(prefix + ".b1")));
  h = maybe_dropout(h, training);
  num::NodePtr out = num::add_row_bias(num::matmul(h, store_.find(prefix + ".w2")),
                                       store_.find(prefix + ".b2"));
  return num::reshape(out, {hidden->value.rows()});
}

long AvModel::quantize_bin(double v, double hi, long bins) {
  if (!(v > 0.0)) return 0;
  if (v >= hi) return bins - 1;
  double width = hi / static_cast<double>(bins);
  long idx = static_cast<long>(std::ceil(v / width)) - 1;
  return std::clamp<long>(idx, 0, bins - 1);
}

VarianceOutcome AvModel::variance_adaptor(const num::NodePtr& hidden,
                                          const VarianceTargets* targets,
                                          bool training) const {
  if (training && targets == nullptr)
    throw ConfigError("variance adaptor needs targets in training mode (teacher forcing)");
  long n = hidden->value.rows();
  if (targets) {
    targets->validate();
    if (targets->count() != n)
      throw ShapeError("variance targets cover " + std::to_string(targets->count()) +
                       " phonemes, hidden has " + std::to_string(n) + " rows");
  }

  VarianceOutcome out;
  out.log_duration = predictor_head(hidden, "va.dur", training);
  out.pitch = predictor_head(hidden, "va.pitch", training);
  out.energy = predictor_head(hidden, "va.energy", training);

  out.predicted.pitch = num::Tensor({n});
  out.predicted.energy = num::Tensor({n});
  out.predicted.durations.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    out.predicted.pitch[i] = std::max(0.0, std::expm1(out.pitch->value[i]));
    out.predicted.energy[i] = std::max(0.0, std::expm1(out.energy->value[i]));
    long frames = std::lround(std::expm1(out.log_duration->value[i]));
    out.predicted.durations[static_cast<size_t>(i)] = std::max<long>(frames, 0);
  }

  // Embedding ids come from target values under teacher forcing and from the
  // heads' own predictions otherwise; either way the lookup is not
  // differentiated through the quantizer. Both bin axes live in the heads'
  // log1p domain.
  double pitch_hi = std::log1p(cfg_.pitch_max_hz);
  double energy_hi = std::log1p(cfg_.energy_max);
  std::vector<long> pitch_ids(static_cast<size_t>(n));
  std::vector<long> energy_ids(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    double pv = targets ? std::log1p(targets->pitch[i]) : out.pitch->value[i];
    double ev = targets ? std::log1p(targets->energy[i]) : out.energy->value[i];
    pitch_ids[static_cast<size_t>(i)] = quantize_bin(pv, pitch_hi, cfg_.pitch_bins);
    energy_ids[static_cast<size_t>(i)] = quantize_bin(ev, energy_hi, cfg_.energy_bins);
  }
  num::NodePtr enriched = num::add(hidden,
      num::embedding_lookup(store_.find("va.pitch_embed"), pitch_ids));
  enriched = num::add(enriched,
      num::embedding_lookup(store_.find("va.energy_embed"), energy_ids));

  const std::vector<long>& expand =
      targets ? targets->durations : out.predicted.durations;
  if (!targets) {
    long total = 0;
    for (long d : expand) total += d;
    if (total == 0) throw NumericError("degenerate zero-length output");
  }
  out.frame_hidden = length_regulate(enriched, expand);
  return out;
}

num::NodePtr AvModel::decode_audio(const num::NodePtr& frame_hidden, bool training) const {
  long t = frame_hidden->value.rows();
  if (t < 1) throw ShapeError("audio decoder got an empty frame sequence");
  num::NodePtr x = num::add(frame_hidden,
                            num::constant(position_encoding(t, cfg_.hidden_dim)));
  x = maybe_dropout(x, training);
  x = transformer_stack(x, "adec", cfg_.audio_decoder_layers, training);
  num::NodePtr mel = num::add_row_bias(num::matmul(x, store_.find("adec.out.w")),
                                       store_.find("adec.out.b"));
  return num::add_row_bias(mel, num::constant(stats_.mel_mean));
}

num::NodePtr AvModel::decode_visual(const num::NodePtr& frame_hidden, bool training) const {
  long t = frame_hidden->value.rows();
  if (t < 1) throw ShapeError("visual decoder got an empty frame sequence");
  num::NodePtr x = num::add(frame_hidden,
                            num::constant(position_encoding(t, cfg_.hidden_dim)));
  x = maybe_dropout(x, training);
  x = transformer_stack(x, "vdec", cfg_.visual_decoder_layers, training);
  return num::add_row_bias(num::matmul(x, store_.find("vdec.out.w")),
                           store_.find("vdec.out.b"));
}

ForwardResult AvModel::forward(const std::vector<long>& phoneme_ids, long speaker_id,
                               const VarianceTargets* targets, bool training) const {
  ForwardResult r;
  num::NodePtr hidden = encode(phoneme_ids, speaker_id, training);
  r.variance = variance_adaptor(hidden, targets, training);
  r.frame_hidden = r.variance.frame_hidden;
  r.mel = decode_audio(r.frame_hidden, training);
  r.flame = decode_visual(r.frame_hidden, training);
  return r;
}

AvOutput AvModel::synthesize(const std::string& raw_text, const text::PronunciationLexicon& lex,
                             long speaker_id) const {
  text::PhonemeSequence seq = text::phonemize(raw_text, lex);
  ForwardResult r = forward(seq.indices, speaker_id, nullptr, false);

  AvOutput out;
  out.mel.frames = r.mel->value;
  out.mel.sample_rate = audio_.sample_rate;
  out.mel.n_fft = audio_.n_fft;
  out.mel.hop_length = audio_.hop_length;
  out.mel.win_length = audio_.win_length;
  out.mel.fmin = audio_.fmin;
  out.mel.fmax = audio_.fmax;
  out.flame.frames = r.flame->value;
  out.predicted_variances = r.variance.predicted;
  return out;
}

num::NodePtr AvModel::training_loss(const std::vector<AlignedUtterance>& batch,
                                    const TrainOptions& opt,
                                    loss::LossBreakdown* breakdown) const {
  if (batch.empty()) throw ConfigError("training batch is empty");
  loss::validate_loss_flags(opt.flags);
  if (opt.flags.use_lipread && opt.lip_asset == nullptr)
    throw ConfigError("lipreading loss needs a face asset");
  for (const AlignedUtterance& u : batch) u.validate(cfg_);

  long b = static_cast<long>(batch.size());
  std::vector<num::NodePtr> pitch_terms, energy_terms, duration_terms, spect_terms,
      flame_terms, grad_terms, flow_terms, lip_terms, reg_terms;
  for (const AlignedUtterance& u : batch) {
    ForwardResult r = forward(u.phonemes.indices, u.speaker_id, &u.variance, true);

    VarianceTargets loss_target;
    loss_target.pitch = log1p_tensor(u.variance.pitch);
    loss_target.energy = log1p_tensor(u.variance.energy);
    loss_target.durations = u.variance.durations;
    loss::VarianceLossNodes vl = loss::variance_losses(r.variance.pitch, r.variance.energy,
                                                       r.variance.log_duration, loss_target);
    if (opt.flags.use_pitch) pitch_terms.push_back(vl.pitch);
    if (opt.flags.use_energy) energy_terms.push_back(vl.energy);
    if (opt.flags.use_duration) duration_terms.push_back(vl.duration);

    num::NodePtr mel_target = num::constant(u.target_mel.frames);
    num::NodePtr flame_target = num::constant(u.target_flame.frames);
    if (opt.flags.use_spectrogram)
      spect_terms.push_back(loss::spectrogram_loss(r.mel, mel_target));
    if (opt.flags.use_flame) flame_terms.push_back(loss::flame_mse(r.flame, flame_target));
    if (opt.flags.use_grad) grad_terms.push_back(loss::gradient_loss(r.flame));
    if (opt.flags.use_flow) flow_terms.push_back(loss::flow_loss(r.flame, flame_target));
    if (opt.flags.use_lipread) {
      loss::LandmarkMotionExtractor extractor(*opt.lip_asset, u.target_flame.identity_beta);
      lip_terms.push_back(loss::lipreading_loss(r.flame, flame_target, extractor).value);
    }
    if (opt.flags.use_expr_reg) {
      long t = r.flame->value.rows();
      reg_terms.push_back(loss::expression_reg(
          num::slice(r.flame, 0, t, flame::kJawChannels, cfg_.flame_channels)));
    }
  }

  auto batch_mean = [b](const std::vector<num::NodePtr>& terms) -> num::NodePtr {
    if (terms.empty()) return nullptr;
    num::NodePtr acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = num::add(acc, terms[i]);
    return num::div(acc, static_cast<double>(b));
  };

  loss::LossGraph graph;
  graph.pitch = batch_mean(pitch_terms);
  graph.energy = batch_mean(energy_terms);
  graph.duration = batch_mean(duration_terms);
  graph.spectrogram = batch_mean(spect_terms);
  graph.flame = batch_mean(flame_terms);
  graph.grad = batch_mean(grad_terms);
  graph.flow = batch_mean(flow_terms);
  graph.lipread = batch_mean(lip_terms);
  graph.expr_reg = batch_mean(reg_terms);

  return loss::total_loss(graph, breakdown);
}

double AvModel::train_step(const std::vector<AlignedUtterance>& batch, const TrainOptions& opt,
                           loss::LossBreakdown* breakdown) {
  num::NodePtr total = training_loss(batch, opt, breakdown);
  num::zero_grad(store_.nodes());
  num::backward(total);

  const std::vector<std::string>& names = store_.names();
  const std::vector<num::NodePtr>& params = store_.nodes();
  for (size_t i = 0; i < params.size(); ++i) {
    num::Node& p = *params[i];
    if (!p.has_grad()) continue;
    num::Tensor& vel = velocity_[names[i]];
    if (vel.size() != p.value.size()) vel = num::Tensor(p.value.shape());
    for (long j = 0; j < p.value.size(); ++j) {
      vel[j] = opt.momentum * vel[j] + p.grad[j];
      p.value[j] -= opt.learning_rate * vel[j];
    }
  }
  ++opt_step_;
  return total->scalar_value();
}

// ---------------------------------------------------------------------------
// Checkpointing

namespace {

double get_scalar(const std::map<std::string, num::Tensor>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError("checkpoint is missing '" + key + "'");
  if (it->second.size() != 1)
    throw DataError("checkpoint entry '" + key + "' is not a scalar");
  return it->second[0];
}

long get_long(const std::map<std::string, num::Tensor>& m, const std::string& key) {
  return static_cast<long>(get_scalar(m, key));
}

} // namespace

void AvModel::save_checkpoint(const std::string& path) const {
  std::vector<std::pair<std::string, const num::Tensor*>> named;
  std::vector<num::Tensor> scratch;
  scratch.reserve(64 + 2 * store_.names().size());
  auto put_scalar = [&](const std::string& key, double v) {
    scratch.push_back(num::Tensor::scalar(v));
    named.emplace_back(key, &scratch.back());
  };

  put_scalar("cfg.encoder_layers", static_cast<double>(cfg_.encoder_layers));
  put_scalar("cfg.audio_decoder_layers", static_cast<double>(cfg_.audio_decoder_layers));
  put_scalar("cfg.visual_decoder_layers", static_cast<double>(cfg_.visual_decoder_layers));
  put_scalar("cfg.hidden_dim", static_cast<double>(cfg_.hidden_dim));
  put_scalar("cfg.attention_heads", static_cast<double>(cfg_.attention_heads));
  put_scalar("cfg.ffn_dim", static_cast<double>(cfg_.ffn_dim));
  put_scalar("cfg.mel_channels", static_cast<double>(cfg_.mel_channels));
  put_scalar("cfg.flame_channels", static_cast<double>(cfg_.flame_channels));
  put_scalar("cfg.pitch_bins", static_cast<double>(cfg_.pitch_bins));
  put_scalar("cfg.energy_bins", static_cast<double>(cfg_.energy_bins));
  put_scalar("cfg.dropout", cfg_.dropout);
  put_scalar("cfg.max_sequence_length", static_cast<double>(cfg_.max_sequence_length));
  put_scalar("cfg.speaker_count", static_cast<double>(cfg_.speaker_count));
  put_scalar("cfg.pitch_max_hz", cfg_.pitch_max_hz);
  put_scalar("cfg.energy_max", cfg_.energy_max);
  put_scalar("meta.inventory", static_cast<double>(inventory_));
  put_scalar("meta.seed", static_cast<double>(seed_));
  put_scalar("opt.step", static_cast<double>(opt_step_));

  put_scalar("audio.sample_rate", static_cast<double>(audio_.sample_rate));
  put_scalar("audio.n_fft", static_cast<double>(audio_.n_fft));
  put_scalar("audio.win_length", static_cast<double>(audio_.win_length));
  put_scalar("audio.hop_length", static_cast<double>(audio_.hop_length));
  put_scalar("audio.fmin", audio_.fmin);
  put_scalar("audio.fmax", audio_.fmax);
  put_scalar("audio.log_floor", audio_.log_floor);
  put_scalar("audio.pitch_min_hz", audio_.pitch_min_hz);
  put_scalar("audio.pitch_max_hz", audio_.pitch_max_hz);
  put_scalar("audio.voicing_threshold", audio_.voicing_threshold);

  named.emplace_back("stat.mel_mean", &stats_.mel_mean);
  const std::vector<std::string>& names = store_.names();
  const std::vector<num::NodePtr>& params = store_.nodes();
  for (size_t i = 0; i < params.size(); ++i)
    named.emplace_back("param." + names[i], &params[i]->value);
  for (const auto& [name, vel] : velocity_)
    named.emplace_back("opt.v." + name, &vel);

  num::save_tensors(path, named);
}

AvModel AvModel::load_checkpoint(const std::string& path) {
  std::map<std::string, num::Tensor> m = num::load_tensors(path);

  ModelConfig cfg;
  cfg.encoder_layers = get_long(m, "cfg.encoder_layers");
  cfg.audio_decoder_layers = get_long(m, "cfg.audio_decoder_layers");
  cfg.visual_decoder_layers = get_long(m, "cfg.visual_decoder_layers");
  cfg.hidden_dim = get_long(m, "cfg.hidden_dim");
  cfg.attention_heads = get_long(m, "cfg.attention_heads");
  cfg.ffn_dim = get_long(m, "cfg.ffn_dim");
  cfg.mel_channels = get_long(m, "cfg.mel_channels");
  cfg.flame_channels = get_long(m, "cfg.flame_channels");
  cfg.pitch_bins = get_long(m, "cfg.pitch_bins");
  cfg.energy_bins = get_long(m, "cfg.energy_bins");
  cfg.dropout = get_scalar(m, "cfg.dropout");
  cfg.max_sequence_length = get_long(m, "cfg.max_sequence_length");
  cfg.speaker_count = get_long(m, "cfg.speaker_count");
  cfg.pitch_max_hz = get_scalar(m, "cfg.pitch_max_hz");
  cfg.energy_max = get_scalar(m, "cfg.energy_max");

  AvModel model(cfg, get_long(m, "meta.inventory"),
                static_cast<std::uint64_t>(get_scalar(m, "meta.seed")));
  model.opt_step_ = get_long(m, "opt.step");

  model.audio_.sample_rate = get_long(m, "audio.sample_rate");
  model.audio_.n_fft = get_long(m, "audio.n_fft");
  model.audio_.win_length = get_long(m, "audio.win_length");
  model.audio_.hop_length = get_long(m, "audio.hop_length");
  model.audio_.n_mels = cfg.mel_channels;
  model.audio_.fmin = get_scalar(m, "audio.fmin");
  model.audio_.fmax = get_scalar(m, "audio.fmax");
  model.audio_.log_floor = get_scalar(m, "audio.log_floor");
  model.audio_.pitch_min_hz = get_scalar(m, "audio.pitch_min_hz");
  model.audio_.pitch_max_hz = get_scalar(m, "audio.pitch_max_hz");
  model.audio_.voicing_threshold = get_scalar(m, "audio.voicing_threshold");

  CorpusStats stats;
  auto it = m.find("stat.mel_mean");
  if (it == m.end()) throw DataError("checkpoint is missing 'stat.mel_mean'");
  stats.mel_mean = it->second;
  model.set_corpus_stats(std::move(stats));

  std::map<std::string, num::Tensor> params;
  for (const auto& [key, tensor] : m) {
    if (key.rfind("param.", 0) == 0) params[key.substr(6)] = tensor;
    else if (key.rfind("opt.v.", 0) == 0) model.velocity_[key.substr(6)] = tensor;
  }
  model.store_.load_values(params);
  for (const auto& [name, vel] : model.velocity_) {
    const num::Tensor& p = model.store_.find(name)->value;
    if (!vel.same_shape(p))
      throw DataError("optimizer state '" + name + "' has shape " + vel.shape_str() +
                      ", parameter has " + p.shape_str());
  }
  return model;
}

} // namespace neutart::model
