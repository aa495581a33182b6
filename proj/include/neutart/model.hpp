#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "neutart/autodiff.hpp"
#include "neutart/dsp.hpp"
#include "neutart/flame.hpp"
#include "neutart/lexicon.hpp"
#include "neutart/losses.hpp"
#include "neutart/rng.hpp"
#include "neutart/tensor.hpp"
#include "neutart/variance.hpp"

namespace neutart::model {

struct ModelConfig {
  long encoder_layers = 4;
  long audio_decoder_layers = 6;
  long visual_decoder_layers = 4;
  long hidden_dim = 256;
  long attention_heads = 2;
  long ffn_dim = 1024;
  long mel_channels = 80;
  long flame_channels = 53;
  long pitch_bins = 32;
  long energy_bins = 32;
  double dropout = 0.0;
  long max_sequence_length = 2000;
  long speaker_count = 1;
  // Quantization ranges. Both bin axes are uniform in the log1p domain, so
  // the unvoiced pitch value 0 lands in bin 0 and silence maps to energy bin 0.
  double pitch_max_hz = 500.0;
  double energy_max = 100.0;

  void validate() const; // throws ConfigError
};

// Non-trainable output statistics measured on the training corpus. The mel
// head adds mel_mean to every frame so an untrained decoder already sits in
// the right log-power regime instead of at zero.
struct CorpusStats {
  num::Tensor mel_mean; // [mel_channels], defaults to zeros
};

// One training example. The duration track inside `variance` is the single
// source of truth for frame alignment.
struct AlignedUtterance {
  std::string id;
  text::PhonemeSequence phonemes;
  VarianceTargets variance;
  dsp::MelSpectrogram target_mel;       // T x mel_channels
  flame::FlameFrameSequence target_flame; // T x flame_channels
  long speaker_id = 0;

  void validate(const ModelConfig& cfg) const;
};

struct AvOutput {
  dsp::MelSpectrogram mel;
  flame::FlameFrameSequence flame;
  VarianceTargets predicted_variances; // pitch in Hz, durations in frames
};

// Named parameter leaves with seeded deterministic init. Creation order is
// fixed by the model constructor, so equal seeds give bit-equal parameters.
class ParamStore {
public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  // Matrix init: uniform in +-sqrt(1/rows). Repeated calls under one name
  // return the cached node; the shape must match.
  num::NodePtr weight(const std::string& name, long rows, long cols);
  // Embedding-table init: normal(0, 0.1).
  num::NodePtr embedding(const std::string& name, long rows, long cols);
  // Constant-fill vector (biases use 0, layer-norm gains use 1).
  num::NodePtr vec(const std::string& name, long n, double fill);

  num::NodePtr find(const std::string& name) const; // throws DataError
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<num::NodePtr>& nodes() const { return nodes_; }
  long total_parameters() const;
  // Overwrites parameter values in place (checkpoint restore). Every name
  // must exist and match shape.
  void load_values(const std::map<std::string, num::Tensor>& values);

private:
  num::NodePtr insert(const std::string& name, num::Tensor init);

  Lcg rng_;
  std::map<std::string, num::NodePtr> by_name_;
  std::vector<std::string> names_;
  std::vector<num::NodePtr> nodes_;
};

struct TrainOptions {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  loss::LossFlags flags;
  // Face asset for the lipreading term; required when flags.use_lipread.
  const flame::FlameAsset* lip_asset = nullptr;
};

// Prediction heads and the expanded frame sequence from one adaptor pass.
// pitch, energy, and log_duration live in the log1p domain; `predicted` is
// decoded back to plain units (Hz, level, frames).
struct VarianceOutcome {
  num::NodePtr frame_hidden; // T x hidden_dim
  num::NodePtr pitch;        // [N]
  num::NodePtr energy;       // [N]
  num::NodePtr log_duration; // [N]
  VarianceTargets predicted;
};

struct ForwardResult {
  num::NodePtr frame_hidden; // the one node both decoders consume
  num::NodePtr mel;          // T x mel_channels
  num::NodePtr flame;        // T x flame_channels
  VarianceOutcome variance;
};

// Joint text-to-audiovisual network: phoneme encoder, variance adaptor with
// length regulation, mel decoder and face-coefficient decoder sharing one
// frame-level representation.
class AvModel {
public:
  AvModel(ModelConfig cfg, long inventory_size, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  long inventory_size() const { return inventory_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  void set_corpus_stats(CorpusStats stats);
  const CorpusStats& corpus_stats() const { return stats_; }

  // Audio framing travels with the model so synthesized mels carry the
  // metadata the vocoder needs. n_mels must equal mel_channels.
  void set_audio_config(const dsp::AudioConfig& audio);
  const dsp::AudioConfig& audio_config() const { return audio_; }

  // Embedding + sinusoidal positions + speaker embedding + encoder stack.
  num::NodePtr encode(const std::vector<long>& phoneme_ids, long speaker_id = 0,
                      bool training = false) const;

  // Row i of `hidden` repeated durations[i] times, order preserved.
  static num::NodePtr length_regulate(const num::NodePtr& hidden,
                                      const std::vector<long>& durations);

  // Teacher forcing: when `targets` is present the expansion uses target
  // durations and the pitch/energy embeddings come from target values;
  // otherwise everything runs off the predictions.
  VarianceOutcome variance_adaptor(const num::NodePtr& hidden,
                                   const VarianceTargets* targets,
                                   bool training = false) const;

  num::NodePtr decode_audio(const num::NodePtr& frame_hidden, bool training = false) const;
  num::NodePtr decode_visual(const num::NodePtr& frame_hidden, bool training = false) const;

  // Full differentiable pass; both decoders consume the same frame_hidden node.
  ForwardResult forward(const std::vector<long>& phoneme_ids, long speaker_id,
                        const VarianceTargets* targets, bool training) const;

  AvOutput synthesize(const std::string& raw_text, const text::PronunciationLexicon& lex,
                      long speaker_id = 0) const;

  // Builds the complete training objective over the batch (componentwise
  // loss mean) without touching parameters; train_step differentiates it.
  num::NodePtr training_loss(const std::vector<AlignedUtterance>& batch, const TrainOptions& opt,
                             loss::LossBreakdown* breakdown = nullptr) const;

  // One optimizer update over the batch. Returns the pre-update total loss.
  double train_step(const std::vector<AlignedUtterance>& batch, const TrainOptions& opt,
                    loss::LossBreakdown* breakdown = nullptr);

  long optimizer_step() const { return opt_step_; }

  void save_checkpoint(const std::string& path) const;
  static AvModel load_checkpoint(const std::string& path);

  // Exposed for the quantization tie-break tests: values exactly on a bin
  // boundary go to the lower bin.
  static long quantize_bin(double v, double hi, long bins);

private:
  void build_parameters();
  num::NodePtr transformer_stack(const num::NodePtr& input, const std::string& prefix,
                                 long layers, bool training) const;
  num::NodePtr predictor_head(const num::NodePtr& hidden, const std::string& prefix,
                              bool training) const;
  num::NodePtr maybe_dropout(const num::NodePtr& x, bool training) const;

  ModelConfig cfg_;
  long inventory_ = 0;
  std::uint64_t seed_ = 0;
  ParamStore store_;
  CorpusStats stats_;
  dsp::AudioConfig audio_;
  mutable Lcg dropout_rng_;

  // SGD-with-momentum state, keyed by parameter name.
  std::map<std::string, num::Tensor> velocity_;
  long opt_step_ = 0;
};

} // namespace neutart::model
