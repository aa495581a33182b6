#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "neutart/audio.hpp"
#include "neutart/checkpoint.hpp"
#include "neutart/config.hpp"
#include "neutart/corpus.hpp"
#include "neutart/dsp.hpp"
#include "neutart/errors.hpp"
#include "neutart/evaluation.hpp"
#include "neutart/flame.hpp"
#include "neutart/lexicon.hpp"
#include "neutart/model.hpp"
#include "neutart/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::string manifest; // prepare: overrides paths.corpus_manifest
  std::string text;     // synth
  std::string utterance_id = "synth";
  bool mesh = false;
  std::string pred_dir; // eval
  std::string ref_dir;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

neutart::cfg::RunConfig load_config(const Options& opt) {
  neutart::cfg::RunConfig config = neutart::cfg::RunConfig::load(opt.config_path);
  if (opt.seed) config.training.seed = *opt.seed;
  if (!opt.out.empty()) config.paths.output_dir = opt.out;
  return config;
}

// ---------------------------------------------------------------- prepare --

int cmd_prepare(const Options& opt) {
  neutart::cfg::RunConfig config = load_config(opt);
  if (!opt.manifest.empty()) config.paths.corpus_manifest = opt.manifest;
  neutart::corpus::PrepareResult result = neutart::corpus::prepare_corpus(config);

  for (const auto& [id, reason] : result.rejects)
    std::cout << "rejected " << id << ": " << reason << "\n";
  fs::path prepared =
      fs::path(neutart::cfg::resolve_path(config.paths.output_dir)) / "prepared";
  std::cout << "prepared " << result.accepted_ids.size() << " utterances ("
            << result.rejects.size() << " rejected, " << result.total_frames
            << " frames) in " << prepared.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------ train --

std::vector<neutart::model::AlignedUtterance> pick_batch(
    const std::vector<neutart::model::AlignedUtterance>& corpus, long batch_size,
    std::uint64_t seed, long step) {
  // Stateless per-step selection, so a resumed run draws the same batches an
  // uninterrupted one would.
  neutart::Lcg rng(seed * 1000003ULL + static_cast<std::uint64_t>(step));
  long n = static_cast<long>(corpus.size());
  long take = std::min(batch_size, n);
  std::vector<long> order(n);
  for (long i = 0; i < n; ++i) order[i] = i;
  for (long i = 0; i < take; ++i) {
    long j = i + rng.next_below(n - i);
    std::swap(order[i], order[j]);
  }
  std::vector<neutart::model::AlignedUtterance> batch;
  batch.reserve(take);
  for (long i = 0; i < take; ++i) batch.push_back(corpus[order[i]]);
  return batch;
}

int cmd_train(const Options& opt) {
  neutart::cfg::RunConfig config = load_config(opt);
  config.validate();
  fs::path out_root = neutart::cfg::resolve_path(config.paths.output_dir);
  neutart::corpus::PreparedCorpus corpus =
      neutart::corpus::load_prepared((out_root / "prepared").string());
  neutart::text::PronunciationLexicon lex =
      neutart::text::parse_lexicon(neutart::cfg::resolve_path(config.paths.lexicon));

  neutart::flame::FlameAsset asset;
  neutart::model::TrainOptions train_opt;
  train_opt.learning_rate = config.training.learning_rate;
  train_opt.momentum = config.training.momentum;
  train_opt.flags = config.losses;
  if (config.losses.use_lipread) {
    asset = neutart::flame::load_flame_asset(
        neutart::cfg::resolve_path(config.paths.flame_asset));
    train_opt.lip_asset = &asset;
  }

  std::optional<neutart::model::AvModel> m;
  if (!opt.checkpoint.empty()) {
    m.emplace(neutart::model::AvModel::load_checkpoint(opt.checkpoint));
    if (m->inventory_size() != lex.inventory_size())
      throw neutart::DataError("checkpoint was trained with a " +
                               std::to_string(m->inventory_size()) +
                               "-phoneme inventory, lexicon has " +
                               std::to_string(lex.inventory_size()));
  } else {
    m.emplace(config.model, lex.inventory_size(), config.training.seed);
    m->set_corpus_stats(corpus.stats);
    m->set_audio_config(config.audio);
  }

  long start_step = m->optimizer_step();
  if (start_step >= config.training.iterations) {
    std::cout << "checkpoint is already at step " << start_step << ", nothing to do\n";
    return 0;
  }
  fs::create_directories(out_root);
  fs::path log_path = out_root / "train_log.jsonl";
  std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw neutart::DataError("cannot open " + log_path.string() + " for writing");

  auto save_at = [&](long step) {
    std::string tag = "checkpoint_" + std::to_string(step) + ".ntck";
    m->save_checkpoint((out_root / tag).string());
    m->save_checkpoint((out_root / "checkpoint_latest.ntck").string());
  };

  for (long step = start_step + 1; step <= config.training.iterations; ++step) {
    auto batch = pick_batch(corpus.utterances, config.training.batch_size,
                            config.training.seed, step);
    neutart::loss::LossBreakdown bd;
    try {
      m->train_step(batch, train_opt, &bd);
    } catch (const neutart::NumericError& e) {
      std::cerr << "training aborted at step " << step << ": " << e.what()
                << " (last checkpoint retained)\n";
      throw;
    }
    bool log_now = step == 1 || step == config.training.iterations ||
                   step % config.training.log_every == 0;
    if (log_now) {
      log << neutart::loss::breakdown_json(step, bd) << "\n";
      log.flush();
      std::cout << "step " << step << "/" << config.training.iterations << " loss "
                << fmt_double(bd.total) << "\n";
    }
    if (step % config.training.checkpoint_every == 0 ||
        step == config.training.iterations)
      save_at(step);
  }
  std::cout << "finished at step " << config.training.iterations << ", checkpoints in "
            << out_root.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------ synth --

int cmd_synth(const Options& opt) {
  neutart::cfg::RunConfig config = load_config(opt);
  neutart::model::AvModel m = neutart::model::AvModel::load_checkpoint(opt.checkpoint);
  neutart::text::PronunciationLexicon lex =
      neutart::text::parse_lexicon(neutart::cfg::resolve_path(config.paths.lexicon));
  if (m.inventory_size() != lex.inventory_size())
    throw neutart::DataError("checkpoint was trained with a " +
                             std::to_string(m.inventory_size()) +
                             "-phoneme inventory, lexicon has " +
                             std::to_string(lex.inventory_size()));

  neutart::model::AvOutput out = m.synthesize(opt.text, lex);
  std::optional<neutart::flame::FlameAsset> asset;
  if (!config.paths.flame_asset.empty())
    asset = neutart::flame::load_flame_asset(
        neutart::cfg::resolve_path(config.paths.flame_asset));
  if (asset)
    out.flame.identity_beta = neutart::num::Tensor({asset->identity_count});

  fs::path out_dir = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  fs::create_directories(out_dir);
  const std::string& id = opt.utterance_id;

  neutart::dsp::Waveform wav =
      neutart::dsp::griffin_lim(out.mel, config.griffin_lim_iterations);
  neutart::dsp::write_wav((out_dir / (id + ".wav")).string(), wav);
  neutart::flame::save_flame_frames((out_dir / (id + ".ntff")).string(), out.flame);
  neutart::num::save_tensors((out_dir / (id + ".mel.ntck")).string(),
                             {{"mel", &out.mel.frames}});

  neutart::text::PhonemeSequence seq = neutart::text::phonemize(opt.text, lex);
  {
    std::ofstream phones(out_dir / (id + ".phones.txt"));
    for (long i = 0; i < seq.size(); ++i) {
      phones << seq.symbols[i];
      if (seq.stresses[i] >= 0) phones << seq.stresses[i];
      phones << "\n";
    }
  }

  if (opt.mesh) {
    if (!asset)
      throw neutart::ConfigError("mesh dump needs paths.flame_asset in the config");
    fs::path mesh_dir = out_dir / (id + "_meshes");
    fs::create_directories(mesh_dir);
    neutart::num::Tensor frame({out.flame.frames.cols()});
    for (long t = 0; t < out.flame.frames.rows(); ++t) {
      for (long c = 0; c < frame.size(); ++c) frame[c] = out.flame.frames.at(t, c);
      neutart::flame::FaceMesh mesh =
          neutart::flame::decode_mesh(frame, out.flame.identity_beta, *asset);
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05ld.txt", t);
      std::ofstream ms(mesh_dir / name);
      for (long v = 0; v < mesh.vertices.rows(); ++v)
        ms << fmt_double(mesh.vertices.at(v, 0)) << " "
           << fmt_double(mesh.vertices.at(v, 1)) << " "
           << fmt_double(mesh.vertices.at(v, 2)) << "\n";
    }
  }

  long frames = out.mel.frames.rows();
  double seconds = static_cast<double>(frames) *
                   static_cast<double>(out.mel.hop_length) /
                   static_cast<double>(out.mel.sample_rate);
  std::cout << "synthesized " << frames << " frames (" << seconds
            << " s GL-reconstructed audio) into " << out_dir.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- eval --

struct EvalArtifacts {
  std::string id;
  fs::path pred_flame, ref_flame;
  fs::path pred_mel, ref_mel;
  fs::path pred_phones, ref_phones;
};

std::set<std::string> flame_ids(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw neutart::DataError("evaluation: " + dir.string() + " is not a directory");
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".ntff") ids.insert(entry.path().stem().string());
  return ids;
}

fs::path need_artifact(const fs::path& dir, const std::string& name) {
  fs::path p = dir / name;
  if (!fs::exists(p))
    throw neutart::DataError("evaluation: missing artifact " + p.string());
  return p;
}

std::vector<std::string> read_phones(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw neutart::DataError("evaluation: cannot open " + path.string());
  std::vector<std::string> symbols;
  std::string token;
  while (is >> token) symbols.push_back(token);
  if (symbols.empty())
    throw neutart::DataError("evaluation: " + path.string() + " holds no phonemes");
  return symbols;
}

neutart::num::Tensor read_mel(const fs::path& path) {
  auto tensors = neutart::num::load_tensors(path.string());
  auto it = tensors.find("mel");
  if (it == tensors.end())
    throw neutart::DataError("evaluation: " + path.string() + " lacks a mel tensor");
  return it->second;
}

// T x 3L lip landmark trajectory decoded frame by frame.
neutart::num::Tensor landmark_rows(const neutart::flame::FlameFrameSequence& seq,
                                   const neutart::flame::FlameAsset& asset) {
  neutart::num::Tensor beta = seq.identity_beta.size() == asset.identity_count
                                  ? seq.identity_beta
                                  : neutart::num::Tensor({asset.identity_count});
  long landmarks = static_cast<long>(asset.lip_landmark_ids.size());
  neutart::num::Tensor rows({seq.frames.rows(), 3 * landmarks});
  neutart::num::Tensor frame({seq.frames.cols()});
  for (long t = 0; t < seq.frames.rows(); ++t) {
    for (long c = 0; c < frame.size(); ++c) frame[c] = seq.frames.at(t, c);
    neutart::flame::FaceMesh mesh = neutart::flame::decode_mesh(frame, beta, asset);
    neutart::num::Tensor lips = neutart::flame::lip_landmarks(mesh, asset);
    for (long l = 0; l < landmarks; ++l)
      for (long a = 0; a < 3; ++a) rows.at(t, 3 * l + a) = lips.at(l, a);
  }
  return rows;
}

neutart::eval::UtteranceMetrics eval_one(const EvalArtifacts& art,
                                         const neutart::flame::FlameAsset& asset,
                                         const neutart::eval::VisemeTable& table) {
  neutart::eval::UtteranceMetrics row;
  row.id = art.id;
  row.mcd_db = neutart::eval::mcd(read_mel(art.pred_mel), read_mel(art.ref_mel));

  neutart::num::Tensor pred_lips =
      landmark_rows(neutart::flame::load_flame_frames(art.pred_flame.string()), asset);
  neutart::num::Tensor ref_lips =
      landmark_rows(neutart::flame::load_flame_frames(art.ref_flame.string()), asset);
  row.lmd = neutart::eval::lip_landmark_distance(pred_lips, ref_lips);
  row.lmve = neutart::eval::lip_landmark_velocity_error(pred_lips, ref_lips);

  std::vector<std::string> pred_phones = read_phones(art.pred_phones);
  std::vector<std::string> ref_phones = read_phones(art.ref_phones);
  std::string pred_joined, ref_joined;
  for (const auto& s : pred_phones) {
    if (!pred_joined.empty()) pred_joined += ' ';
    pred_joined += s;
  }
  for (const auto& s : ref_phones) {
    if (!ref_joined.empty()) ref_joined += ' ';
    ref_joined += s;
  }
  row.cer = neutart::eval::character_error_rate(pred_joined, ref_joined);

  auto strip = [](const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(neutart::text::split_stress(t).first);
    return out;
  };
  row.ver = neutart::eval::viseme_error_rate(
      neutart::eval::map_to_visemes(strip(pred_phones), table),
      neutart::eval::map_to_visemes(strip(ref_phones), table));
  return row;
}

int cmd_eval(const Options& opt) {
  neutart::cfg::RunConfig config = load_config(opt);
  if (config.paths.flame_asset.empty())
    throw neutart::ConfigError("evaluation needs paths.flame_asset in the config");
  neutart::flame::FlameAsset asset = neutart::flame::load_flame_asset(
      neutart::cfg::resolve_path(config.paths.flame_asset));
  neutart::eval::VisemeTable table =
      config.paths.visemes.empty()
          ? neutart::eval::VisemeTable::builtin()
          : neutart::eval::VisemeTable::load(
                neutart::cfg::resolve_path(config.paths.visemes));

  fs::path pred_dir(opt.pred_dir), ref_dir(opt.ref_dir);
  std::set<std::string> pred_ids = flame_ids(pred_dir);
  std::set<std::string> ref_ids = flame_ids(ref_dir);

  std::vector<EvalArtifacts> pairs;
  for (const std::string& id : ref_ids) {
    if (!pred_ids.count(id)) {
      std::cerr << "warning: " << id << " is only in the reference directory\n";
      continue;
    }
    EvalArtifacts art;
    art.id = id;
    art.pred_flame = pred_dir / (id + ".ntff");
    art.ref_flame = ref_dir / (id + ".ntff");
    art.pred_mel = need_artifact(pred_dir, id + ".mel.ntck");
    art.ref_mel = need_artifact(ref_dir, id + ".mel.ntck");
    art.pred_phones = need_artifact(pred_dir, id + ".phones.txt");
    art.ref_phones = need_artifact(ref_dir, id + ".phones.txt");
    pairs.push_back(std::move(art));
  }
  for (const std::string& id : pred_ids)
    if (!ref_ids.count(id))
      std::cerr << "warning: " << id << " is only in the prediction directory\n";
  if (pairs.empty())
    throw neutart::DataError("evaluation: no paired utterance ids between " +
                             opt.pred_dir + " and " + opt.ref_dir);

  std::vector<neutart::eval::UtteranceMetrics> rows(pairs.size());
  size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (size_t base = 0; base < pairs.size(); base += workers) {
    size_t end = std::min(pairs.size(), base + workers);
    std::vector<std::future<neutart::eval::UtteranceMetrics>> futs;
    for (size_t i = base; i < end; ++i)
      futs.push_back(std::async(std::launch::async, eval_one, std::cref(pairs[i]),
                                std::cref(asset), std::cref(table)));
    for (size_t i = base; i < end; ++i) rows[i] = futs[i - base].get();
  }

  fs::path out_dir = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  fs::create_directories(out_dir);
  neutart::eval::write_metrics_csv((out_dir / "metrics.csv").string(), rows);
  std::string summary = neutart::eval::metrics_summary_json(rows);
  std::ofstream((out_dir / "summary.json").string()) << summary << "\n";
  std::cout << summary << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint audiovisual speech synthesis pipeline"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* prepare = app.add_subcommand(
      "prepare", "Extract aligned features from a corpus manifest");
  prepare->add_option("--config", opt.config_path, "run configuration file")->required();
  prepare->add_option("manifest", opt.manifest,
                      "manifest override (default: paths.corpus_manifest)");
  prepare->add_option("--out", opt.out, "output root override");

  CLI::App* train = app.add_subcommand("train", "Train on a prepared corpus");
  train->add_option("--config", opt.config_path, "run configuration file")->required();
  train->add_option("--seed", opt.seed, "seed override");
  train->add_option("--checkpoint", opt.checkpoint, "checkpoint to resume from");
  train->add_option("--out", opt.out, "output root override");

  CLI::App* synth = app.add_subcommand("synth", "Synthesize speech and face motion");
  synth->add_option("--config", opt.config_path, "run configuration file")->required();
  synth->add_option("--checkpoint", opt.checkpoint, "trained checkpoint")->required();
  synth->add_option("--out", opt.out, "output directory")->required();
  synth->add_option("text", opt.text, "text to synthesize")->required();
  synth->add_option("--id", opt.utterance_id, "basename for the output files");
  synth->add_flag("--mesh", opt.mesh, "also dump per-frame vertex lists");

  CLI::App* eval = app.add_subcommand("eval", "Score predictions against references");
  eval->add_option("--config", opt.config_path, "run configuration file")->required();
  eval->add_option("pred", opt.pred_dir, "prediction directory")->required();
  eval->add_option("ref", opt.ref_dir, "reference directory")->required();
  eval->add_option("--out", opt.out, "directory for metrics.csv and summary.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) return cmd_prepare(opt);
    if (*train) return cmd_train(opt);
    if (*synth) return cmd_synth(opt);
    if (*eval) return cmd_eval(opt);
  } catch (const neutart::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const neutart::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const neutart::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
