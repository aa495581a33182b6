#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "neutart/config.hpp"
#include "neutart/model.hpp"

namespace neutart::corpus {

// One line of the training manifest (JSON object per line). Relative file
// paths are resolved against the manifest's own directory.
struct ManifestRow {
  std::string id;
  std::string wav;
  std::string textgrid;
  std::string flame;
  std::string transcript;
  long speaker_id = 0;
};

std::vector<ManifestRow> parse_manifest(const std::string& path);

// Binary utterance record, magic NTAU0001, trailing CRC32 like the face
// formats. Round trips every AlignedUtterance field bit-exactly.
void save_utterance(const std::string& path, const model::AlignedUtterance& u);
model::AlignedUtterance load_utterance(const std::string& path);

struct PrepareResult {
  std::vector<std::string> accepted_ids; // input order
  std::vector<std::pair<std::string, std::string>> rejects; // id, reason
  model::CorpusStats stats;
  long total_frames = 0;
};

// Extracts features for every manifest row and writes records, stats, and an
// index into <output_dir>/prepared. Rows are processed in parallel; results
// keep manifest order. A row failing any per-row step is rejected with the
// reason, never aborting the run.
PrepareResult prepare_corpus(const cfg::RunConfig& config);

struct PreparedCorpus {
  std::vector<model::AlignedUtterance> utterances;
  model::CorpusStats stats;
};

PreparedCorpus load_prepared(const std::string& dir);

// Writes a self-contained procedural corpus (WAVs, TextGrids, face tracks,
// face asset, lexicon, manifest) plus a ready-to-run config under dir.
// Returns the config path.
std::string generate_synthetic_corpus(const std::string& dir, std::uint64_t seed,
                                      long utterance_count);

} // namespace neutart::corpus
