#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "neutart/tensor.hpp"

namespace neutart::eval {

// Monotone alignment between two vector sequences. Steps move forward in
// the first sequence, the second, or both; the path covers both ends.
struct DtwPath {
  std::vector<std::pair<long, long>> pairs; // (row in a, row in b)
  double total_cost = 0.0;
};

// Rows of a (N x D) against rows of b (M x D) under Euclidean frame cost.
// Ties between predecessors resolve diagonal first, then a-advance, then
// b-advance, so equal-cost alignments are deterministic.
DtwPath dtw_align(const num::Tensor& a, const num::Tensor& b);

// 10*log10 of the mean squared frame distance over the warped pairs,
// floored at 1e-10 (identical inputs report -100 dB).
double mcd(const num::Tensor& pred_mel, const num::Tensor& target_mel);

// Landmarks travel as T x 3L rows (L consecutive xyz triples). Alignment
// runs on the flattened rows; the score is the mean per-landmark Euclidean
// distance over warped pairs.
double lip_landmark_distance(const num::Tensor& pred, const num::Tensor& target);

// Velocity counterpart: frame deltas are taken between consecutive distinct
// target frames of the warp, with the prediction delta spanning the same
// path segment. Mean per-landmark norm of the delta difference.
double lip_landmark_velocity_error(const num::Tensor& pred, const num::Tensor& target);

// Unit-cost Levenshtein distance.
long edit_distance(const std::string& hyp, const std::string& ref);
long edit_distance(const std::vector<long>& hyp, const std::vector<long>& ref);

// Levenshtein(hyp, ref) / len(ref); ref must be non-empty.
double character_error_rate(const std::string& hyp, const std::string& ref);
double viseme_error_rate(const std::vector<long>& hyp, const std::vector<long>& ref);

// Total map from the ARPAbet inventory onto 13 viseme classes plus silence
// (class 0). Ships as a plain-text data file, one "PHONEME VISEME" per line.
class VisemeTable {
public:
  static VisemeTable builtin();
  static VisemeTable load(const std::string& path);
  void save(const std::string& path) const;

  // Throws DataError for a phoneme missing from the table.
  long viseme_of(const std::string& phoneme) const;
  const std::map<std::string, long>& mapping() const { return map_; }
  static std::string class_label(long viseme);

private:
  std::map<std::string, long> map_;
};

// Per-phoneme lookup with consecutive duplicate classes collapsed; lip
// shapes carry no duration, so runs of one viseme are a single symbol.
std::vector<long> map_to_visemes(const std::vector<std::string>& phonemes,
                                 const VisemeTable& table);

struct UtteranceMetrics {
  std::string id;
  double mcd_db = 0.0;
  double lmd = 0.0;
  double lmve = 0.0;
  double cer = 0.0;
  double ver = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<UtteranceMetrics>& rows);
// {"utterances": N, "mean_mcd_db": ..., ...}; means are plain arithmetic
// means of the CSV columns.
std::string metrics_summary_json(const std::vector<UtteranceMetrics>& rows);

} // namespace neutart::eval
