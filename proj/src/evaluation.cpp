#include "neutart/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "neutart/errors.hpp"

namespace neutart::eval {

using num::Tensor;

namespace {

double frame_distance(const Tensor& a, long i, const Tensor& b, long j) {
  double acc = 0.0;
  for (long c = 0; c < a.cols(); ++c) {
    double d = a.at(i, c) - b.at(j, c);
    acc += d * d;
  }
  return std::sqrt(acc);
}

void require_rows(const Tensor& a, const Tensor& b, const char* who) {
  if (a.rows() == 0 || b.rows() == 0)
    throw ShapeError(std::string(who) + ": empty input");
  if (a.cols() != b.cols())
    throw ShapeError(std::string(who) + ": dimension mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

// Mean squared distance between warped frame rows; shared by mcd.
double mean_aligned_sq(const Tensor& a, const Tensor& b) {
  DtwPath path = dtw_align(a, b);
  double acc = 0.0;
  for (const auto& [i, j] : path.pairs) {
    double d = frame_distance(a, i, b, j);
    acc += d * d;
  }
  return acc / static_cast<double>(path.pairs.size());
}

long landmark_count_of(const Tensor& t, const char* who) {
  if (t.cols() % 3 != 0)
    throw ShapeError(std::string(who) + ": row width " + std::to_string(t.cols()) +
                     " is not a multiple of 3");
  return t.cols() / 3;
}

double landmark_norm(const Tensor& m, long row, long landmark) {
  double acc = 0.0;
  for (long axis = 0; axis < 3; ++axis) {
    double v = m.at(row, landmark * 3 + axis);
    acc += v * v;
  }
  return std::sqrt(acc);
}

} // namespace

DtwPath dtw_align(const Tensor& a, const Tensor& b) {
  require_rows(a, b, "dtw");
  const long n = a.rows(), m = b.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(static_cast<size_t>(n * m), inf);
  auto at = [&](long i, long j) -> double& { return dp[static_cast<size_t>(i * m + j)]; };
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < m; ++j) {
      double best;
      if (i == 0 && j == 0)
        best = 0.0;
      else if (i == 0)
        best = at(0, j - 1);
      else if (j == 0)
        best = at(i - 1, 0);
      else
        best = std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
      at(i, j) = frame_distance(a, i, b, j) + best;
    }

  DtwPath path;
  path.total_cost = at(n - 1, m - 1);
  long i = n - 1, j = m - 1;
  path.pairs.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
      double best = std::min({diag, up, left});
      if (diag == best) {
        --i;
        --j;
      } else if (up == best) {
        --i;
      } else {
        --j;
      }
    }
    path.pairs.emplace_back(i, j);
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

double mcd(const Tensor& pred_mel, const Tensor& target_mel) {
  require_rows(pred_mel, target_mel, "mcd");
  double mean_sq = mean_aligned_sq(pred_mel, target_mel);
  return 10.0 * std::log10(std::max(mean_sq, 1e-10));
}

double lip_landmark_distance(const Tensor& pred, const Tensor& target) {
  require_rows(pred, target, "lip landmark distance");
  long landmarks = landmark_count_of(target, "lip landmark distance");
  DtwPath path = dtw_align(pred, target);
  double acc = 0.0;
  for (const auto& [i, j] : path.pairs)
    for (long l = 0; l < landmarks; ++l) {
      double d2 = 0.0;
      for (long axis = 0; axis < 3; ++axis) {
        double d = pred.at(i, l * 3 + axis) - target.at(j, l * 3 + axis);
        d2 += d * d;
      }
      acc += std::sqrt(d2);
    }
  return acc / static_cast<double>(path.pairs.size() * static_cast<size_t>(landmarks));
}

double lip_landmark_velocity_error(const Tensor& pred, const Tensor& target) {
  require_rows(pred, target, "lip landmark velocity");
  if (pred.rows() < 2 || target.rows() < 2)
    throw ShapeError("lip landmark velocity: need at least 2 frames on both sides");
  long landmarks = landmark_count_of(target, "lip landmark velocity");
  DtwPath path = dtw_align(pred, target);

  double acc = 0.0;
  long steps = 0;
  size_t prev = 0; // last path element whose target index is distinct
  for (size_t k = 1; k < path.pairs.size(); ++k) {
    if (path.pairs[k].second == path.pairs[prev].second) continue;
    auto [pi, pj] = path.pairs[prev];
    auto [ci, cj] = path.pairs[k];
    for (long l = 0; l < landmarks; ++l) {
      double d2 = 0.0;
      for (long axis = 0; axis < 3; ++axis) {
        double dp = pred.at(ci, l * 3 + axis) - pred.at(pi, l * 3 + axis);
        double dt = target.at(cj, l * 3 + axis) - target.at(pj, l * 3 + axis);
        d2 += (dp - dt) * (dp - dt);
      }
      acc += std::sqrt(d2);
    }
    ++steps;
    prev = k;
  }
  if (steps == 0) throw ShapeError("lip landmark velocity: warp never advances the target");
  return acc / static_cast<double>(steps * landmarks);
}

namespace {

template <typename Seq>
long levenshtein(const Seq& hyp, const Seq& ref) {
  const long n = static_cast<long>(hyp.size()), m = static_cast<long>(ref.size());
  std::vector<long> row(static_cast<size_t>(m + 1));
  for (long j = 0; j <= m; ++j) row[static_cast<size_t>(j)] = j;
  for (long i = 1; i <= n; ++i) {
    long diag = row[0];
    row[0] = i;
    for (long j = 1; j <= m; ++j) {
      long sub = diag + (hyp[static_cast<size_t>(i - 1)] == ref[static_cast<size_t>(j - 1)] ? 0 : 1);
      diag = row[static_cast<size_t>(j)];
      row[static_cast<size_t>(j)] =
          std::min({sub, row[static_cast<size_t>(j)] + 1, row[static_cast<size_t>(j - 1)] + 1});
    }
  }
  return row[static_cast<size_t>(m)];
}

} // namespace

long edit_distance(const std::string& hyp, const std::string& ref) {
  return levenshtein(hyp, ref);
}

long edit_distance(const std::vector<long>& hyp, const std::vector<long>& ref) {
  return levenshtein(hyp, ref);
}

double character_error_rate(const std::string& hyp, const std::string& ref) {
  if (ref.empty()) throw DataError("character error rate: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

double viseme_error_rate(const std::vector<long>& hyp, const std::vector<long>& ref) {
  if (ref.empty()) throw DataError("viseme error rate: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

VisemeTable VisemeTable::builtin() {
  // 13 lip-shape classes over the CMU ARPAbet plus silence. Groupings:
  // closed lips, lip-teeth, tongue-teeth, alveolar, postalveolar, velar,
  // open alveolar, rhotic, rounded-narrow, rounded-open, open-back,
  // open-front, spread.
  static const std::pair<const char*, long> entries[] = {
      {"P", 1},  {"B", 1},  {"M", 1},                        // closed lips
      {"F", 2},  {"V", 2},                                   // lip-teeth
      {"TH", 3}, {"DH", 3},                                  // tongue-teeth
      {"T", 4},  {"D", 4},  {"S", 4},  {"Z", 4},             // alveolar
      {"SH", 5}, {"ZH", 5}, {"CH", 5}, {"JH", 5},            // postalveolar
      {"K", 6},  {"G", 6},  {"NG", 6},                       // velar
      {"N", 7},  {"L", 7},                                   // open alveolar
      {"R", 8},  {"ER", 8},                                  // rhotic
      {"W", 9},  {"UW", 9}, {"UH", 9},                       // rounded narrow
      {"OW", 10}, {"OY", 10}, {"AO", 10},                    // rounded open
      {"AA", 11}, {"AW", 11}, {"AH", 11},                    // open back
      {"AE", 12}, {"EH", 12}, {"AY", 12}, {"EY", 12},        // open front
      {"IH", 13}, {"IY", 13}, {"Y", 13},  {"HH", 13},        // spread
      {"SIL", 0}};
  VisemeTable t;
  for (const auto& [ph, v] : entries) t.map_[ph] = v;
  return t;
}

std::string VisemeTable::class_label(long viseme) {
  if (viseme == 0) return "SIL";
  return "V" + std::to_string(viseme);
}

VisemeTable VisemeTable::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("viseme table: cannot open " + path);
  VisemeTable t;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string phoneme, viseme;
    if (!(ss >> phoneme)) continue; // blank or comment-only line
    if (!(ss >> viseme))
      throw ParseError(path, line_no, "expected 'PHONEME VISEME'");
    long v;
    if (viseme == "SIL")
      v = 0;
    else if (viseme.size() >= 2 && viseme[0] == 'V')
      v = std::stol(viseme.substr(1));
    else
      throw ParseError(path, line_no, "unknown viseme class '" + viseme + "'");
    t.map_[phoneme] = v;
  }
  if (t.map_.empty()) throw DataError("viseme table: no entries in " + path);
  return t;
}

void VisemeTable::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("viseme table: cannot open " + path + " for writing");
  os << "# phoneme to viseme class, one pair per line\n";
  for (const auto& [ph, v] : map_) os << ph << " " << class_label(v) << "\n";
  if (!os) throw DataError("viseme table: write failed for " + path);
}

long VisemeTable::viseme_of(const std::string& phoneme) const {
  auto it = map_.find(phoneme);
  if (it == map_.end())
    throw DataError("viseme table: phoneme '" + phoneme + "' has no viseme class");
  return it->second;
}

std::vector<long> map_to_visemes(const std::vector<std::string>& phonemes,
                                 const VisemeTable& table) {
  std::vector<long> out;
  for (const auto& ph : phonemes) {
    long v = table.viseme_of(ph);
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<UtteranceMetrics>& rows) {
  std::ofstream os(path);
  if (!os) throw DataError("metrics: cannot open " + path + " for writing");
  os << "utterance_id,mcd_db,lmd,lmve,cer,ver\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.id << ',' << r.mcd_db << ',' << r.lmd << ',' << r.lmve << ',' << r.cer << ','
       << r.ver << "\n";
  if (!os) throw DataError("metrics: write failed for " + path);
}

std::string metrics_summary_json(const std::vector<UtteranceMetrics>& rows) {
  double mcd_db = 0.0, lmd = 0.0, lmve = 0.0, cer = 0.0, ver = 0.0;
  for (const auto& r : rows) {
    mcd_db += r.mcd_db;
    lmd += r.lmd;
    lmve += r.lmve;
    cer += r.cer;
    ver += r.ver;
  }
  double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  nlohmann::ordered_json j;
  j["utterances"] = rows.size();
  j["mean_mcd_db"] = mcd_db / n;
  j["mean_lmd"] = lmd / n;
  j["mean_lmve"] = lmve / n;
  j["mean_cer"] = cer / n;
  j["mean_ver"] = ver / n;
  return j.dump();
}

} // namespace neutart::eval
