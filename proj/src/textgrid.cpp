#include "neutart/textgrid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "neutart/errors.hpp"

namespace neutart::text {

namespace {

constexpr double kGapTolerance = 1e-6;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Extracts the value after '=' on lines like `xmin = 0.4` or `name = "phones"`.
bool key_value(const std::string& line, const std::string& key, std::string& out) {
  std::string t = trim(line);
  if (t.rfind(key, 0) != 0) return false;
  auto eq = t.find('=');
  if (eq == std::string::npos) return false;
  std::string before = trim(t.substr(0, eq));
  if (before != key) return false;
  out = trim(t.substr(eq + 1));
  return true;
}

std::string unquote(const std::string& s) {
  auto first = s.find('"');
  auto last = s.rfind('"');
  if (first == std::string::npos || last <= first) return s;
  std::string inner = s.substr(first + 1, last - first - 1);
  // Praat escapes a quote as "" inside quoted strings.
  std::string out;
  for (size_t i = 0; i < inner.size(); ++i) {
    out.push_back(inner[i]);
    if (inner[i] == '"' && i + 1 < inner.size() && inner[i + 1] == '"') ++i;
  }
  return out;
}

double parse_time(const std::string& path, long line_no, const std::string& s) {
  std::string t = trim(s);
  try {
    size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, line_no, "non-numeric time value '" + t + "'");
  }
}

} // namespace

long FrameDurations::total_frames() const {
  return std::accumulate(frames_per_phoneme.begin(), frames_per_phoneme.end(), 0L);
}

AlignmentTrack parse_textgrid(const std::string& path, const std::string& tier_name) {
  std::ifstream is(path);
  if (!is) throw DataError("textgrid: cannot open " + path);

  std::vector<std::string> tier_names;
  AlignmentTrack track;
  bool in_target_tier = false;
  bool found_tier = false;
  std::string current_tier_class;
  Interval current;
  int interval_field = 0; // bitmask: 1 = xmin, 2 = xmax seen
  double tier_xmax = 0.0;

  std::string line, value;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (key_value(line, "class", value)) {
      current_tier_class = unquote(value);
      in_target_tier = false;
      continue;
    }
    if (key_value(line, "name", value)) {
      std::string name = unquote(value);
      tier_names.push_back(name);
      in_target_tier = (name == tier_name && current_tier_class == "IntervalTier");
      if (in_target_tier) found_tier = true;
      continue;
    }
    if (!in_target_tier) continue;

    std::string t = trim(line);
    if (t.rfind("intervals [", 0) == 0) {
      current = Interval{};
      interval_field = 0;
      continue;
    }
    if (key_value(line, "xmin", value)) {
      current.start_seconds = parse_time(path, line_no, value);
      interval_field |= 1;
      continue;
    }
    if (key_value(line, "xmax", value)) {
      double v = parse_time(path, line_no, value);
      if (interval_field & 1) {
        current.end_seconds = v;
        interval_field |= 2;
      } else {
        tier_xmax = v; // tier-level xmax appears before any interval
      }
      continue;
    }
    if (key_value(line, "text", value)) {
      if ((interval_field & 3) != 3)
        throw ParseError(path, line_no, "interval text before its xmin/xmax");
      current.label = unquote(value);
      track.intervals.push_back(current);
      interval_field = 0;
      continue;
    }
  }

  if (!found_tier) {
    std::string available;
    for (const auto& n : tier_names) available += (available.empty() ? "" : ", ") + n;
    throw DataError("textgrid: no interval tier named '" + tier_name + "' in " + path +
                    " (available tiers: " + (available.empty() ? "none" : available) + ")");
  }
  if (track.intervals.empty())
    throw DataError("textgrid: tier '" + tier_name + "' has no intervals in " + path);

  for (size_t i = 0; i < track.intervals.size(); ++i) {
    const Interval& iv = track.intervals[i];
    if (!(iv.start_seconds < iv.end_seconds))
      throw DataError("textgrid: interval " + std::to_string(i + 1) +
                      " has start >= end in " + path);
    if (i > 0) {
      double prev_end = track.intervals[i - 1].end_seconds;
      if (iv.start_seconds < prev_end - kGapTolerance)
        throw DataError("textgrid: overlap at " + std::to_string(iv.start_seconds) +
                        " s in tier '" + tier_name + "' of " + path);
      if (iv.start_seconds > prev_end + kGapTolerance)
        throw DataError("textgrid: gap at " + std::to_string(prev_end) + " s in tier '" +
                        tier_name + "' of " + path);
    }
  }
  track.total_duration_seconds =
      tier_xmax > 0 ? tier_xmax : track.intervals.back().end_seconds;
  if (std::abs(track.intervals.back().end_seconds - track.total_duration_seconds) >
      kGapTolerance)
    throw DataError("textgrid: intervals do not tile the tier duration in " + path);
  return track;
}

FrameDurations quantize_durations(const AlignmentTrack& track, double hop_seconds,
                                  long total_frames) {
  if (hop_seconds <= 0) throw ConfigError("quantize_durations: hop_seconds must be > 0");
  if (total_frames < 0) throw ConfigError("quantize_durations: total_frames must be >= 0");
  long n = static_cast<long>(track.intervals.size());
  if (n == 0) throw DataError("quantize_durations: empty track");

  std::vector<long> base(n);
  std::vector<double> remainder(n);
  long base_sum = 0;
  for (long i = 0; i < n; ++i) {
    const Interval& iv = track.intervals[i];
    double raw = (iv.end_seconds - iv.start_seconds) / hop_seconds;
    base[i] = static_cast<long>(std::floor(raw));
    remainder[i] = raw - static_cast<double>(base[i]);
    base_sum += base[i];
  }

  long deficit = total_frames - base_sum;
  if (std::abs(deficit) > n)
    throw DataError("quantize_durations: total_frames " + std::to_string(total_frames) +
                    " incompatible with track duration (rounding residue " +
                    std::to_string(deficit) + " frames over " + std::to_string(n) +
                    " intervals)");

  std::vector<long> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  if (deficit > 0) {
    // Largest remainder first; earlier interval wins ties.
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return remainder[a] > remainder[b]; });
    for (long k = 0; k < deficit; ++k) base[order[static_cast<size_t>(k)]] += 1;
  } else if (deficit < 0) {
    // Smallest remainder first; later interval loses ties. Never drop an
    // interval below zero frames.
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
      if (remainder[a] != remainder[b]) return remainder[a] < remainder[b];
      return a > b;
    });
    long to_remove = -deficit;
    for (long idx : order) {
      if (to_remove == 0) break;
      if (base[idx] > 0) {
        base[idx] -= 1;
        --to_remove;
      }
    }
    if (to_remove > 0)
      throw DataError("quantize_durations: cannot remove " + std::to_string(-deficit) +
                      " frames without a negative duration");
  }

  FrameDurations out;
  out.frames_per_phoneme = std::move(base);
  out.hop_seconds = hop_seconds;
  return out;
}

} // namespace neutart::text
