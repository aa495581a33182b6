#pragma once

#include <string>
#include <vector>

namespace neutart::text {

struct Interval {
  double start_seconds = 0.0;
  double end_seconds = 0.0;
  std::string label;
};

// One interval tier of a forced-alignment TextGrid. Intervals are sorted,
// non-overlapping, and tile [0, total_duration_seconds] (gap tolerance 1e-6 s).
struct AlignmentTrack {
  std::vector<Interval> intervals;
  double total_duration_seconds = 0.0;
};

struct FrameDurations {
  std::vector<long> frames_per_phoneme;
  double hop_seconds = 0.0;
  long total_frames() const;
};

// Reads one interval tier from a Praat long-form TextGrid. Silence labels
// ("", "sil", "sp") are preserved verbatim. A missing tier is an error that
// names the tiers present in the file.
AlignmentTrack parse_textgrid(const std::string& path, const std::string& tier_name);

// Rounds interval durations to whole frames so they sum to total_frames
// exactly, using the largest-remainder method. Frame deficits go to the
// largest fractional remainders (ties: earlier interval wins); surpluses are
// taken from the smallest remainders (ties: later interval loses).
FrameDurations quantize_durations(const AlignmentTrack& track, double hop_seconds,
                                  long total_frames);

} // namespace neutart::text
