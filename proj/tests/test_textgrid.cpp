#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "doctest.h"
#include "neutart/errors.hpp"
#include "neutart/rng.hpp"
#include "neutart/textgrid.hpp"

using namespace neutart::text;
using neutart::Lcg;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path("tmp_" + name) {
    std::ofstream os(path);
    os << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

std::string textgrid_two_intervals(double mid, double second_start) {
  std::string s;
  s += "File type = \"ooTextFile\"\n";
  s += "Object class = \"TextGrid\"\n\n";
  s += "xmin = 0\nxmax = 1.0\n";
  s += "tiers? <exists>\nsize = 1\nitem []:\n";
  s += "    item [1]:\n";
  s += "        class = \"IntervalTier\"\n";
  s += "        name = \"phones\"\n";
  s += "        xmin = 0\n";
  s += "        xmax = 1.0\n";
  s += "        intervals: size = 2\n";
  s += "        intervals [1]:\n";
  s += "            xmin = 0\n";
  s += "            xmax = " + std::to_string(mid) + "\n";
  s += "            text = \"HH\"\n";
  s += "        intervals [2]:\n";
  s += "            xmin = " + std::to_string(second_start) + "\n";
  s += "            xmax = 1.0\n";
  s += "            text = \"AH0\"\n";
  return s;
}

AlignmentTrack track_from(const std::vector<std::pair<double, double>>& spans) {
  AlignmentTrack t;
  for (auto& [a, b] : spans) t.intervals.push_back({a, b, "X"});
  t.total_duration_seconds = spans.back().second;
  return t;
}

} // namespace

TEST_CASE("parses a two-interval phones tier") {
  TempFile f("tg1.TextGrid", textgrid_two_intervals(0.4, 0.4));
  AlignmentTrack track = parse_textgrid(f.path, "phones");
  REQUIRE(track.intervals.size() == 2);
  CHECK(track.intervals[0].start_seconds == doctest::Approx(0.0));
  CHECK(track.intervals[0].end_seconds == doctest::Approx(0.4));
  CHECK(track.intervals[0].label == "HH");
  CHECK(track.intervals[1].label == "AH0");
  CHECK(track.total_duration_seconds == doctest::Approx(1.0));
}

TEST_CASE("missing tier error names available tiers") {
  TempFile f("tg2.TextGrid", textgrid_two_intervals(0.4, 0.4));
  try {
    parse_textgrid(f.path, "words");
    FAIL("expected DataError");
  } catch (const neutart::DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("words") != std::string::npos);
    CHECK(msg.find("phones") != std::string::npos);
  }
}

TEST_CASE("overlapping intervals are rejected") {
  TempFile f("tg3.TextGrid", textgrid_two_intervals(0.5, 0.4));
  try {
    parse_textgrid(f.path, "phones");
    FAIL("expected DataError");
  } catch (const neutart::DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("overlap") != std::string::npos);
    CHECK(msg.find("0.4") != std::string::npos);
  }
}

TEST_CASE("non-numeric time is a parse error") {
  std::string body = textgrid_two_intervals(0.4, 0.4);
  auto pos = body.find("xmax = " + std::to_string(0.4));
  body.replace(pos, std::string("xmax = " + std::to_string(0.4)).size(),
               "xmax = forty");
  TempFile f("tg4.TextGrid", body);
  CHECK_THROWS_AS(parse_textgrid(f.path, "phones"), neutart::ParseError);
}

TEST_CASE("silence labels are preserved verbatim") {
  std::string body = textgrid_two_intervals(0.4, 0.4);
  auto pos = body.find("text = \"HH\"");
  body.replace(pos, std::string("text = \"HH\"").size(), "text = \"\"");
  TempFile f("tg5.TextGrid", body);
  AlignmentTrack track = parse_textgrid(f.path, "phones");
  CHECK(track.intervals[0].label == "");
}

TEST_CASE("exact division quantizes without residue") {
  auto track = track_from({{0.0, 0.4}, {0.4, 1.0}});
  FrameDurations d = quantize_durations(track, 0.1, 10);
  REQUIRE(d.frames_per_phoneme.size() == 2);
  CHECK(d.frames_per_phoneme[0] == 4);
  CHECK(d.frames_per_phoneme[1] == 6);
  CHECK(d.total_frames() == 10);
}

TEST_CASE("rounding residue lands so the sum is exact") {
  auto track = track_from({{0.0, 0.333}, {0.333, 0.666}, {0.666, 1.0}});
  FrameDurations d = quantize_durations(track, 0.1, 10);
  CHECK(d.total_frames() == 10);
  for (long v : d.frames_per_phoneme) CHECK(v >= 3);
}

TEST_CASE("equal remainders break toward the earlier interval") {
  auto track = track_from({{0.0, 0.25}, {0.25, 0.5}});
  FrameDurations d = quantize_durations(track, 0.1, 5);
  REQUIRE(d.frames_per_phoneme.size() == 2);
  CHECK(d.frames_per_phoneme[0] == 3);
  CHECK(d.frames_per_phoneme[1] == 2);
}

TEST_CASE("incompatible total frame count is an error") {
  auto track = track_from({{0.0, 0.5}, {0.5, 1.0}});
  CHECK_THROWS_AS(quantize_durations(track, 0.1, 20), neutart::DataError);
}

TEST_CASE("quantization sum invariant on random tilings") {
  Lcg rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    long n = 1 + static_cast<long>(rng.next_below(8));
    double t = 0.0;
    std::vector<std::pair<double, double>> spans;
    for (long i = 0; i < n; ++i) {
      double len = rng.uniform(0.05, 0.6);
      spans.push_back({t, t + len});
      t += len;
    }
    auto track = track_from(spans);
    long total = static_cast<long>(std::llround(t / 0.0116));
    double hop = t / static_cast<double>(total);
    FrameDurations d = quantize_durations(track, hop, total);
    CHECK(d.total_frames() == total);
    for (long v : d.frames_per_phoneme) CHECK(v >= 0);
  }
}
