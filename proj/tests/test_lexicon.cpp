#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "neutart/errors.hpp"
#include "neutart/lexicon.hpp"

using namespace neutart::text;

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

const char* kSmallLexicon =
    ";;; test lexicon header\n"
    "HELLO  HH AH0 L OW1\n"
    "READ  R EH1 D\n"
    "READ(1)  R IY1 D\n"
    "WORLD  W ER1 L D\n";

} // namespace

TEST_CASE("lexicon line parses symbols and stresses") {
  TempFile f("lex1.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  REQUIRE(lex.contains("HELLO"));
  const Pronunciation& p = lex.variants("HELLO")[0];
  REQUIRE(p.symbols.size() == 4);
  CHECK(p.symbols[0] == "HH");
  CHECK(p.symbols[1] == "AH");
  CHECK(p.symbols[2] == "L");
  CHECK(p.symbols[3] == "OW");
  CHECK(p.stresses[0] == kNoStress);
  CHECK(p.stresses[1] == 0);
  CHECK(p.stresses[2] == kNoStress);
  CHECK(p.stresses[3] == 1);
}

TEST_CASE("comment lines are skipped") {
  TempFile f("lex2.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  CHECK(lex.entry_count() == 3); // HELLO, READ, WORLD
}

TEST_CASE("variant suffix goes under the base word") {
  TempFile f("lex3.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  REQUIRE(lex.contains("READ"));
  CHECK(lex.variants("READ").size() == 2);
  CHECK(lex.variants("READ")[0].symbols[1] == "EH");
  CHECK(lex.variants("READ")[1].symbols[1] == "IY");
}

TEST_CASE("inventory is sorted, contiguous, and ends with SIL") {
  TempFile f("lex4.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  const auto& inv = lex.phoneme_inventory();
  REQUIRE(inv.size() >= 2);
  CHECK(inv.back() == kSilenceSymbol);
  for (size_t i = 0; i + 2 < inv.size(); ++i) CHECK(inv[i] < inv[i + 1]);
  for (size_t i = 0; i < inv.size(); ++i)
    CHECK(lex.index_of(inv[i]) == static_cast<long>(i));
  CHECK(lex.silence_id() == static_cast<long>(inv.size()) - 1);
}

TEST_CASE("lookup is case-insensitive") {
  TempFile f("lex5.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  CHECK(lex.contains("hello"));
  CHECK(lex.contains("Hello"));
}

TEST_CASE("malformed line reports its line number") {
  TempFile f("lex6.txt", "HELLO  HH AH0\nJUSTAWORD\n");
  try {
    parse_lexicon(f.path);
    FAIL("expected ParseError");
  } catch (const neutart::ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find(":2") != std::string::npos);
  }
}

TEST_CASE("empty lexicon is an error") {
  TempFile f("lex7.txt", ";;; nothing here\n");
  CHECK_THROWS_AS(parse_lexicon(f.path), neutart::DataError);
}

TEST_CASE("phonemize hello") {
  TempFile f("lex8.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  PhonemeSequence seq = phonemize("hello", lex);
  REQUIRE(seq.size() == 4);
  CHECK(seq.symbols[0] == "HH");
  CHECK(seq.symbols[1] == "AH");
  CHECK(seq.symbols[2] == "L");
  CHECK(seq.symbols[3] == "OW");
  CHECK(seq.stresses[0] == kNoStress);
  CHECK(seq.stresses[1] == 0);
  CHECK(seq.stresses[3] == 1);
  REQUIRE(seq.word_boundaries.size() == 1);
  CHECK(seq.word_boundaries[0] == 0);
}

TEST_CASE("phonemize rejects empty input") {
  TempFile f("lex9.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  CHECK_THROWS_AS(phonemize("", lex), neutart::DataError);
  CHECK_THROWS_AS(phonemize("  .,!  ", lex), neutart::DataError);
}

TEST_CASE("phonemize repeated word records both boundaries") {
  TempFile f("lex10.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  PhonemeSequence seq = phonemize("hello hello", lex);
  CHECK(seq.size() == 8);
  REQUIRE(seq.word_boundaries.size() == 2);
  CHECK(seq.word_boundaries[0] == 0);
  CHECK(seq.word_boundaries[1] == 4);
}

TEST_CASE("out-of-vocabulary word names the offender") {
  TempFile f("lex11.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  try {
    phonemize("hello zyxwv", lex);
    FAIL("expected DataError");
  } catch (const neutart::DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("ZYXWV") != std::string::npos);
  }
}

TEST_CASE("punctuation is stripped before lookup") {
  TempFile f("lex12.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  PhonemeSequence seq = phonemize("Hello, world!", lex);
  CHECK(seq.size() == 8);
  CHECK(seq.word_boundaries.size() == 2);
}

TEST_CASE("indices round-trip through the inventory") {
  TempFile f("lex13.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  PhonemeSequence seq = phonemize("hello world read", lex);
  REQUIRE(seq.indices.size() == seq.symbols.size());
  for (size_t i = 0; i < seq.size(); ++i) {
    long id = seq.indices[i];
    REQUIRE(id >= 0);
    REQUIRE(id < static_cast<long>(lex.phoneme_inventory().size()));
    CHECK(lex.phoneme_inventory()[static_cast<size_t>(id)] == seq.symbols[i]);
  }
}

TEST_CASE("aligner labels map silences to SIL") {
  TempFile f("lex14.txt", kSmallLexicon);
  PronunciationLexicon lex = parse_lexicon(f.path);
  PhonemeSequence seq =
      sequence_from_labels({"sil", "HH", "AH0", "sp", "L", "OW1", ""}, lex);
  REQUIRE(seq.size() == 7);
  CHECK(seq.symbols[0] == kSilenceSymbol);
  CHECK(seq.indices[0] == lex.silence_id());
  CHECK(seq.symbols[3] == kSilenceSymbol);
  CHECK(seq.symbols[6] == kSilenceSymbol);
  CHECK(seq.symbols[1] == "HH");
  CHECK(seq.stresses[2] == 0);
}
