#pragma once

#include <map>
#include <string>
#include <vector>

namespace neutart::text {

// Silence marker. Not part of the dictionary; appended to the inventory so
// aligner output (which contains silence intervals) can be indexed.
inline constexpr const char* kSilenceSymbol = "SIL";
inline constexpr int kNoStress = -1;

struct Pronunciation {
  std::vector<std::string> symbols; // stress-stripped ARPAbet
  std::vector<int> stresses;        // 0/1/2, or kNoStress
};

// CMU-style pronunciation dictionary. Immutable after parsing; safe to share
// across threads.
class PronunciationLexicon {
public:
  // Inventory ids are contiguous from 0 in sorted symbol order, with SIL last.
  const std::vector<std::string>& phoneme_inventory() const { return inventory_; }
  long index_of(const std::string& symbol) const; // throws DataError if unknown
  long inventory_size() const { return static_cast<long>(inventory_.size()); }
  long silence_id() const { return inventory_size() - 1; }

  bool contains(const std::string& word) const;
  // All variants for a word; lookup is case-insensitive. Throws DataError
  // when the word is missing.
  const std::vector<Pronunciation>& variants(const std::string& word) const;
  long entry_count() const { return static_cast<long>(entries_.size()); }

  friend PronunciationLexicon parse_lexicon(const std::string& path);

private:
  std::map<std::string, std::vector<Pronunciation>> entries_; // uppercase word
  std::vector<std::string> inventory_;
  std::map<std::string, long> index_;
};

struct PhonemeSequence {
  std::vector<std::string> symbols;
  std::vector<int> stresses;         // parallel to symbols
  std::vector<long> indices;         // parallel to symbols
  std::vector<long> word_boundaries; // position where each word starts
  long size() const { return static_cast<long>(symbols.size()); }
};

// Parses a CMUdict-format lexicon: "WORD  PH1 PH2 ...", optional "(n)"
// variant suffix on the word, ";;;" comment lines. Stress digits on vowels
// are stripped into the stress attribute.
PronunciationLexicon parse_lexicon(const std::string& path);

// Splits a raw ARPAbet token like "OW1" into symbol "OW" and stress 1.
std::pair<std::string, int> split_stress(const std::string& token);

// Uppercases, strips punctuation (keeping in-word apostrophes and hyphens),
// and maps each token to its first lexicon variant. Unknown words are a hard
// error naming the word.
PhonemeSequence phonemize(const std::string& raw_text, const PronunciationLexicon& lex);

// Builds a PhonemeSequence from aligner labels (stress optional, silence
// labels map to SIL).
PhonemeSequence sequence_from_labels(const std::vector<std::string>& labels,
                                     const PronunciationLexicon& lex);

bool is_silence_label(const std::string& label);

} // namespace neutart::text
