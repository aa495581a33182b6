#include "neutart/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "neutart/errors.hpp"

namespace neutart::text {

namespace {

std::string to_upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

// "READ(1)" -> "READ"; plain words pass through.
std::string strip_variant_suffix(const std::string& word) {
  auto open = word.find('(');
  if (open == std::string::npos || word.back() != ')') return word;
  return word.substr(0, open);
}

} // namespace

std::pair<std::string, int> split_stress(const std::string& token) {
  if (!token.empty() && std::isdigit(static_cast<unsigned char>(token.back()))) {
    int stress = token.back() - '0';
    return {token.substr(0, token.size() - 1), stress};
  }
  return {token, kNoStress};
}

bool is_silence_label(const std::string& label) {
  return label.empty() || label == "sil" || label == "sp" || label == "spn" ||
         label == "SIL" || label == "SP";
}

long PronunciationLexicon::index_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw DataError("unknown phoneme symbol: " + symbol);
  return it->second;
}

bool PronunciationLexicon::contains(const std::string& word) const {
  return entries_.count(to_upper(word)) > 0;
}

const std::vector<Pronunciation>& PronunciationLexicon::variants(const std::string& word) const {
  auto it = entries_.find(to_upper(word));
  if (it == entries_.end()) throw DataError("word not in lexicon: " + to_upper(word));
  return it->second;
}

PronunciationLexicon parse_lexicon(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("lexicon: cannot open " + path);

  PronunciationLexicon lex;
  std::set<std::string> symbols;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind(";;;", 0) == 0) continue; // comment

    std::istringstream ss(line);
    std::string word;
    ss >> word;
    Pronunciation pron;
    std::string token;
    while (ss >> token) {
      auto [symbol, stress] = split_stress(token);
      if (symbol.empty())
        throw ParseError(path, line_no, "empty phoneme token");
      pron.symbols.push_back(symbol);
      pron.stresses.push_back(stress);
      symbols.insert(symbol);
    }
    if (word.empty() || pron.symbols.empty())
      throw ParseError(path, line_no, "malformed lexicon line: '" + line + "'");
    lex.entries_[to_upper(strip_variant_suffix(word))].push_back(std::move(pron));
  }
  if (lex.entries_.empty()) throw DataError("lexicon: no entries in " + path);

  // Deterministic ids: sorted symbols, then the silence marker.
  lex.inventory_.assign(symbols.begin(), symbols.end());
  lex.inventory_.push_back(kSilenceSymbol);
  for (size_t i = 0; i < lex.inventory_.size(); ++i)
    lex.index_[lex.inventory_[i]] = static_cast<long>(i);
  return lex;
}

PhonemeSequence phonemize(const std::string& raw_text, const PronunciationLexicon& lex) {
  // Normalize: uppercase, keep letters/digits plus in-word apostrophe and
  // hyphen, everything else becomes a separator.
  std::string norm;
  norm.reserve(raw_text.size());
  for (unsigned char c : raw_text) {
    if (std::isalnum(c) || c == '\'' || c == '-')
      norm.push_back(static_cast<char>(std::toupper(c)));
    else
      norm.push_back(' ');
  }

  std::istringstream ss(norm);
  std::vector<std::string> words;
  std::string word;
  while (ss >> word) words.push_back(word);
  if (words.empty()) throw DataError("phonemize: empty input text");

  PhonemeSequence seq;
  for (const auto& w : words) {
    if (!lex.contains(w)) throw DataError("phonemize: word not in lexicon: " + w);
    const Pronunciation& pron = lex.variants(w).front(); // first variant
    seq.word_boundaries.push_back(seq.size());
    for (size_t i = 0; i < pron.symbols.size(); ++i) {
      seq.symbols.push_back(pron.symbols[i]);
      seq.stresses.push_back(pron.stresses[i]);
      seq.indices.push_back(lex.index_of(pron.symbols[i]));
    }
  }
  return seq;
}

PhonemeSequence sequence_from_labels(const std::vector<std::string>& labels,
                                     const PronunciationLexicon& lex) {
  PhonemeSequence seq;
  if (!labels.empty()) seq.word_boundaries.push_back(0);
  for (const auto& label : labels) {
    if (is_silence_label(label)) {
      seq.symbols.push_back(kSilenceSymbol);
      seq.stresses.push_back(kNoStress);
      seq.indices.push_back(lex.silence_id());
      continue;
    }
    auto [symbol, stress] = split_stress(label);
    seq.symbols.push_back(symbol);
    seq.stresses.push_back(stress);
    seq.indices.push_back(lex.index_of(symbol));
  }
  return seq;
}

} // namespace neutart::text
