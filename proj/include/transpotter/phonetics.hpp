#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "transpotter/errors.hpp"

namespace transpotter {

// ARPAbet phoneme inventory with a reserved PAD symbol at id 0. Symbols are
// ordered lexicographically so id assignment is reproducible.
class PhonemeVocabulary {
 public:
  static constexpr int kPad = 0;

  // 39 stress-free symbols.
  static const PhonemeVocabulary& arpabet();
  // 39 base symbols plus the 0/1/2-stressed vowel forms.
  static const PhonemeVocabulary& arpabet_stressed();

  int id(const std::string& symbol) const;  // -1 when unknown
  const std::string& symbol(int id) const;
  std::size_t size() const { return symbols_.size(); }

 private:
  explicit PhonemeVocabulary(std::vector<std::string> symbols);
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

// Keyword (or phrase) as phoneme identifiers; the model's text-side input.
struct Query {
  std::vector<int> ids;  // all valid, none PAD
  std::string text;      // source text
  std::size_t length() const { return ids.size(); }
};

// Word -> pronunciations, in file order; the first one is the headword entry.
class Lexicon {
 public:
  using Pronunciation = std::vector<std::string>;

  void add(const std::string& word, Pronunciation pron);
  bool contains(const std::string& word) const;  // word is case-insensitive
  const std::vector<Pronunciation>* find(const std::string& word) const;
  std::size_t word_count() const { return entries_.size(); }
  const std::map<std::string, std::vector<Pronunciation>>& entries() const {
    return entries_;
  }
  bool operator==(const Lexicon& o) const { return entries_ == o.entries_; }

 private:
  std::map<std::string, std::vector<Pronunciation>> entries_;
};

std::string to_upper(std::string s);

// Parses CMU-dictionary text: one `WORD  PH PH ...` entry per line, `;;;`
// comments, alternate pronunciations as `WORD(2)`, optional stress digits on
// vowels. With strip_stress the digits are removed and symbols are validated
// against the 39-symbol inventory.
Lexicon parse_lexicon(std::istream& in, bool strip_stress = true);

void serialize_lexicon(const Lexicon& lex, std::ostream& out);

// Query from the first-listed pronunciation; throws NotInLexicon.
Query phonemize(const std::string& word, const Lexicon& lex,
                const PhonemeVocabulary& vocab = PhonemeVocabulary::arpabet());

// Concatenation of each word's first pronunciation, in order.
Query phonemize_phrase(const std::vector<std::string>& words, const Lexicon& lex,
                       const PhonemeVocabulary& vocab = PhonemeVocabulary::arpabet());

}  // namespace transpotter
