#include "transpotter/phonetics.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace transpotter {

namespace {

const char* kArpabet[] = {"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
                          "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
                          "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH",
                          "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};

const std::set<std::string> kVowels = {"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
                                       "EY", "IH", "IY", "OW", "OY", "UH", "UW"};

bool has_stress_digit(const std::string& s) {
  return !s.empty() && s.back() >= '0' && s.back() <= '2' && s.size() > 1;
}

}  // namespace

PhonemeVocabulary::PhonemeVocabulary(std::vector<std::string> symbols)
    : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) index_[symbols_[i]] = static_cast<int>(i);
}

const PhonemeVocabulary& PhonemeVocabulary::arpabet() {
  static const PhonemeVocabulary vocab = [] {
    std::vector<std::string> s = {"<pad>"};
    s.insert(s.end(), std::begin(kArpabet), std::end(kArpabet));
    return PhonemeVocabulary(std::move(s));
  }();
  return vocab;
}

const PhonemeVocabulary& PhonemeVocabulary::arpabet_stressed() {
  static const PhonemeVocabulary vocab = [] {
    std::vector<std::string> s;
    for (const char* p : kArpabet) {
      s.emplace_back(p);
      if (kVowels.count(p))
        for (char d : {'0', '1', '2'}) s.emplace_back(std::string(p) + d);
    }
    std::sort(s.begin(), s.end());
    s.insert(s.begin(), "<pad>");
    return PhonemeVocabulary(std::move(s));
  }();
  return vocab;
}

int PhonemeVocabulary::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? -1 : it->second;
}

const std::string& PhonemeVocabulary::symbol(int id) const {
  return symbols_.at(static_cast<std::size_t>(id));
}

std::string to_upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void Lexicon::add(const std::string& word, Pronunciation pron) {
  entries_[to_upper(word)].push_back(std::move(pron));
}

bool Lexicon::contains(const std::string& word) const {
  return entries_.count(to_upper(word)) > 0;
}

const std::vector<Lexicon::Pronunciation>* Lexicon::find(const std::string& word) const {
  auto it = entries_.find(to_upper(word));
  return it == entries_.end() ? nullptr : &it->second;
}

Lexicon parse_lexicon(std::istream& in, bool strip_stress) {
  const PhonemeVocabulary& vocab =
      strip_stress ? PhonemeVocabulary::arpabet() : PhonemeVocabulary::arpabet_stressed();
  Lexicon lex;
  std::map<std::string, std::set<int>> seen_variants;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind(";;;", 0) == 0) continue;

    std::istringstream is(line);
    std::string head;
    is >> head;
    if (head.empty()) continue;

    head = to_upper(head);
    int variant = 1;
    std::string word = head;
    auto paren = head.find('(');
    if (paren != std::string::npos) {
      if (head.back() != ')')
        throw ParseError("malformed variant suffix in '" + head + "'", line_no);
      word = head.substr(0, paren);
      std::string num = head.substr(paren + 1, head.size() - paren - 2);
      try {
        variant = std::stoi(num);
      } catch (const std::exception&) {
        throw ParseError("malformed variant index '" + num + "'", line_no);
      }
    }
    if (word.empty()) throw ParseError("empty word", line_no);
    if (!seen_variants[word].insert(variant).second)
      throw ParseError("duplicate variant (" + std::to_string(variant) + ") for " + word,
                       line_no);

    Lexicon::Pronunciation pron;
    std::string sym;
    while (is >> sym) {
      sym = to_upper(sym);
      if (strip_stress && has_stress_digit(sym)) sym.pop_back();
      if (vocab.id(sym) < 0)
        throw ParseError("unknown phoneme symbol '" + sym + "'", line_no);
      pron.push_back(sym);
    }
    if (pron.empty()) throw ParseError("entry for " + word + " has no phonemes", line_no);
    lex.add(word, std::move(pron));
  }
  return lex;
}

void serialize_lexicon(const Lexicon& lex, std::ostream& out) {
  for (const auto& [word, prons] : lex.entries()) {
    for (std::size_t v = 0; v < prons.size(); ++v) {
      out << word;
      if (v > 0) out << "(" << v + 1 << ")";
      for (const std::string& p : prons[v]) out << " " << p;
      out << "\n";
    }
  }
}

Query phonemize(const std::string& word, const Lexicon& lex, const PhonemeVocabulary& vocab) {
  const auto* prons = lex.find(word);
  if (!prons) throw NotInLexicon(word);
  Query q;
  q.text = to_upper(word);
  for (const std::string& sym : prons->front()) {
    int id = vocab.id(sym);
    if (id < 0) throw std::domain_error("phonemize: symbol '" + sym + "' not in vocabulary");
    q.ids.push_back(id);
  }
  return q;
}

Query phonemize_phrase(const std::vector<std::string>& words, const Lexicon& lex,
                       const PhonemeVocabulary& vocab) {
  if (words.empty()) throw std::domain_error("phonemize_phrase: empty word list");
  Query q;
  for (std::size_t i = 0; i < words.size(); ++i) {
    Query w = phonemize(words[i], lex, vocab);
    if (i) q.text += " ";
    q.text += w.text;
    q.ids.insert(q.ids.end(), w.ids.begin(), w.ids.end());
  }
  return q;
}

}  // namespace transpotter
