#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "transpotter/phonetics.hpp"

using namespace transpotter;

namespace {

const char* kFixture =
    ";;; test fixture in CMU dictionary format\n"
    "A  AH0\n"
    "CAT  K AE1 T\n"
    "READ  R EH1 D\n"
    "READ(2)  R IY1 D\n"
    "THAT'S  DH AE1 T S\n"
    "THE  DH AH0\n"
    "\n";

Lexicon fixture() {
  std::istringstream in(kFixture);
  return parse_lexicon(in);
}

std::vector<std::string> decode(const Query& q) {
  const auto& pv = PhonemeVocabulary::arpabet();
  std::vector<std::string> out;
  for (int id : q.ids) out.push_back(pv.symbol(id));
  return out;
}

}  // namespace

TEST_CASE("phoneme vocabulary: PAD at 0, 39 symbols, lexicographic ids") {
  const auto& pv = PhonemeVocabulary::arpabet();
  CHECK(pv.size() == 40);  // 39 phonemes + PAD
  CHECK(pv.symbol(PhonemeVocabulary::kPad) == "<pad>");
  CHECK(pv.id("AA") == 1);  // first symbol after PAD
  CHECK(pv.id("ZH") == 39);
  CHECK(pv.id("AE") < pv.id("AH"));
  CHECK(pv.id("nope") == -1);
  const auto& pvs = PhonemeVocabulary::arpabet_stressed();
  CHECK(pvs.size() > pv.size());
  CHECK(pvs.id("AE1") > 0);
}

TEST_CASE("parse_lexicon: comments, variants, stress stripping") {
  Lexicon lex = fixture();
  CHECK(lex.word_count() == 5);
  CHECK(lex.contains("CAT"));
  CHECK(lex.contains("cat"));  // case-insensitive
  CHECK_FALSE(lex.contains(";;;"));

  const auto* cat = lex.find("CAT");
  REQUIRE(cat != nullptr);
  REQUIRE(cat->size() == 1);
  CHECK((*cat)[0] == Lexicon::Pronunciation{"K", "AE", "T"});

  const auto* read = lex.find("READ");
  REQUIRE(read != nullptr);
  REQUIRE(read->size() == 2);
  CHECK((*read)[0] == Lexicon::Pronunciation{"R", "EH", "D"});
  CHECK((*read)[1] == Lexicon::Pronunciation{"R", "IY", "D"});

  const auto* thats = lex.find("THAT'S");
  REQUIRE(thats != nullptr);
  CHECK((*thats)[0] == Lexicon::Pronunciation{"DH", "AE", "T", "S"});
}

TEST_CASE("parse_lexicon rejects unknown symbols and duplicate variants") {
  {
    std::istringstream in("FOO  K QX T\n");
    CHECK_THROWS_AS(parse_lexicon(in), ParseError);
  }
  {
    std::istringstream in("FOO  K T\nFOO  K AE T\n");
    CHECK_THROWS_AS(parse_lexicon(in), ParseError);
  }
  {
    std::istringstream in("FOO  K T\nFOO(2)  K AE T\nFOO(2)  T\n");
    CHECK_THROWS_AS(parse_lexicon(in), ParseError);
  }
  {
    // Parse errors carry the 1-based line number.
    std::istringstream in(";;; ok\nBAD  QX\n");
    try {
      parse_lexicon(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 2);
    }
  }
}

TEST_CASE("parse_lexicon accepts CRLF input") {
  std::istringstream in("CAT  K AE1 T\r\nTHE  DH AH0\r\n");
  Lexicon lex = parse_lexicon(in);
  CHECK(lex.word_count() == 2);
  CHECK((*lex.find("CAT"))[0] == Lexicon::Pronunciation{"K", "AE", "T"});
}

TEST_CASE("phonemize: first pronunciation, case fold, OOV") {
  Lexicon lex = fixture();
  Query q = phonemize("cat", lex);
  CHECK(decode(q) == std::vector<std::string>{"K", "AE", "T"});
  CHECK(q.length() == 3);
  CHECK(q.text == "CAT");  // canonical uppercase form

  Query upper = phonemize("CAT", lex);
  CHECK(upper.ids == q.ids);

  // READ has two entries; the headword entry wins.
  CHECK(decode(phonemize("read", lex)) == std::vector<std::string>{"R", "EH", "D"});

  CHECK_THROWS_AS(phonemize("zzqx", lex), NotInLexicon);
  for (int id : q.ids) CHECK(id != PhonemeVocabulary::kPad);
}

TEST_CASE("phonemize_phrase concatenates first pronunciations") {
  Lexicon lex = fixture();
  Query a = phonemize_phrase({"a"}, lex);
  CHECK(decode(a) == std::vector<std::string>{"AH"});
  CHECK(a.ids == phonemize("a", lex).ids);

  Query tc = phonemize_phrase({"the", "cat"}, lex);
  CHECK(decode(tc) == std::vector<std::string>{"DH", "AH", "K", "AE", "T"});
  CHECK(tc.length() == 5);

  CHECK_THROWS_AS(phonemize_phrase({"cat", "zzqx"}, lex), NotInLexicon);
  CHECK_THROWS_AS(phonemize_phrase({}, lex), std::domain_error);
}

TEST_CASE("lexicon round-trips through serialization") {
  Lexicon lex = fixture();
  std::ostringstream out;
  serialize_lexicon(lex, out);
  std::istringstream in(out.str());
  Lexicon again = parse_lexicon(in);
  CHECK(again == lex);

  // Second round-trip is byte-identical.
  std::ostringstream out2;
  serialize_lexicon(again, out2);
  CHECK(out2.str() == out.str());
}
