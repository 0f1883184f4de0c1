#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "paraembed/io.hpp"
#include "paraembed/random.hpp"
#include "paraembed/synthetic.hpp"
#include "paraembed/tokenizer.hpp"

using namespace paraembed;

namespace {

struct LowerCase {
  char32_t cp;
  const char* lowered;
};

const LowerCase kLowerReference[] = {
#include "lowercase_reference.inc"
};

std::string utf8(char32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

const std::vector<std::string> kEnglish{"the quick brown fox jumps over the lazy dog",
                                        "a lazy dog sleeps in the sun all day",
                                        "quick thinking saves the day, again and again"};

}  // namespace

TEST_CASE("normalize lowercases, trims and collapses whitespace") {
  CHECK(normalize("This  is a Test.") == "this is a test.");
  CHECK(normalize("") == "");
  CHECK(normalize("   \t\n ") == "");
  CHECK(normalize("\xC3\x9C" "BER  uns") == "\xC3\xBC" "ber uns");
  CHECK(normalize("  Leading and trailing\t") == "leading and trailing");
  CHECK(normalize("a\r\nb") == "a b");
}

TEST_CASE("normalize agrees with the reference lowercase table") {
  std::size_t mismatches = 0;
  for (const auto& [cp, lowered] : kLowerReference) {
    if (normalize(utf8(cp)) != lowered) {
      ++mismatches;
      MESSAGE("U+" << std::hex << static_cast<unsigned>(cp));
    }
  }
  CHECK(mismatches == 0);
  CHECK(std::size(kLowerReference) > 1000);
}

TEST_CASE("normalize passes invalid UTF-8 through") {
  const std::string bad = "ab\xFF\xC3";
  CHECK(normalize(bad) == bad);
  CHECK(utf8_chars("a\xFF" "b").size() == 3);
}

TEST_CASE("train_vocab merges the most frequent pair") {
  const std::vector<std::string> corpus{"aaab", "aaac"};
  // characters: marker, a, b, c
  const Vocabulary v = train_vocab(corpus, 4 + 2 + 1);
  CHECK(v.size() == 7);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.contains("aa"));
  CHECK(v.token(v.merges()[0].result) == "aa");

  const auto ids = v.encode("aaab");
  CHECK(std::find(ids.begin(), ids.end(), v.id_of("aa")) != ids.end());
  CHECK(v.decode(ids) == "aaab");
}

TEST_CASE("train_vocab at the character count makes no merges") {
  std::set<std::string> chars{std::string(Vocabulary::kWordBoundary)};
  for (const auto& s : kEnglish) {
    for (const auto& c : utf8_chars(normalize(s))) {
      if (c != " ") chars.insert(c);
    }
  }
  const Vocabulary v = train_vocab(kEnglish, chars.size() + 2);
  CHECK(v.size() == chars.size() + 2);
  CHECK(v.merges().empty());
  for (std::size_t id = 2; id < v.size(); ++id) CHECK(chars.count(v.token(static_cast<TokenId>(id))));
}

TEST_CASE("train_vocab errors") {
  CHECK_THROWS_AS(train_vocab(std::vector<std::string>{}, 100), std::invalid_argument);
  CHECK_THROWS_AS(train_vocab(std::vector<std::string>{"   ", ""}, 100), std::invalid_argument);
  try {
    train_vocab(std::vector<std::string>{"abc"}, 4);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    // marker + a b c + 2 specials
    CHECK(std::string(e.what()).find("minimum feasible size 6") != std::string::npos);
  }
}

TEST_CASE("train_vocab is deterministic") {
  const Vocabulary a = train_vocab(kEnglish, 60);
  const Vocabulary b = train_vocab(kEnglish, 60);
  CHECK(a.serialize() == b.serialize());
  CHECK(a.size() <= 60);
}

TEST_CASE("ids are dense with specials first") {
  const Vocabulary v = train_vocab(kEnglish, 60);
  CHECK(v.token(Vocabulary::kPadId) == "<pad>");
  CHECK(v.token(Vocabulary::kUnkId) == "<unk>");
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id_of(v.token(static_cast<TokenId>(i))) == i);
}

TEST_CASE("every non-special token is reachable from characters by merges") {
  const Vocabulary v = train_vocab(kEnglish, 80);
  std::set<TokenId> reachable;
  for (std::size_t id = 2; id < v.size(); ++id) {
    if (utf8_chars(v.token(static_cast<TokenId>(id))).size() == 1) reachable.insert(static_cast<TokenId>(id));
  }
  for (const auto& m : v.merges()) {
    CHECK(reachable.count(m.left));
    CHECK(reachable.count(m.right));
    CHECK(v.token(m.result) == v.token(m.left) + v.token(m.right));
    reachable.insert(m.result);
  }
  CHECK(reachable.size() == v.size() - 2);
}

TEST_CASE("encode edge cases") {
  const Vocabulary v = train_vocab(kEnglish, 60);
  CHECK(v.encode("").empty());
  CHECK(v.encode("   ").empty());
  const auto ids = v.encode("\xE4\xB8\xAD\xE6\x96\x87");
  REQUIRE(!ids.empty());
  // the word-boundary marker is known, the two CJK characters are not
  std::size_t unk = 0;
  for (auto id : ids) unk += id == Vocabulary::kUnkId;
  CHECK(unk == 2);
  const auto xyz = v.encode("\xCE\xA9\xCE\xA9");
  for (std::size_t i = 1; i < xyz.size(); ++i) CHECK(xyz[i] == Vocabulary::kUnkId);
}

TEST_CASE("decode") {
  std::vector<std::string> corpus = kEnglish;
  corpus.push_back("this is a test.");
  const Vocabulary v = train_vocab(corpus, 60);
  CHECK(v.decode(std::vector<TokenId>{}) == "");
  CHECK(v.decode(std::vector<TokenId>{Vocabulary::kUnkId}) == "<unk>");
  CHECK(v.decode(v.encode("this is a test.")) == "this is a test.");
  CHECK_THROWS_AS(v.decode(std::vector<TokenId>{static_cast<TokenId>(v.size())}), std::out_of_range);
}

TEST_CASE("encode applies merges exactly as sequential replay in training order") {
  const auto corpus = make_random_sentences(400, 8, 120, 3);
  const Vocabulary v = train_vocab(corpus, 500);
  for (std::size_t s = 0; s < 60; ++s) {
    std::vector<TokenId> expected;
    const std::string text = normalize(corpus[s]);
    for (std::string_view rest = text; !rest.empty();) {
      const std::size_t sp = rest.find(' ');
      const std::string word = std::string(Vocabulary::kWordBoundary) + std::string(rest.substr(0, sp));
      rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
      std::vector<std::string> pieces = utf8_chars(word);
      for (const auto& m : v.merges()) {
        const std::string& l = v.token(m.left);
        const std::string& r = v.token(m.right);
        std::vector<std::string> next;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
          if (i + 1 < pieces.size() && pieces[i] == l && pieces[i + 1] == r) {
            next.push_back(l + r);
            ++i;
          } else {
            next.push_back(pieces[i]);
          }
        }
        pieces = std::move(next);
      }
      for (const auto& p : pieces) expected.push_back(v.id_of(p));
    }
    CHECK(v.encode(corpus[s]) == expected);
  }
}

TEST_CASE("round trip on in-vocabulary text") {
  const auto corpus = make_random_sentences(300, 10, 200, 8);
  const Vocabulary v = train_vocab(corpus, 300);
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::string s;
    const std::size_t words = uniform_index(rng, 6);
    for (std::size_t w = 0; w < words; ++w) s += (w ? "  " : " ") + corpus[uniform_index(rng, corpus.size())].substr(0, 5);
    CHECK(v.decode(v.encode(s)) == normalize(s));
  }
}

TEST_CASE("monotone coverage: a bigger vocabulary never lengthens training sentences") {
  const auto corpus = make_random_sentences(300, 10, 150, 21);
  std::vector<std::size_t> prev(corpus.size(), SIZE_MAX);
  for (std::size_t size : {40, 80, 160, 320, 640}) {
    const Vocabulary v = train_vocab(corpus, size);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto n = v.encode(corpus[i]).size();
      CHECK(n <= prev[i]);
      prev[i] = n;
    }
  }
}

TEST_CASE("encode length bounds") {
  const auto corpus = make_random_sentences(200, 9, 100, 4);
  const Vocabulary v = train_vocab(corpus, 200);
  for (const auto& s : corpus) {
    const std::string n = normalize(s);
    const std::size_t words = static_cast<std::size_t>(std::count(n.begin(), n.end(), ' ')) + 1;
    const std::size_t chars = utf8_chars(n).size() - (words - 1);
    const auto ids = v.encode(s);
    CHECK(ids.size() <= chars + words);
    CHECK(ids.size() >= words);
  }
}

TEST_CASE("serialize and load round trip") {
  const Vocabulary v = train_vocab(kEnglish, 70);
  const std::string text = v.serialize();
  CHECK(text.rfind("SPVOC 1 " + std::to_string(v.size()) + "\n", 0) == 0);
  CHECK(text.find("\n#MERGES\n") != std::string::npos);
  const Vocabulary back = Vocabulary::deserialize(text);
  CHECK(back == v);
  CHECK(back.encode(kEnglish[0]) == v.encode(kEnglish[0]));

  const auto path = std::filesystem::temp_directory_path() / "paraembed_vocab_test.spvoc";
  v.save(path.string());
  CHECK(Vocabulary::load(path.string()) == v);
  std::filesystem::remove(path);
}

TEST_CASE("deserialize rejects malformed input") {
  const std::string good = train_vocab(kEnglish, 50).serialize();
  CHECK_THROWS_AS(Vocabulary::deserialize(""), FormatError);
  CHECK_THROWS_AS(Vocabulary::deserialize("SPVOC 2 3\n"), FormatError);
  CHECK_THROWS_AS(Vocabulary::deserialize(good.substr(0, good.size() / 3)), FormatError);
  std::string no_merges = good.substr(0, good.find("#MERGES"));
  CHECK_THROWS_AS(Vocabulary::deserialize(no_merges), FormatError);
  CHECK_THROWS_AS(Vocabulary::load("/nonexistent/vocab.spvoc"), std::exception);
}
