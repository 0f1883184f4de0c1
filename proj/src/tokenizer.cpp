#include "paraembed/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "paraembed/io.hpp"

namespace paraembed {

namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Length of the UTF-8 sequence starting at text[i], or 1 for invalid bytes.
std::size_t utf8_length(std::string_view text, std::size_t i) {
  const auto lead = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  if (lead >= 0xF0 && lead <= 0xF4) len = 4;
  else if (lead >= 0xE0) len = 3;
  else if (lead >= 0xC2 && lead <= 0xDF) len = 2;
  if (lead >= 0xF5 || (lead >= 0x80 && lead < 0xC2)) return 1;
  if (i + len > text.size()) return 1;
  for (std::size_t k = 1; k < len; ++k) {
    if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) return 1;
  }
  return len;
}

char32_t decode_utf8(std::string_view s) {
  const auto b = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[k])); };
  switch (s.size()) {
    case 1: return b(0);
    case 2: return ((b(0) & 0x1F) << 6) | (b(1) & 0x3F);
    case 3: return ((b(0) & 0x0F) << 12) | ((b(1) & 0x3F) << 6) | (b(2) & 0x3F);
    default: return ((b(0) & 0x07) << 18) | ((b(1) & 0x3F) << 12) | ((b(2) & 0x3F) << 6) | (b(3) & 0x3F);
  }
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool in(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

// Simple lowercase mapping for the scripts listed in the header. Matches the
// Unicode default case mapping for every code point it changes.
char32_t lower_codepoint(char32_t cp) {
  if (in(cp, 'A', 'Z')) return cp + 32;
  if (cp < 0xC0) return cp;
  if (in(cp, 0xC0, 0xDE) && cp != 0xD7) return cp + 32;
  if (cp < 0x100) return cp;
  if (in(cp, 0x100, 0x12F) || in(cp, 0x132, 0x137) || in(cp, 0x14A, 0x177)) return (cp % 2 == 0) ? cp + 1 : cp;
  if (in(cp, 0x139, 0x148) || in(cp, 0x179, 0x17E)) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp == 0x178) return 0xFF;
  if (cp == 0x370 || cp == 0x372 || cp == 0x376) return cp + 1;
  if (cp == 0x37F) return 0x3F3;
  if (cp == 0x386) return 0x3AC;
  if (in(cp, 0x388, 0x38A)) return cp + 37;
  if (cp == 0x38C) return 0x3CC;
  if (in(cp, 0x38E, 0x38F)) return cp + 63;
  if (in(cp, 0x391, 0x3A1) || in(cp, 0x3A3, 0x3AB)) return cp + 32;
  if (cp == 0x3CF) return 0x3D7;
  if (in(cp, 0x3D8, 0x3EF)) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp == 0x3F4) return 0x3B8;
  if (cp == 0x3F7 || cp == 0x3FA) return cp + 1;
  if (cp == 0x3F9) return 0x3F2;
  if (in(cp, 0x3FD, 0x3FF)) return cp - 130;
  if (in(cp, 0x400, 0x40F)) return cp + 80;
  if (in(cp, 0x410, 0x42F)) return cp + 32;
  if (in(cp, 0x460, 0x481) || in(cp, 0x48A, 0x4BF) || in(cp, 0x4D0, 0x52F)) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp == 0x4C0) return 0x4CF;
  if (in(cp, 0x4C1, 0x4CE)) return (cp % 2 == 1) ? cp + 1 : cp;
  if (in(cp, 0x531, 0x556)) return cp + 48;
  if (in(cp, 0x1E00, 0x1E95) || in(cp, 0x1EA0, 0x1EFF)) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp == 0x1E9E) return 0xDF;
  if (in(cp, 0xFF21, 0xFF3A)) return cp + 32;
  return cp;
}

std::uint64_t pair_key(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(left) << 32) | right;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t len = utf8_length(text, i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      pending_space = !out.empty();
      ++i;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    const std::size_t len = utf8_length(text, i);
    if (len == 1) {
      out.push_back(c < 0x80 ? static_cast<char>(lower_codepoint(c)) : static_cast<char>(c));
    } else {
      const char32_t cp = decode_utf8(text.substr(i, len));
      if (cp == 0x130) {
        // Capital dotted I lowercases to i + combining dot above.
        out.push_back('i');
        append_utf8(out, 0x307);
      } else {
        append_utf8(out, lower_codepoint(cp));
      }
    }
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  add_token(std::string(kPadToken));
  add_token(std::string(kUnkToken));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("token id " + std::to_string(id) + " >= vocabulary size " + std::to_string(tokens_.size()));
  return tokens_[id];
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

TokenId Vocabulary::add_token(std::string token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  token_to_id_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

void Vocabulary::add_merge(TokenId left, TokenId right) {
  const TokenId result = add_token(token(left) + token(right));
  merge_ranks_[pair_key(left, right)].push_back(static_cast<std::uint32_t>(merges_.size()));
  merges_.push_back({left, right, result});
}

void Vocabulary::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  std::vector<TokenId> pieces;
  pieces.push_back(id_of(kWordBoundary));
  for (std::size_t i = 0; i < word.size();) {
    const std::size_t len = utf8_length(word, i);
    pieces.push_back(id_of(word.substr(i, len)));
    i += len;
  }

  // Equivalent to applying every merge in training order, left to right:
  // repeatedly apply the lowest-ranked merge that ranks after the last one
  // applied. Pairs created by a merge always rank later than it, except when
  // the same string was produced by an earlier rule, which the floor skips.
  // A pair can carry several ranks when its result string was re-derived.
  std::int64_t floor = -1;
  while (pieces.size() > 1) {
    std::uint32_t best = UINT32_MAX;
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
      auto it = merge_ranks_.find(pair_key(pieces[i], pieces[i + 1]));
      if (it == merge_ranks_.end()) continue;
      for (std::uint32_t rank : it->second) {
        if (static_cast<std::int64_t>(rank) > floor) {
          best = std::min(best, rank);
          break;
        }
      }
    }
    if (best == UINT32_MAX) break;
    const Merge& m = merges_[best];
    std::size_t w = 0;
    for (std::size_t r = 0; r < pieces.size(); ++r) {
      if (r + 1 < pieces.size() && pieces[r] == m.left && pieces[r + 1] == m.right) {
        pieces[w++] = m.result;
        ++r;
      } else {
        pieces[w++] = pieces[r];
      }
    }
    pieces.resize(w);
    floor = best;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  const std::string norm = normalize(text);
  std::vector<TokenId> out;
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    encode_word(std::string_view(norm).substr(start, end - start), out);
    start = end + 1;
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPadId) continue;
    const std::string& piece = token(id);
    std::size_t pos = 0;
    while (true) {
      const std::size_t hit = piece.find(kWordBoundary, pos);
      out.append(piece, pos, hit == std::string::npos ? std::string::npos : hit - pos);
      if (hit == std::string::npos) break;
      out.push_back(' ');
      pos = hit + kWordBoundary.size();
    }
  }
  if (!out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out = "SPVOC 1 " + std::to_string(tokens_.size()) + "\n";
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  out += "#MERGES\n";
  for (const auto& m : merges_) {
    out += tokens_[m.left];
    out += '\t';
    out += tokens_[m.right];
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("vocabulary: empty input");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(header >> magic >> version >> count) || magic != "SPVOC") throw FormatError("vocabulary: bad header '" + line + "'");
  if (version != 1) throw FormatError("vocabulary: unsupported version " + std::to_string(version));
  if (count < 2) throw FormatError("vocabulary: size " + std::to_string(count) + " lacks special tokens");

  std::vector<std::string> listed;
  listed.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw FormatError("vocabulary: truncated token list at entry " + std::to_string(i));
    listed.push_back(line);
  }
  if (listed[kPadId] != kPadToken || listed[kUnkId] != kUnkToken) throw FormatError("vocabulary: special tokens missing");
  if (!std::getline(in, line) || line != "#MERGES") throw FormatError("vocabulary: missing #MERGES section");

  // Tokens that are not produced by a merge are base characters and come
  // first in the listed order; merge results follow in merge order.
  std::vector<std::pair<std::string, std::string>> rules;
  std::set<std::string> produced;
  while (std::getline(in, line)) {
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("vocabulary: malformed merge line '" + line + "'");
    rules.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    produced.insert(rules.back().first + rules.back().second);
  }

  Vocabulary vocab;
  for (std::size_t i = 2; i < listed.size(); ++i) {
    if (!produced.count(listed[i])) vocab.add_token(listed[i]);
  }
  for (const auto& [left, right] : rules) {
    if (!vocab.contains(left) || !vocab.contains(right)) throw FormatError("vocabulary: merge references unknown piece '" + left + "' / '" + right + "'");
    vocab.add_merge(vocab.id_of(left), vocab.id_of(right));
  }
  if (vocab.tokens_ != listed) throw FormatError("vocabulary: token order inconsistent with merges");
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  AtomicOutputFile out(path);
  out.stream() << serialize();
  out.commit();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct WordEntry {
  std::vector<TokenId> symbols;
  std::uint64_t freq;
};

class PairQueue {
 public:
  explicit PairQueue(const Vocabulary& vocab) : vocab_(vocab) {}

  void adjust(std::uint64_t key, std::int64_t delta) {
    if (delta == 0) return;
    auto& count = counts_[key];
    if (count > 0) order_.erase(entry(key, count));
    count = static_cast<std::uint64_t>(static_cast<std::int64_t>(count) + delta);
    if (count > 0) order_.insert(entry(key, count));
  }

  // Highest count; ties by concatenated string, then left piece.
  bool top(std::uint64_t& key, std::uint64_t& count) const {
    if (order_.empty()) return false;
    const auto& e = *order_.begin();
    key = std::get<3>(e);
    count = static_cast<std::uint64_t>(-std::get<0>(e));
    return true;
  }

 private:
  using Entry = std::tuple<std::int64_t, std::string, std::string, std::uint64_t>;

  Entry entry(std::uint64_t key, std::uint64_t count) const {
    const auto& left = vocab_.token(static_cast<TokenId>(key >> 32));
    const auto& right = vocab_.token(static_cast<TokenId>(key & 0xFFFFFFFFu));
    return {-static_cast<std::int64_t>(count), left + right, left, key};
  }

  const Vocabulary& vocab_;
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
  std::set<Entry> order_;
};

}  // namespace

Vocabulary train_vocab(std::span<const std::string> corpus, std::size_t target_size) {
  std::map<std::string, std::uint64_t> word_freq;
  for (const auto& line : corpus) {
    const std::string norm = normalize(line);
    std::size_t start = 0;
    while (start < norm.size()) {
      std::size_t end = norm.find(' ', start);
      if (end == std::string::npos) end = norm.size();
      ++word_freq[std::string(Vocabulary::kWordBoundary) + norm.substr(start, end - start)];
      start = end + 1;
    }
  }
  if (word_freq.empty()) throw std::invalid_argument("train_vocab: corpus is empty after normalization");

  std::set<std::string> chars;
  for (const auto& [word, freq] : word_freq) {
    for (auto& c : utf8_chars(word)) chars.insert(std::move(c));
  }
  const std::size_t minimum = chars.size() + 2;
  if (target_size < minimum) {
    throw std::invalid_argument("train_vocab: target size " + std::to_string(target_size) +
                                " is below the minimum feasible size " + std::to_string(minimum) +
                                " (distinct characters + 2 specials)");
  }

  Vocabulary vocab;
  for (const auto& c : chars) vocab.add_token(c);

  std::vector<WordEntry> words;
  words.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    WordEntry w{{}, freq};
    for (const auto& c : utf8_chars(word)) w.symbols.push_back(vocab.id_of(c));
    words.push_back(std::move(w));
  }

  PairQueue queue(vocab);
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  auto add_word_pairs = [&](std::uint32_t wi, std::int64_t sign) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      const auto key = pair_key(w.symbols[i], w.symbols[i + 1]);
      queue.adjust(key, sign * static_cast<std::int64_t>(w.freq));
      if (sign > 0) where[key].push_back(wi);
    }
  };
  for (std::uint32_t wi = 0; wi < words.size(); ++wi) add_word_pairs(wi, +1);

  while (vocab.size() < target_size) {
    std::uint64_t key = 0, count = 0;
    if (!queue.top(key, count) || count < 2) break;
    const auto left = static_cast<TokenId>(key >> 32);
    const auto right = static_cast<TokenId>(key & 0xFFFFFFFFu);
    vocab.add_merge(left, right);
    const TokenId merged = vocab.merges().back().result;

    auto affected = std::move(where[key]);
    where.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (std::uint32_t wi : affected) {
      auto& sym = words[wi].symbols;
      bool present = false;
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
        if (sym[i] == left && sym[i + 1] == right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      add_word_pairs(wi, -1);
      std::size_t w = 0;
      for (std::size_t r = 0; r < sym.size(); ++r) {
        if (r + 1 < sym.size() && sym[r] == left && sym[r + 1] == right) {
          sym[w++] = merged;
          ++r;
        } else {
          sym[w++] = sym[r];
        }
      }
      sym.resize(w);
      add_word_pairs(wi, +1);
    }
  }
  return vocab;
}

}  // namespace paraembed
