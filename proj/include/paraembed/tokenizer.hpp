#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace paraembed {

using TokenId = std::uint32_t;

// Lowercases (ASCII, Latin-1, Latin Extended-A/Additional, Greek, Cyrillic,
// Armenian and fullwidth Latin), trims, and collapses ASCII whitespace runs
// to a single space. Invalid UTF-8 bytes pass through unchanged.
std::string normalize(std::string_view text);

// Splits UTF-8 into code-point substrings. Invalid bytes become one-byte pieces.
std::vector<std::string> utf8_chars(std::string_view text);

// Subword inventory plus ordered merge rules. Immutable once built; encode
// and decode are const and safe to call from many threads.
class Vocabulary {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kUnkId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  // U+2581, prefixed to word-initial pieces.
  static constexpr std::string_view kWordBoundary = "\xE2\x96\x81";

  struct Merge {
    TokenId left;
    TokenId right;
    TokenId result;
  };

  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  // kUnkId for unknown strings.
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<Merge>& merges() const { return merges_; }

  std::vector<TokenId> encode(std::string_view text) const;
  // Throws std::out_of_range for ids >= size().
  std::string decode(std::span<const TokenId> ids) const;

  // SPVOC text format; see README.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.serialize() == b.serialize();
  }

  // Building blocks used by train_vocab and deserialize.
  TokenId add_token(std::string token);
  void add_merge(TokenId left, TokenId right);

 private:
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<Merge> merges_;
  // (left << 32 | right) -> ascending merge ranks
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> merge_ranks_;
};

// Greedy byte-pair-style merge training on normalized text. Merges the most
// frequent adjacent pair (ties: smallest concatenation, then smallest left
// piece) until the vocabulary reaches target_size or no pair occurs twice.
// Throws std::invalid_argument on an empty corpus or an infeasible size.
Vocabulary train_vocab(std::span<const std::string> corpus, std::size_t target_size);

}  // namespace paraembed
