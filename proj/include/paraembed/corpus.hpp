#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "paraembed/model.hpp"
#include "paraembed/tokenizer.hpp"

namespace paraembed {

struct RawPair {
  std::string src;
  std::string tgt;
  std::optional<double> score;

  friend bool operator==(const RawPair&, const RawPair&) = default;
};

// All bounds are inclusive-keep. Unset optionals disable that filter.
struct FilterConfig {
  std::size_t min_tokens = 0;
  std::size_t max_tokens = std::numeric_limits<std::size_t>::max();
  std::optional<double> min_para_score;
  std::optional<double> max_para_score;
  std::optional<double> max_trigram_overlap;
  bool dedup = false;
  // Pluggable language-ID hook, applied to both sides. Empty passes all.
  std::function<bool(std::string_view)> language_ok;

  bool scores_required() const { return min_para_score.has_value() || max_para_score.has_value(); }
  // Throws std::invalid_argument when bounds are inverted or out of range.
  void validate() const;

  // Paraphrase data: 5..40 tokens, score in [0.4, 1.0], overlap <= 0.7.
  static FilterConfig paranmt();
  // Bitext: 3..100 tokens, dedup, no score or overlap filter.
  static FilterConfig bitext();
};

// Number of maximal non-whitespace runs.
std::size_t whitespace_token_count(std::string_view text);

// |shared unique word trigrams| / |trigrams of the sentence with fewer
// tokens|. On equal token counts the larger of the two unique sets is the
// denominator. 0 when the shorter sentence has fewer than 3 tokens.
double trigram_overlap(std::string_view s1, std::string_view s2);

// Cosine of the two mean-pooled embeddings; 0 for empty encodings.
double paraphrase_score(const EmbeddingModel& model, std::string_view s1, std::string_view s2);

// Streaming form of filter_pairs. Keeps the dedup set across calls.
class PairFilter {
 public:
  // scorer fills missing scores when the score filter is enabled.
  explicit PairFilter(FilterConfig cfg, const EmbeddingModel* scorer = nullptr);

  // May set pair.score. Throws std::runtime_error naming line_no when a
  // required score is missing and no scorer is available.
  bool accept(RawPair& pair, std::size_t line_no);

  std::size_t seen() const { return seen_; }
  std::size_t kept() const { return kept_; }

 private:
  FilterConfig cfg_;
  const EmbeddingModel* scorer_;
  std::unordered_set<std::string> seen_pairs_;
  std::size_t seen_ = 0;
  std::size_t kept_ = 0;
};

// Pairs are expected to be normalized. Line numbers in errors are 1-based
// positions in the input.
std::vector<RawPair> filter_pairs(std::span<const RawPair> pairs, const FilterConfig& cfg,
                                  const EmbeddingModel* scorer = nullptr);

// Seeded Fisher-Yates (see random.hpp for the generator contract).
std::vector<RawPair> shuffle_pairs(std::vector<RawPair> pairs, std::uint64_t seed);

// Reads `src<TAB>tgt[<TAB>score]` lines.
class PairReader {
 public:
  explicit PairReader(const std::string& path);
  bool next(RawPair& pair);
  std::size_t line_number() const { return line_no_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

std::vector<RawPair> read_pairs(const std::string& path);

// ---------------------------------------------------------------------------
// SPDS dataset files. Layout (little-endian):
//   "SPDS" | u32 version=1 | u64 count | (count+1) x u64 offsets | records
// Offsets are relative to the start of the records block. Each record is
//   u16 src_len | u16 tgt_len | src_len x u32 | tgt_len x u32

struct Record {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;

  friend bool operator==(const Record&, const Record&) = default;
};

inline constexpr std::size_t kDatasetHeaderBytes = 16;

// Appends records to temporaries and assembles the file on finish().
class DatasetWriter {
 public:
  explicit DatasetWriter(std::filesystem::path path);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void add(std::span<const TokenId> src, std::span<const TokenId> tgt);
  void finish();
  std::uint64_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path records_tmp_;
  std::filesystem::path offsets_tmp_;
  std::ofstream records_;
  std::ofstream offsets_;
  std::uint64_t count_ = 0;
  std::uint64_t bytes_ = 0;
  bool finished_ = false;
};

struct BuildStats {
  std::uint64_t written = 0;
  std::uint64_t skipped_empty = 0;
};

// Encodes each pair; pairs where either side encodes to nothing are skipped
// and counted.
BuildStats build_dataset(std::span<const RawPair> pairs, const Vocabulary& vocab, const std::string& out_path);

// Random-access reader. Each read_record issues positioned reads for one
// index entry and one record, so memory per call is constant and
// concurrent readers are safe.
class DatasetFile {
 public:
  explicit DatasetFile(const std::string& path);
  ~DatasetFile();
  DatasetFile(DatasetFile&& other) noexcept;
  DatasetFile& operator=(DatasetFile&&) = delete;
  DatasetFile(const DatasetFile&) = delete;
  DatasetFile& operator=(const DatasetFile&) = delete;

  std::uint64_t count() const { return count_; }
  const std::string& path() const { return path_; }
  Record read_record(std::uint64_t idx) const;
  void read_record(std::uint64_t idx, Record& out) const;

 private:
  void pread_exact(void* buf, std::size_t n, std::uint64_t offset) const;

  std::string path_;
  int fd_ = -1;
  std::uint64_t count_ = 0;
  std::uint64_t records_start_ = 0;
};

}  // namespace paraembed
