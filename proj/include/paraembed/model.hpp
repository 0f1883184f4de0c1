#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paraembed/tokenizer.hpp"

namespace paraembed {

enum class Side { kSource, kTarget };

// Row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

using SentenceEmbedding = std::vector<float>;

// The averaging encoder: a V x d embedding table (two when untied) whose
// mean-pooled rows are sentence embeddings. The table is the whole model.
class EmbeddingModel {
 public:
  static constexpr std::size_t kDefaultDim = 1024;

  // Zero-initialized parameters.
  EmbeddingModel(Vocabulary vocab, std::size_t dim, bool tied = true);

  // Uniform in [-0.1/sqrt(d), 0.1/sqrt(d)] from a seeded generator.
  static EmbeddingModel initialized(Vocabulary vocab, std::size_t dim, std::uint64_t seed, bool tied = true);

  const Vocabulary& vocab() const { return *vocab_; }
  std::size_t vocab_size() const { return vocab_->size(); }
  std::size_t dim() const { return dim_; }
  bool tied() const { return tied_; }

  // Parameter block: vocab_size rows for the source table followed by
  // vocab_size rows for the target table when untied.
  std::span<float> parameters() { return params_; }
  std::span<const float> parameters() const { return params_; }
  std::size_t num_tables() const { return tied_ ? 1 : 2; }

  std::span<const float> row(TokenId id, Side side = Side::kSource) const;
  std::span<float> mutable_row(TokenId id, Side side = Side::kSource);

  friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b);

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::size_t dim_;
  bool tied_;
  std::vector<float> params_;
};

// Mean of the rows for ids whose keep flag is set. An all-dropped mask is
// ignored; empty ids give the zero vector. Throws std::out_of_range on a bad id.
SentenceEmbedding embed_tokens(const EmbeddingModel& model, std::span<const TokenId> ids,
                               Side side = Side::kSource, std::span<const std::uint8_t> keep = {});

// Writes the same mean into out (size dim) without allocating.
void embed_tokens_into(const EmbeddingModel& model, std::span<const TokenId> ids, Side side,
                       std::span<const std::uint8_t> keep, std::span<float> out);

// u.v / (|u||v|), accumulated in double; 0 when either norm is 0.
double cosine(std::span<const float> u, std::span<const float> v);

// cos(g(s; source table), g(t; target table)).
double score_pair(const EmbeddingModel& model, std::string_view s, std::string_view t);

// Row i is the embedding of sentences[i]. Sentences are encoded, grouped into
// length-sorted batches of batch_size and embedded in parallel; rows are
// independent of batch_size and thread count.
Matrix embed_batch(const EmbeddingModel& model, std::span<const std::string> sentences,
                   Side side = Side::kSource, std::size_t batch_size = 64);

// Same for pre-encoded sentences.
Matrix embed_encoded(const EmbeddingModel& model, std::span<const std::vector<TokenId>> encoded,
                     Side side = Side::kSource, std::size_t batch_size = 64);

// SPPE binary format.
std::string serialize_model(const EmbeddingModel& model);
EmbeddingModel deserialize_model(std::string_view bytes);
void save_model(const EmbeddingModel& model, const std::string& path);
EmbeddingModel load_model(const std::string& path);

}  // namespace paraembed
