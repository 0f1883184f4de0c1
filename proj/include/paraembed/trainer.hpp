#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "paraembed/corpus.hpp"
#include "paraembed/model.hpp"

namespace paraembed {

// Where hard negatives come from: the target side only (bitext) or every
// sentence in the mega-batch (paraphrase data).
enum class NegativePool { kOpposingSide, kAnySide };

struct TrainConfig {
  std::size_t dim = EmbeddingModel::kDefaultDim;
  std::size_t batch_size = 128;
  double margin = 0.4;
  // Minibatches processed before the mega-batch size grows by one.
  std::size_t anneal_rate = 150;
  // Cap on the mega-batch size, in minibatches.
  std::size_t mega_batch = 100;
  double lr = 0.001;
  std::size_t epochs = 25;
  // Probability of dropping each subword before averaging (training only).
  double dropout = 0.0;
  std::uint64_t seed = 1;
  bool bidirectional = false;
  bool tied = true;
  NegativePool negative_pool = NegativePool::kAnySide;

  void validate() const;
};

// min(1 + floor(step / anneal_rate), mega_batch)
std::size_t mega_batch_size_at(std::uint64_t step, const TrainConfig& cfg);

// Pairs of one mega-batch with their embeddings under the current (dropout
// free) parameters.
struct MegaBatch {
  std::vector<Record> pairs;
  Matrix src_embeds;
  Matrix tgt_embeds;

  std::size_t size() const { return pairs.size(); }
};

// Candidate indices. For a source query: j < n is target j, j >= n is
// source j - n (any-side pool only). For a target query (reverse
// direction): j < n is source j, j >= n is target j - n.
struct NegativeSelection {
  std::vector<std::size_t> neg_index;
  std::vector<std::size_t> reverse_neg_index;  // filled when bidirectional
};

// argmax cosine over the pool, excluding the query's own pair partner and
// the query itself; ties go to the lowest candidate index. Throws
// std::invalid_argument when the pool is empty after exclusions.
NegativeSelection select_negatives(const MegaBatch& mb, const TrainConfig& cfg);

// max(0, margin - pos + neg)
inline double margin_loss(double f_pos, double f_neg, double margin) {
  const double v = margin - f_pos + f_neg;
  return v > 0.0 ? v : 0.0;
}

// Gradient rows keyed by flat parameter row (target-table rows are offset
// by vocab_size when untied). Rows appear in first-touch order.
class SparseGradient {
 public:
  SparseGradient(std::size_t num_rows, std::size_t dim);

  std::span<double> row_for(std::size_t row);
  const std::vector<std::uint32_t>& rows() const { return rows_; }
  std::span<const double> values(std::size_t k) const { return {values_.data() + k * dim_, dim_}; }
  std::span<double> values(std::size_t k) { return {values_.data() + k * dim_, dim_}; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return rows_.empty(); }
  void clear();
  // Zero vector for rows that were never touched.
  std::vector<double> dense_row(std::size_t row) const;

 private:
  std::size_t dim_;
  std::vector<std::int32_t> slot_;
  std::vector<std::uint32_t> rows_;
  std::vector<double> values_;
};

// Read-only view of a parameter block laid out like EmbeddingModel's.
template <class Real>
struct ParamView {
  std::span<const Real> params;
  std::size_t vocab_size;
  std::size_t dim;
  bool tied;

  std::size_t row_index(TokenId id, Side side) const {
    return (tied || side == Side::kSource) ? id : vocab_size + id;
  }
};

struct TokenSeq {
  std::span<const TokenId> ids;
  Side side = Side::kSource;
  std::span<const std::uint8_t> keep;  // empty = keep all
};

// One training example: anchor s, its positive t and the selected negative
// t'. reverse_negative (s' for t) adds the mirrored hinge.
struct Triplet {
  TokenSeq anchor;
  TokenSeq positive;
  TokenSeq negative;
  std::optional<TokenSeq> reverse_negative;
};

struct LossStats {
  double loss = 0.0;
  std::size_t active = 0;
  std::size_t terms = 0;
};

// Sums the hinge losses of the triplets and, when grad is non-null, adds
// their gradient with respect to every participating row. Each kept token
// receives 1/(kept count) of its sentence-embedding gradient. Inactive
// hinges contribute nothing.
template <class Real>
LossStats loss_gradients(const ParamView<Real>& params, std::span<const Triplet> batch, double margin,
                         SparseGradient* grad);

LossStats loss_gradients(const EmbeddingModel& model, std::span<const Triplet> batch, double margin,
                         SparseGradient* grad);

// Per-row Adam moments, updated lazily: rows without gradient keep their
// parameters and moments untouched.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;

  explicit AdamState(std::size_t num_params) : m(num_params, 0.0f), v(num_params, 0.0f) {}
};

// One bias-corrected Adam update on the rows present in grads. Throws
// std::domain_error naming the first row with a non-finite entry, before
// modifying anything.
void adam_step(AdamState& state, std::span<float> params, const SparseGradient& grads, double lr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double active_fraction = 0.0;
  std::size_t mega_batch_size = 0;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<EpochMetrics> metrics;
};

// Full training loop over an on-disk dataset. Minibatch blocks are visited in
// a seeded order each epoch; a trailing partial block is dropped.
TrainResult train(const TrainConfig& cfg, const DatasetFile& data, const Vocabulary& vocab,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Starts from an existing model instead of a fresh initialization.
TrainResult train_from(EmbeddingModel model, const TrainConfig& cfg, const DatasetFile& data,
                       const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace paraembed
