#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "paraembed/model.hpp"

namespace paraembed {

struct STSPair {
  std::string sent1;
  std::string sent2;
  double gold = 0.0;
};

struct STSDataset {
  std::string name;
  std::vector<STSPair> pairs;
};

struct BitextDataset {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
};

// Sample Pearson correlation, computed with a one-pass co-moment update.
// Throws std::invalid_argument on length mismatch, n < 2 or zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson r between model cosines and gold scores.
double eval_sts(const EmbeddingModel& model, const STSDataset& ds);

struct STSReport {
  std::vector<std::pair<std::string, double>> per_dataset;
  double mean = 0.0;  // unweighted over datasets
};
STSReport eval_sts_suite(const EmbeddingModel& model, std::span<const STSDataset> datasets);

// `sent1<TAB>sent2<TAB>gold` with gold in [0, 5]. name defaults to the file stem.
STSDataset load_sts(const std::string& path, std::string name = {});

enum class MiningDirection { kSourceToTarget, kTargetToSource };

struct MiningResult {
  std::vector<std::size_t> alignment;  // nearest neighbour per query
  double error_rate = 0.0;
};

// For each query, the argmax-cosine sentence on the other side (ties to the
// lowest index). Rows are unit-normalized once and compared by dot product.
MiningResult mine_bitext(const EmbeddingModel& model, const BitextDataset& ds, MiningDirection direction);

// Same search over precomputed embeddings; the query row i is aligned to row i.
MiningResult mine_embeddings(const Matrix& queries, const Matrix& candidates);

// Two aligned files, one sentence per line.
BitextDataset load_bitext(const std::string& src_path, const std::string& tgt_path);

struct BenchReport {
  double sentences_per_second = 0.0;
  double seconds = 0.0;
  std::size_t batch_size = 0;
  std::size_t thread_count = 0;
  std::size_t corpus_size = 0;
  double checksum = 0.0;  // sum of all embedding entries
};

// Times length-sorted, batched embedding of pre-encoded sentences. Encoding
// happens before the clock starts; one batch is embedded untimed as warm-up.
BenchReport speed_bench(const EmbeddingModel& model, std::span<const std::vector<TokenId>> encoded,
                        std::size_t batch_size = 64, std::size_t threads = 1);
BenchReport speed_bench(const EmbeddingModel& model, std::span<const std::string> corpus,
                        std::size_t batch_size = 64, std::size_t threads = 1);

}  // namespace paraembed
