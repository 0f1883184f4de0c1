#include "paraembed/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "paraembed/io.hpp"
#include "paraembed/parallel.hpp"

namespace paraembed {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: sequences differ in length");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  double mean_x = 0.0, mean_y = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    mean_x += dx / n;
    mean_y += dy / n;
    sxx += dx * (xs[i] - mean_x);
    syy += dy * (ys[i] - mean_y);
    sxy += dx * (ys[i] - mean_y);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson: zero variance (constant predictions or gold)");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double eval_sts(const EmbeddingModel& model, const STSDataset& ds) {
  if (ds.pairs.empty()) throw std::invalid_argument("eval_sts: dataset '" + ds.name + "' is empty");
  std::vector<double> predicted(ds.pairs.size());
  std::vector<double> gold(ds.pairs.size());
  parallel_for(ds.pairs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      predicted[i] = score_pair(model, ds.pairs[i].sent1, ds.pairs[i].sent2);
      gold[i] = ds.pairs[i].gold;
    }
  });
  try {
    return pearson(predicted, gold);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("eval_sts on '" + ds.name + "': " + e.what());
  }
}

STSReport eval_sts_suite(const EmbeddingModel& model, std::span<const STSDataset> datasets) {
  STSReport report;
  for (const auto& ds : datasets) report.per_dataset.emplace_back(ds.name, eval_sts(model, ds));
  if (!report.per_dataset.empty()) {
    double sum = 0.0;
    for (const auto& [name, r] : report.per_dataset) sum += r;
    report.mean = sum / static_cast<double>(report.per_dataset.size());
  }
  return report;
}

STSDataset load_sts(const std::string& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open STS file " + path);
  STSDataset ds;
  ds.name = name.empty() ? std::filesystem::path(path).stem().string() : std::move(name);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw FormatError(path + ":" + std::to_string(line_no) + ": expected sent1<TAB>sent2<TAB>gold");
    STSPair p{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), 0.0};
    const std::string_view field = std::string_view(line).substr(t2 + 1);
    const auto res = std::from_chars(field.data(), field.data() + field.size(), p.gold);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !(p.gold >= 0.0 && p.gold <= 5.0)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": gold score must be a number in [0, 5]");
    }
    ds.pairs.push_back(std::move(p));
  }
  if (ds.pairs.empty()) throw FormatError(path + ": no STS pairs");
  return ds;
}

// ---------------------------------------------------------------------------
// Mining

namespace {

std::vector<double> unit_rows(const Matrix& m) {
  std::vector<double> out(m.rows * m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = m.row(i);
    double sq = 0.0;
    for (float x : r) sq += static_cast<double>(x) * x;
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < m.cols; ++k) out[i * m.cols + k] = r[k] * inv;
  }
  return out;
}

}  // namespace

MiningResult mine_embeddings(const Matrix& queries, const Matrix& candidates) {
  if (queries.rows == 0 || candidates.rows == 0) throw std::invalid_argument("mine_bitext: empty dataset");
  if (queries.cols != candidates.cols) throw std::invalid_argument("mine_bitext: dimension mismatch");
  const std::size_t d = queries.cols;
  const auto q = unit_rows(queries);
  const auto c = unit_rows(candidates);

  MiningResult result;
  result.alignment.resize(queries.rows);
  // Block over candidates so a tile of candidate rows stays in cache while
  // each query row is scored against it.
  constexpr std::size_t kTile = 256;
  parallel_for(queries.rows, [&](std::size_t begin, std::size_t end) {
    std::vector<double> best(end - begin, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> arg(end - begin, 0);
    for (std::size_t j0 = 0; j0 < candidates.rows; j0 += kTile) {
      const std::size_t j1 = std::min(candidates.rows, j0 + kTile);
      for (std::size_t i = begin; i < end; ++i) {
        const double* qi = q.data() + i * d;
        for (std::size_t j = j0; j < j1; ++j) {
          const double* cj = c.data() + j * d;
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) s += qi[k] * cj[k];
          if (s > best[i - begin]) {
            best[i - begin] = s;
            arg[i - begin] = j;
          }
        }
      }
    }
    for (std::size_t i = begin; i < end; ++i) result.alignment[i] = arg[i - begin];
  });

  std::size_t errors = 0;
  for (std::size_t i = 0; i < result.alignment.size(); ++i) errors += result.alignment[i] != i;
  result.error_rate = static_cast<double>(errors) / static_cast<double>(result.alignment.size());
  return result;
}

MiningResult mine_bitext(const EmbeddingModel& model, const BitextDataset& ds, MiningDirection direction) {
  if (ds.src.empty() || ds.tgt.empty()) throw std::invalid_argument("mine_bitext: empty dataset");
  if (ds.src.size() != ds.tgt.size()) throw std::invalid_argument("mine_bitext: sides differ in length");
  const Matrix src = embed_batch(model, ds.src, Side::kSource);
  const Matrix tgt = embed_batch(model, ds.tgt, Side::kTarget);
  return direction == MiningDirection::kSourceToTarget ? mine_embeddings(src, tgt) : mine_embeddings(tgt, src);
}

BitextDataset load_bitext(const std::string& src_path, const std::string& tgt_path) {
  auto read_lines = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
    }
    return lines;
  };
  BitextDataset ds{read_lines(src_path), read_lines(tgt_path)};
  if (ds.src.size() != ds.tgt.size()) {
    throw FormatError(src_path + " and " + tgt_path + " differ in line count (" + std::to_string(ds.src.size()) + " vs " +
                      std::to_string(ds.tgt.size()) + ")");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Throughput

BenchReport speed_bench(const EmbeddingModel& model, std::span<const std::vector<TokenId>> encoded,
                        std::size_t batch_size, std::size_t threads) {
  if (batch_size == 0) batch_size = 1;
  if (threads == 0) threads = num_threads();
  BenchReport report;
  report.batch_size = batch_size;
  report.thread_count = threads;
  report.corpus_size = encoded.size();
  if (encoded.empty()) return report;

  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return encoded[a].size() < encoded[b].size(); });
  Matrix out(encoded.size(), model.dim());
  const std::size_t batches = (order.size() + batch_size - 1) / batch_size;
  auto run = [&](std::size_t first_batch, std::size_t last_batch) {
    parallel_for_each_dynamic(
        last_batch - first_batch,
        [&](std::size_t i) {
          const std::size_t lo = (first_batch + i) * batch_size;
          const std::size_t hi = std::min(order.size(), lo + batch_size);
          for (std::size_t k = lo; k < hi; ++k) embed_tokens_into(model, encoded[order[k]], Side::kSource, {}, out.row(order[k]));
        },
        threads);
  };

  run(0, 1);  // warm-up
  const auto start = std::chrono::steady_clock::now();
  run(0, batches);
  const auto stop = std::chrono::steady_clock::now();

  report.seconds = std::chrono::duration<double>(stop - start).count();
  report.sentences_per_second = static_cast<double>(encoded.size()) / std::max(report.seconds, 1e-9);
  double checksum = 0.0;
  for (float x : out.data) checksum += x;
  report.checksum = checksum;
  return report;
}

BenchReport speed_bench(const EmbeddingModel& model, std::span<const std::string> corpus, std::size_t batch_size,
                        std::size_t threads) {
  std::vector<std::vector<TokenId>> encoded(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) encoded[i] = model.vocab().encode(corpus[i]);
  });
  return speed_bench(model, encoded, batch_size, threads);
}

}  // namespace paraembed
