// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.
//
//   acceptance [--only N[,N...]] [--workdir DIR] [--report FILE]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>

#include "../support/oracles.hpp"
#include "paraembed/corpus.hpp"
#include "paraembed/eval.hpp"
#include "paraembed/parallel.hpp"
#include "paraembed/random.hpp"
#include "paraembed/synthetic.hpp"
#include "paraembed/tools.hpp"
#include "paraembed/trainer.hpp"

namespace fs = std::filesystem;
using namespace paraembed;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path g_workdir;

// ---------------------------------------------------------------------------
// 1. gradients against central differences

struct GradInstance {
  std::size_t vocab, dim;
  bool tied;
  std::vector<double> params;
  std::vector<std::vector<TokenId>> seqs;
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<Triplet> batch;
};

GradInstance random_instance(Rng& rng) {
  GradInstance g;
  g.vocab = 2 + uniform_index(rng, 49);
  g.dim = 1 + uniform_index(rng, 8);
  g.tied = uniform_index(rng, 3) != 0;
  const bool bidirectional = uniform_index(rng, 2) == 0;
  const bool with_masks = uniform_index(rng, 3) == 0;
  const std::size_t batch = 1 + uniform_index(rng, 8);
  g.params.resize((g.tied ? 1 : 2) * g.vocab * g.dim);
  for (auto& x : g.params) x = 2.0 * uniform_unit(rng) - 1.0;

  const std::size_t per = bidirectional ? 4 : 3;
  g.seqs.reserve(batch * per);
  g.masks.reserve(batch * per);
  for (std::size_t k = 0; k < batch * per; ++k) {
    std::vector<TokenId> ids(1 + uniform_index(rng, 6));
    for (auto& id : ids) id = static_cast<TokenId>(uniform_index(rng, g.vocab));
    std::vector<std::uint8_t> keep;
    if (with_masks) {
      keep.resize(ids.size());
      for (auto& b : keep) b = uniform_unit(rng) < 0.7 ? 1 : 0;
    }
    g.seqs.push_back(std::move(ids));
    g.masks.push_back(std::move(keep));
  }
  auto seq = [&](std::size_t k, Side side) { return TokenSeq{g.seqs[k], side, g.masks[k]}; };
  for (std::size_t b = 0; b < batch; ++b) {
    Triplet t;
    t.anchor = seq(b * per, Side::kSource);
    t.positive = seq(b * per + 1, Side::kTarget);
    t.negative = seq(b * per + 2, uniform_index(rng, 2) ? Side::kTarget : Side::kSource);
    if (bidirectional) t.reverse_negative = seq(b * per + 3, uniform_index(rng, 2) ? Side::kTarget : Side::kSource);
    g.batch.push_back(t);
  }
  return g;
}

double loss_at(const GradInstance& g, const std::vector<double>& params) {
  ParamView<double> view{params, g.vocab, g.dim, g.tied};
  return loss_gradients<double>(view, g.batch, 0.4, nullptr).loss;
}

// Smallest distance of any hinge argument to its kink at zero. Finite
// differences straddling the kink measure a different function.
double kink_distance(const GradInstance& g) {
  // With a huge margin every hinge is active, so the loss minus that margin
  // recovers neg - pos for the single triplet.
  constexpr double kBig = 1e6;
  ParamView<double> view{g.params, g.vocab, g.dim, g.tied};
  double closest = 1e300;
  for (const auto& t : g.batch) {
    std::vector<Triplet> one{t};
    one[0].reverse_negative.reset();
    closest = std::min(closest, std::abs(loss_gradients<double>(view, one, kBig, nullptr).loss - kBig + 0.4));
    if (t.reverse_negative) {
      one[0].negative = *t.reverse_negative;
      closest = std::min(closest, std::abs(loss_gradients<double>(view, one, kBig, nullptr).loss - kBig + 0.4));
    }
  }
  return closest;
}

Outcome criterion_gradients() {
  Rng rng(20240601);
  const double h = 1e-4;
  double worst = 0.0;
  std::size_t instances = 0, coords = 0, skipped = 0, active_total = 0;
  while (instances < 150) {
    GradInstance g = random_instance(rng);
    if (kink_distance(g) < 1e-3) {
      ++skipped;
      continue;
    }
    ParamView<double> view{g.params, g.vocab, g.dim, g.tied};
    SparseGradient grad((g.tied ? 1 : 2) * g.vocab, g.dim);
    const LossStats stats = loss_gradients<double>(view, g.batch, 0.4, &grad);
    active_total += stats.active;
    std::vector<double> p = g.params;
    for (std::size_t row = 0; row < (g.tied ? 1 : 2) * g.vocab; ++row) {
      const auto analytic = grad.dense_row(row);
      for (std::size_t k = 0; k < g.dim; ++k) {
        const std::size_t idx = row * g.dim + k;
        const double orig = p[idx];
        p[idx] = orig + h;
        const double up = loss_at(g, p);
        p[idx] = orig - h;
        const double down = loss_at(g, p);
        p[idx] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-3});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / scale);
        ++coords;
      }
    }
    ++instances;
  }
  Outcome o;
  o.pass = worst <= 1e-4 && active_total > 0;
  o.detail = "max relative error " + fmt("%.3e", worst) + " over " + std::to_string(instances) + " instances, " +
             std::to_string(coords) + " coordinates (" + std::to_string(active_total) + " active hinges, " +
             std::to_string(skipped) + " near-kink draws redrawn)";
  return o;
}

// ---------------------------------------------------------------------------
// 2. negative selection against exhaustive search

Matrix random_embeddings(std::size_t n, std::size_t dim, int style, Rng& rng, const Matrix& pool) {
  Matrix m(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    const std::uint64_t pick = uniform_index(rng, 10);
    if (style == 0 || pick < 4) {
      for (auto& x : r) x = static_cast<float>(2.0 * uniform_unit(rng) - 1.0);
    } else if (pick < 7) {
      // exact duplicates of a few shared directions create ties
      const auto src = pool.row(uniform_index(rng, pool.rows));
      std::copy(src.begin(), src.end(), r.begin());
    } else if (pick < 9) {
      // signed axis vectors: cosines among them are exactly 0 or +-1
      r[uniform_index(rng, dim)] = uniform_index(rng, 2) ? 1.0f : -1.0f;
    }
    // pick == 9 leaves the zero vector
  }
  return m;
}

Outcome criterion_selection() {
  Rng rng(77);
  std::size_t batches = 0, queries = 0, mismatches = 0, tie_cases = 0;
  for (; batches < 1200; ++batches) {
    const std::size_t n = batches < 50 ? 2 + batches % 4 : 2 + uniform_index(rng, 255);
    const std::size_t dim = 1 + uniform_index(rng, 16);
    const int style = static_cast<int>(uniform_index(rng, 2));
    Matrix pool = random_embeddings(4, dim, 0, rng, Matrix(1, dim));
    MegaBatch mb;
    mb.pairs.resize(n);
    mb.src_embeds = random_embeddings(n, dim, style, rng, pool);
    mb.tgt_embeds = random_embeddings(n, dim, style, rng, pool);
    TrainConfig cfg;
    cfg.negative_pool = uniform_index(rng, 2) ? NegativePool::kAnySide : NegativePool::kOpposingSide;
    cfg.bidirectional = true;
    const bool any = cfg.negative_pool == NegativePool::kAnySide;
    const NegativeSelection sel = select_negatives(mb, cfg);
    const auto fwd = oracle::exhaustive_negatives(mb.src_embeds, mb.tgt_embeds, mb.src_embeds, any);
    const auto rev = oracle::exhaustive_negatives(mb.tgt_embeds, mb.src_embeds, mb.tgt_embeds, any);
    for (std::size_t i = 0; i < n; ++i) {
      mismatches += sel.neg_index[i] != fwd[i];
      mismatches += sel.reverse_neg_index[i] != rev[i];
      // own partner and self never chosen
      mismatches += sel.neg_index[i] == i || (any && sel.neg_index[i] == n + i);
      mismatches += sel.reverse_neg_index[i] == i || (any && sel.reverse_neg_index[i] == n + i);
      if (style == 1) ++tie_cases;
    }
    queries += 2 * n;
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = std::to_string(batches) + " mega-batches, " + std::to_string(queries) + " queries (" +
             std::to_string(tie_cases) + " from tie-heavy batches), " + std::to_string(mismatches) + " mismatches";
  return o;
}

// ---------------------------------------------------------------------------
// 3. annealing schedule

Outcome criterion_annealing() {
  std::size_t checks = 0, bad = 0;
  for (std::size_t M : {1, 2, 20, 60, 100, 140}) {
    TrainConfig cfg;
    cfg.anneal_rate = 150;
    cfg.mega_batch = M;
    const std::vector<std::uint64_t> steps{0, 149, 150, 299, 300, 150 * (M - 1), 150 * (M - 1) - (M > 1 ? 1 : 0),
                                           10000000};
    for (std::uint64_t s : steps) {
      const std::uint64_t expected = std::min<std::uint64_t>(1 + s / 150, M);
      bad += mega_batch_size_at(s, cfg) != expected;
      ++checks;
    }
  }
  Outcome o;
  o.pass = bad == 0;
  o.detail = std::to_string(checks) + " schedule points for M in {1,2,20,60,100,140}, " + std::to_string(bad) + " wrong";
  return o;
}

// ---------------------------------------------------------------------------
// 4. pearson

Outcome criterion_pearson() {
  Rng rng(4242);
  double worst = 0.0, worst_affine = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 10 + uniform_index(rng, 991);
    std::vector<double> x(n), y(n);
    const double mix = uniform_unit(rng) * 2.0 - 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 5.0 * uniform_unit(rng);
      y[i] = mix * x[i] + uniform_unit(rng);
    }
    const double r = pearson(x, y);
    worst = std::max(worst, std::abs(r - oracle::two_pass_pearson(x, y)));
    const double a = 0.1 + 10.0 * uniform_unit(rng), b = 20.0 * uniform_unit(rng) - 10.0;
    std::vector<double> ax(n);
    for (std::size_t i = 0; i < n; ++i) ax[i] = a * x[i] + b;
    worst_affine = std::max(worst_affine, std::abs(pearson(ax, y) - r));
    worst_affine = std::max(worst_affine, std::abs(pearson(x, ax) - 1.0));
  }
  Outcome o;
  o.pass = worst <= 1e-12 && worst_affine <= 1e-12;
  o.detail = "max |r - two-pass r| " + fmt("%.2e", worst) + ", max affine drift " + fmt("%.2e", worst_affine) +
             " over 1000 vectors";
  return o;
}

// ---------------------------------------------------------------------------
// 5. trigram overlap

Outcome criterion_trigram() {
  std::size_t bad = 0;
  bad += trigram_overlap("the cat sat on the mat", "the cat sat on a mat") != 0.5;
  bad += trigram_overlap("the cat sat on a mat", "the cat sat on the mat") != 0.5;
  bad += trigram_overlap("one two three four five", "one two three four five") != 1.0;
  bad += trigram_overlap("x y z", "x y z") != 1.0;
  bad += trigram_overlap("a b", "a b c d") != 0.0;
  bad += trigram_overlap("a b c d", "a b") != 0.0;
  bad += trigram_overlap("", "") != 0.0;

  Rng rng(99);
  const std::vector<std::string> words{"a", "b", "c", "d", "the", "cat"};
  std::size_t asym = 0, oracle_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + uniform_index(rng, 10);
    auto sentence = [&](std::size_t l) {
      std::string s;
      for (std::size_t k = 0; k < l; ++k) s += (k ? " " : "") + words[uniform_index(rng, words.size())];
      return s;
    };
    const std::string s1 = sentence(len), s2 = sentence(len);
    const double ab = trigram_overlap(s1, s2);
    asym += ab != trigram_overlap(s2, s1);
    oracle_bad += ab != oracle::trigram_overlap_by_hand(s1, s2);
    const std::string s3 = sentence(1 + uniform_index(rng, 10));
    oracle_bad += trigram_overlap(s1, s3) != oracle::trigram_overlap_by_hand(s1, s3);
  }
  Outcome o;
  o.pass = bad == 0 && asym == 0 && oracle_bad == 0;
  o.detail = std::to_string(bad) + " hand cases wrong, " + std::to_string(asym) + " asymmetric of 1000 equal-length pairs, " +
             std::to_string(oracle_bad) + " enumeration mismatches";
  return o;
}

// ---------------------------------------------------------------------------
// 6 and 8. synthetic end-to-end run

struct SyntheticRun {
  SyntheticCorpus corpus;
  Vocabulary vocab;
  fs::path data_path;
  TrainConfig cfg;
};

SyntheticRun& synthetic_setup() {
  static SyntheticRun run = [] {
    SyntheticRun r;
    SyntheticSpec spec;  // 70 concepts x 3 synonyms, 10k train, 500 held out
    r.corpus = make_paraphrase_corpus(spec);
    std::vector<std::string> sentences;
    for (const auto& p : r.corpus.train) {
      sentences.push_back(p.src);
      sentences.push_back(p.tgt);
    }
    r.vocab = train_vocab(sentences, 1000);
    r.data_path = g_workdir / "synthetic.spds";
    build_dataset(shuffle_pairs(r.corpus.train, 5), r.vocab, r.data_path.string());
    r.cfg.dim = 64;
    r.cfg.batch_size = 128;
    r.cfg.margin = 0.4;
    r.cfg.lr = 0.001;
    r.cfg.anneal_rate = 150;
    r.cfg.mega_batch = 20;
    r.cfg.epochs = 25;
    r.cfg.seed = 11;
    r.cfg.negative_pool = NegativePool::kAnySide;
    return r;
  }();
  return run;
}

fs::path g_first_model;

Outcome criterion_end_to_end() {
  SyntheticRun& run = synthetic_setup();
  const DatasetFile data(run.data_path.string());
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(run.cfg, data, run.vocab);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_first_model = g_workdir / "synthetic_run1.sppe";
  save_model(result.model, g_first_model.string());
  const EmbeddingModel init = EmbeddingModel::initialized(run.vocab, run.cfg.dim, run.cfg.seed);

  const double loss1 = result.metrics.at(0).mean_loss, loss5 = result.metrics.at(4).mean_loss;
  const bool a = loss5 < loss1;

  const auto& held = run.corpus.held_out;
  Rng rng(123);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    std::size_t j = uniform_index(rng, held.size() - 1);
    if (j >= i) ++j;
    wins += score_pair(result.model, held[i].src, held[i].tgt) > score_pair(result.model, held[i].src, held[j].tgt);
  }
  const double win_rate = static_cast<double>(wins) / static_cast<double>(held.size());
  const bool b = win_rate >= 0.95;

  BitextDataset bt;
  for (const auto& p : held) {
    bt.src.push_back(p.src);
    bt.tgt.push_back(p.tgt);
  }
  const double err_init_f = mine_bitext(init, bt, MiningDirection::kSourceToTarget).error_rate;
  const double err_init_r = mine_bitext(init, bt, MiningDirection::kTargetToSource).error_rate;
  const double err_f = mine_bitext(result.model, bt, MiningDirection::kSourceToTarget).error_rate;
  const double err_r = mine_bitext(result.model, bt, MiningDirection::kTargetToSource).error_rate;
  const bool c = err_f <= 0.2 * err_init_f && err_r <= 0.2 * err_init_r;

  Outcome o;
  o.pass = a && b && c;
  o.detail = "(a) loss epoch1 " + fmt("%.4f", loss1) + " -> epoch5 " + fmt("%.4f", loss5) + (a ? " ok" : " FAIL") +
             "; (b) positive beats random pairing " + fmt("%.1f%%", 100.0 * win_rate) + (b ? " ok" : " FAIL") +
             "; (c) mining error src->tgt " + fmt("%.3f", err_f) + " vs init " + fmt("%.3f", err_init_f) + ", tgt->src " +
             fmt("%.3f", err_r) + " vs init " + fmt("%.3f", err_init_r) + (c ? " ok" : " FAIL") + "; vocab " +
             std::to_string(run.vocab.size()) + ", final loss " + fmt("%.4f", result.metrics.back().mean_loss) +
             ", train " + fmt("%.1fs", secs);
  return o;
}

Outcome criterion_determinism() {
  SyntheticRun& run = synthetic_setup();
  if (g_first_model.empty() || !fs::exists(g_first_model)) {
    const DatasetFile data(run.data_path.string());
    g_first_model = g_workdir / "synthetic_run1.sppe";
    save_model(train(run.cfg, data, run.vocab).model, g_first_model.string());
  }
  // Second run with a different worker count; results must not depend on it.
  const std::size_t saved = num_threads();
  set_num_threads(3);
  const DatasetFile data(run.data_path.string());
  const fs::path second = g_workdir / "synthetic_run2.sppe";
  save_model(train(run.cfg, data, run.vocab).model, second.string());
  set_num_threads(saved);
  const std::string a = slurp(g_first_model), b = slurp(second);
  Outcome o;
  o.pass = !a.empty() && a == b;
  o.detail = "model files " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " bytes, " +
             (a == b ? "byte-identical" : "DIFFERENT") + " (second run with 3 worker threads)";
  return o;
}

// ---------------------------------------------------------------------------
// 7. format round trips

Outcome criterion_formats() {
  std::vector<std::string> problems;

  SyntheticSpec spec;
  spec.seed = 31;
  spec.held_out_pairs = 0;
  const SyntheticCorpus corpus = make_paraphrase_corpus(spec);
  std::vector<std::string> sentences;
  for (const auto& p : corpus.train) sentences.push_back(p.src);
  const Vocabulary vocab = train_vocab(sentences, 400);

  for (bool tied : {true, false}) {
    const EmbeddingModel m = EmbeddingModel::initialized(vocab, 48, 9, tied);
    const fs::path p = g_workdir / (tied ? "tied.sppe" : "untied.sppe");
    save_model(m, p.string());
    const EmbeddingModel back = load_model(p.string());
    if (!(back == m)) problems.push_back("model round trip differs");
    if (serialize_model(back) != slurp(p)) problems.push_back("re-serialization not byte-identical");
  }

  const fs::path ds_path = g_workdir / "roundtrip.spds";
  const BuildStats stats = build_dataset(corpus.train, vocab, ds_path.string());
  const DatasetFile ds(ds_path.string());
  std::uintmax_t expected_size = kDatasetHeaderBytes + 8 * (ds.count() + 1);
  std::size_t mismatched = 0;
  std::vector<Record> expected;
  for (const auto& p : corpus.train) {
    Record r{vocab.encode(p.src), vocab.encode(p.tgt)};
    if (r.src.empty() || r.tgt.empty()) continue;
    expected_size += 4 + 4 * (r.src.size() + r.tgt.size());
    expected.push_back(std::move(r));
  }
  if (ds.count() != 10000 || expected.size() != ds.count() || stats.written != ds.count()) problems.push_back("record count");
  for (std::size_t i = 0; i < expected.size() && i < ds.count(); ++i) mismatched += !(ds.read_record(i) == expected[i]);
  Rng rng(5);
  std::vector<std::size_t> order(expected.size());
  std::iota(order.begin(), order.end(), 0);
  fisher_yates(std::span<std::size_t>(order), rng);
  for (std::size_t i : order) mismatched += !(ds.read_record(i) == expected[i]);
  if (mismatched) problems.push_back(std::to_string(mismatched) + " record mismatches");
  if (fs::file_size(ds_path) != expected_size) problems.push_back("dataset size " + std::to_string(fs::file_size(ds_path)) +
                                                                  " != " + std::to_string(expected_size));

  const EmbeddingModel m = EmbeddingModel::initialized(vocab, 48, 9);
  const fs::path text = g_workdir / "embed_in.txt";
  {
    std::ofstream out(text);
    for (std::size_t i = 0; i < 777; ++i) out << sentences[i] << '\n';
  }
  const fs::path arr_path = g_workdir / "embed_out.spem";
  embed_file(m, text.string(), arr_path.string());
  const EmbeddingArray arr = read_embedding_array(arr_path.string());
  if (arr.n != 777 || arr.d != 48) problems.push_back("array header");
  if (fs::file_size(arr_path) != kEmbeddingArrayHeaderBytes + 4ull * arr.n * arr.d) problems.push_back("array size");
  if (arr.rows.size() != static_cast<std::size_t>(arr.n) * arr.d) problems.push_back("array payload");

  Outcome o;
  o.pass = problems.empty();
  o.detail = "tied and untied model files bit-exact; " + std::to_string(ds.count()) + " records read sequentially and in random order; SPEM " +
             std::to_string(arr.n) + "x" + std::to_string(arr.d) + " = " + std::to_string(fs::file_size(arr_path)) + " bytes";
  for (const auto& p : problems) o.detail += "; " + p;
  return o;
}

// ---------------------------------------------------------------------------
// 9. batching invariance

Outcome criterion_batching() {
  const auto sentences = make_random_sentences(10000, 12, 3000, 17);
  const Vocabulary vocab = train_vocab(std::vector<std::string>(sentences.begin(), sentences.begin() + 3000), 2000);
  const EmbeddingModel m = EmbeddingModel::initialized(vocab, 96, 4);
  const fs::path text = g_workdir / "batching.txt";
  {
    std::ofstream out(text);
    for (const auto& s : sentences) out << s << '\n';
    out << "zzz qqq unseen\n\n";
  }
  const fs::path a = g_workdir / "batch64.spem", b = g_workdir / "batch1.spem";
  embed_file(m, text.string(), a.string(), 64);
  embed_file(m, text.string(), b.string(), 1, 333);
  const std::string x = slurp(a), y = slurp(b);
  Outcome o;
  o.pass = !x.empty() && x == y;
  o.detail = std::to_string(sentences.size() + 2) + " lines, " + std::to_string(x.size()) + " bytes, " +
             (x == y ? "identical" : "DIFFERENT");
  return o;
}

// ---------------------------------------------------------------------------
// 10. throughput

std::string g_report;

Outcome criterion_throughput() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = make_random_sentences(100000, 12, 60000, 2024);
  const Vocabulary vocab = train_vocab(corpus, 50000);
  const EmbeddingModel m = EmbeddingModel::initialized(vocab, 1024, 3);
  std::vector<std::vector<TokenId>> encoded(corpus.size());
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    encoded[i] = vocab.encode(corpus[i]);
    tokens += encoded[i].size();
  }
  const double setup = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const BenchReport one = speed_bench(m, encoded, 64, 1);
  const BenchReport four = speed_bench(m, encoded, 64, 4);
  const double ratio = four.sentences_per_second / one.sentences_per_second;
  const unsigned cores = std::thread::hardware_concurrency();

  std::ostringstream rep;
  rep << "threads\tbatch\tsentences\tseconds\tsentences_per_second\tvocab\tdim\tmean_tokens\n";
  for (const auto* r : {&one, &four}) {
    rep << r->thread_count << '\t' << r->batch_size << '\t' << r->corpus_size << '\t' << fmt("%.6f", r->seconds) << '\t'
        << fmt("%.1f", r->sentences_per_second) << '\t' << vocab.size() << '\t' << m.dim() << '\t'
        << fmt("%.2f", static_cast<double>(tokens) / corpus.size()) << '\n';
  }
  g_report += rep.str();

  Outcome o;
  o.pass = one.sentences_per_second > 2000.0 && ratio >= 2.0;
  o.detail = "1 thread " + fmt("%.0f", one.sentences_per_second) + " sent/s, 4 threads " +
             fmt("%.0f", four.sentences_per_second) + " sent/s, ratio " + fmt("%.2f", ratio) + " (need >2000 and >=2.00); vocab " +
             std::to_string(vocab.size()) + ", d=1024, " + fmt("%.1f", static_cast<double>(tokens) / corpus.size()) +
             " tokens/sentence, hardware threads " + std::to_string(cores) + ", setup " + fmt("%.0fs", setup);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string workdir, report;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--report", report, "Write the throughput report here");
  CLI11_PARSE(app, argc, argv);

  g_workdir = workdir.empty() ? fs::temp_directory_path() / ("paraembed_acceptance_" + std::to_string(::getpid())) : fs::path(workdir);
  fs::create_directories(g_workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"negative-selection oracle", criterion_selection},
      {"annealing schedule", criterion_annealing},
      {"pearson oracle", criterion_pearson},
      {"trigram overlap", criterion_trigram},
      {"synthetic end-to-end", criterion_end_to_end},
      {"format round trips", criterion_formats},
      {"determinism", criterion_determinism},
      {"batching invariance", criterion_batching},
      {"throughput", criterion_throughput},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail << " ["
              << fmt("%.1fs", secs) << "]" << std::endl;
    failures += !o.pass;
  }
  if (!report.empty() && !g_report.empty()) {
    std::ofstream out(report);
    out << g_report;
  }
  if (workdir.empty()) fs::remove_all(g_workdir);
  return failures == 0 ? 0 : 1;
}
