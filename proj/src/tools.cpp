#include "paraembed/tools.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "paraembed/corpus.hpp"
#include "paraembed/eval.hpp"
#include "paraembed/io.hpp"
#include "paraembed/parallel.hpp"
#include "paraembed/synthetic.hpp"
#include "paraembed/trainer.hpp"

namespace paraembed {

namespace {

bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// File-level inference

EmbeddingArray read_embedding_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string_view(magic, 4) != "SPEM") throw FormatError(path + ": bad magic (expected SPEM)");
  EmbeddingArray arr;
  arr.n = read_le<std::uint32_t>(in, path);
  arr.d = read_le<std::uint32_t>(in, path);
  const std::size_t count = static_cast<std::size_t>(arr.n) * arr.d;
  arr.rows.resize(count);
  for (auto& x : arr.rows) x = read_le<float>(in, path);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes after payload");
  return arr;
}

std::size_t embed_file(const EmbeddingModel& model, const std::string& sentences_path, const std::string& out_path,
                       std::size_t batch_size, std::size_t chunk_lines) {
  std::size_t n = 0;
  {
    std::ifstream in(sentences_path);
    if (!in) throw std::runtime_error("cannot open sentence file " + sentences_path);
    std::string line;
    while (next_line(in, line)) ++n;
  }
  if (n > UINT32_MAX) throw std::length_error(sentences_path + ": too many lines for the SPEM header");

  std::ifstream in(sentences_path);
  if (!in) throw std::runtime_error("cannot open sentence file " + sentences_path);
  AtomicOutputFile out(out_path);
  auto& os = out.stream();
  os.write("SPEM", 4);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(n));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.dim()));

  std::vector<std::string> chunk;
  chunk.reserve(chunk_lines);
  std::string line;
  std::size_t written = 0;
  auto flush = [&] {
    const Matrix m = embed_batch(model, chunk, Side::kSource, batch_size);
    for (float x : m.data) write_le<float>(os, x);
    written += chunk.size();
    chunk.clear();
  };
  while (written + chunk.size() < n && next_line(in, line)) {
    chunk.push_back(std::move(line));
    if (chunk.size() == chunk_lines) flush();
  }
  if (!chunk.empty()) flush();
  if (written != n) throw std::runtime_error(sentences_path + ": file changed while embedding");
  out.commit();
  return n;
}

std::size_t embed_file(const std::string& model_path, const std::string& sentences_path, const std::string& out_path,
                       std::size_t batch_size) {
  const EmbeddingModel model = load_model(model_path);
  return embed_file(model, sentences_path, out_path, batch_size);
}

std::size_t score_stream(const EmbeddingModel& model, std::istream& in, std::ostream& out, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0, pairs = 0;
  while (next_line(in, line)) {
    ++line_no;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(source_name + ":" + std::to_string(line_no) + ": expected sent1<TAB>sent2");
    std::size_t end2 = line.find('\t', tab + 1);
    if (end2 == std::string::npos) end2 = line.size();
    const std::string_view s1 = std::string_view(line).substr(0, tab);
    const std::string_view s2 = std::string_view(line).substr(tab + 1, end2 - tab - 1);
    out << s1 << '\t' << s2 << '\t' << fixed6(score_pair(model, s1, s2)) << '\n';
    ++pairs;
  }
  return pairs;
}

std::size_t score_file(const EmbeddingModel& model, const std::string& pairs_path, const std::string& out_path) {
  std::ifstream in(pairs_path);
  if (!in) throw std::runtime_error("cannot open sentence pair file " + pairs_path);
  AtomicOutputFile out(out_path, false);
  const std::size_t n = score_stream(model, in, out.stream(), pairs_path);
  out.commit();
  return n;
}

// ---------------------------------------------------------------------------
// CLI

namespace {

std::vector<std::string> read_sentences(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    while (next_line(in, line)) {
      // TSV pair files contribute both sides; a score column is ignored.
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        out.push_back(std::move(line));
        continue;
      }
      const std::size_t tab2 = line.find('\t', tab + 1);
      out.push_back(line.substr(0, tab));
      out.push_back(line.substr(tab + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab - 1));
    }
  }
  return out;
}

struct TrainFlags {
  TrainConfig cfg;
  std::string mode = "paranmt";
  std::string pool;
  bool untied = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--dim", cfg.dim, "Embedding dimension")->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "Pairs per minibatch")->capture_default_str();
    cmd->add_option("--margin", cfg.margin, "Hinge margin delta")->capture_default_str();
    cmd->add_option("--anneal-rate", cfg.anneal_rate, "Minibatches per mega-batch size increment")->capture_default_str();
    cmd->add_option("--mega-batch", cfg.mega_batch, "Maximum mega-batch size M (in minibatches)")->capture_default_str();
    cmd->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs, "Passes over the data")->capture_default_str();
    cmd->add_option("--dropout", cfg.dropout, "Subword dropout probability")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    cmd->add_flag("--bidirectional", cfg.bidirectional, "Add the mirrored hinge term");
    cmd->add_flag("--untied", untied, "Separate source and target tables");
    cmd->add_option("--mode", mode, "Data kind; sets the negative pool (paranmt: any side, bitext: opposing side)")
        ->check(CLI::IsMember({"paranmt", "bitext"}))
        ->capture_default_str();
    cmd->add_option("--negative-pool", pool, "Override the negative pool")->check(CLI::IsMember({"any", "opposing"}));
  }

  TrainConfig resolve() const {
    TrainConfig c = cfg;
    c.tied = !untied;
    const std::string p = pool.empty() ? (mode == "bitext" ? "opposing" : "any") : pool;
    c.negative_pool = p == "opposing" ? NegativePool::kOpposingSide : NegativePool::kAnySide;
    return c;
  }
};

void print_metrics(std::ostream& os, const EpochMetrics& m) {
  os << m.epoch << '\t' << fixed6(m.mean_loss) << '\t' << fixed6(m.active_fraction) << '\t' << m.mega_batch_size << '\n';
  os.flush();
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Paraphrastic sentence embeddings: preprocessing, training, inference and evaluation", "paraembed"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  // train-vocab
  auto* vocab_cmd = app.add_subcommand("train-vocab", "Train a subword vocabulary");
  std::vector<std::string> vocab_inputs;
  std::size_t vocab_size = 50000;
  std::string vocab_output;
  vocab_cmd->add_option("--input", vocab_inputs, "Text files (one sentence per line, or TSV pairs)")->required();
  vocab_cmd->add_option("--vocab-size", vocab_size, "Target vocabulary size")->capture_default_str();
  vocab_cmd->add_option("--output", vocab_output, "SPVOC output file")->required();

  // preprocess
  auto* pre_cmd = app.add_subcommand("preprocess", "Filter pairs, train a vocabulary and write an SPDS dataset");
  std::string pre_input, pre_mode, pre_vocab_out, pre_data_out, pre_vocab_in, pre_score_model;
  std::optional<double> min_score, max_score, max_overlap;
  std::optional<std::size_t> min_len, max_len;
  std::optional<bool> dedup;
  std::size_t pre_vocab_size = 50000;
  std::uint64_t pre_seed = 1;
  pre_cmd->add_option("--input", pre_input, "TSV of src<TAB>tgt[<TAB>score]")->required();
  pre_cmd->add_option("--mode", pre_mode, "Filter defaults")->required()->check(CLI::IsMember({"paranmt", "bitext"}));
  pre_cmd->add_option("--min-score", min_score, "Keep pairs with score >= this");
  pre_cmd->add_option("--max-score", max_score, "Keep pairs with score <= this");
  pre_cmd->add_option("--max-overlap", max_overlap, "Keep pairs with trigram overlap <= this");
  pre_cmd->add_option("--min-len", min_len, "Minimum whitespace tokens per side");
  pre_cmd->add_option("--max-len", max_len, "Maximum whitespace tokens per side");
  pre_cmd->add_option("--dedup", dedup, "Drop repeated pairs (true/false)");
  pre_cmd->add_option("--vocab-size", pre_vocab_size, "Target vocabulary size")->capture_default_str();
  pre_cmd->add_option("--seed", pre_seed, "Shuffle seed")->capture_default_str();
  pre_cmd->add_option("--vocab", pre_vocab_in, "Reuse an existing SPVOC vocabulary instead of training one");
  pre_cmd->add_option("--score-model", pre_score_model, "SPPE model used to score pairs lacking a score column");
  pre_cmd->add_option("--vocab-out", pre_vocab_out, "SPVOC output (when training a vocabulary)");
  pre_cmd->add_option("--data-out", pre_data_out, "SPDS output")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train an embedding model on an SPDS dataset");
  TrainFlags train_flags;
  std::string train_data, train_vocab_path, train_save, train_log;
  train_cmd->add_option("--data", train_data, "SPDS dataset")->required();
  train_cmd->add_option("--vocab", train_vocab_path, "SPVOC vocabulary")->required();
  train_cmd->add_option("--save", train_save, "SPPE output model")->required();
  train_cmd->add_option("--metrics-out", train_log, "Also write the per-epoch log to this file");
  train_flags.add_to(train_cmd);

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Embed one sentence per line into an SPEM array");
  std::string embed_in, embed_model, embed_out;
  std::size_t embed_batch_size = 64;
  embed_cmd->add_option("--sentence-file", embed_in, "Input sentences")->required();
  embed_cmd->add_option("--load-file", embed_model, "SPPE model")->required();
  embed_cmd->add_option("--output-file", embed_out, "SPEM output")->required();
  embed_cmd->add_option("--batch-size", embed_batch_size, "Sentences per length-sorted batch")->capture_default_str();

  // score
  auto* score_cmd = app.add_subcommand("score", "Append cosine scores to tab-separated sentence pairs");
  std::string score_in, score_model, score_out;
  score_cmd->add_option("--sentence-pair-file", score_in, "sent1<TAB>sent2 lines")->required();
  score_cmd->add_option("--load-file", score_model, "SPPE model")->required();
  score_cmd->add_option("--output-file", score_out, "Output file (default: standard output)");

  // eval-sts
  auto* sts_cmd = app.add_subcommand("eval-sts", "Pearson's r against 0-5 gold similarity scores");
  std::string sts_model, sts_report;
  std::vector<std::string> sts_files;
  sts_cmd->add_option("--load-file", sts_model, "SPPE model")->required();
  sts_cmd->add_option("--sts-file", sts_files, "sent1<TAB>sent2<TAB>gold files, one per dataset")->required();
  sts_cmd->add_option("--report", sts_report, "Optional TSV report");

  // mine
  auto* mine_cmd = app.add_subcommand("mine", "Nearest-neighbour bitext mining error rate");
  std::string mine_model, mine_src, mine_tgt, mine_dir = "both", mine_report;
  mine_cmd->add_option("--load-file", mine_model, "SPPE model")->required();
  mine_cmd->add_option("--src-file", mine_src, "Source sentences")->required();
  mine_cmd->add_option("--tgt-file", mine_tgt, "Aligned target sentences")->required();
  mine_cmd->add_option("--direction", mine_dir, "Query direction")
      ->check(CLI::IsMember({"both", "src2tgt", "tgt2src"}))
      ->capture_default_str();
  mine_cmd->add_option("--report", mine_report, "Optional TSV report");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Embedding throughput in sentences/second");
  std::string bench_model, bench_sentences, bench_report;
  std::size_t bench_synthetic = 100000, bench_batch = 64, bench_vocab = 50000, bench_dim = 1024;
  std::vector<std::size_t> bench_threads{1};
  bench_cmd->add_option("--load-file", bench_model, "SPPE model (default: random model over a synthetic vocabulary)");
  bench_cmd->add_option("--sentence-file", bench_sentences, "Sentences to embed (default: synthetic)");
  bench_cmd->add_option("--synthetic", bench_synthetic, "Synthetic sentence count")->capture_default_str();
  bench_cmd->add_option("--vocab-size", bench_vocab, "Vocabulary size of the random model")->capture_default_str();
  bench_cmd->add_option("--dim", bench_dim, "Dimension of the random model")->capture_default_str();
  bench_cmd->add_option("--batch-size", bench_batch, "Sentences per batch")->capture_default_str();
  bench_cmd->add_option("--bench-threads", bench_threads, "Thread counts to time")->capture_default_str();
  bench_cmd->add_option("--report", bench_report, "Optional TSV report");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over dropout and mega-batch size, selected on a dev STS set");
  TrainFlags sweep_flags;
  std::string sweep_data, sweep_vocab, sweep_dev, sweep_save;
  std::vector<double> sweep_dropouts{0.0, 0.1, 0.3};
  std::vector<std::size_t> sweep_megas{60, 100, 140};
  sweep_cmd->add_option("--data", sweep_data, "SPDS dataset")->required();
  sweep_cmd->add_option("--vocab", sweep_vocab, "SPVOC vocabulary")->required();
  sweep_cmd->add_option("--dev-sts", sweep_dev, "Dev STS file")->required();
  sweep_cmd->add_option("--save", sweep_save, "Where to save the best model")->required();
  sweep_cmd->add_option("--dropouts", sweep_dropouts, "Dropout grid")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--mega-batches", sweep_megas, "Mega-batch grid")->delimiter(',')->capture_default_str();
  sweep_flags.add_to(sweep_cmd);

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  set_num_threads(threads);

  auto& out = std::cout;
  if (*vocab_cmd) {
    const auto sentences = read_sentences(vocab_inputs);
    const Vocabulary vocab = train_vocab(sentences, vocab_size);
    vocab.save(vocab_output);
    out << "vocabulary: " << vocab.size() << " tokens, " << vocab.merges().size() << " merges -> " << vocab_output << '\n';
  } else if (*pre_cmd) {
    FilterConfig cfg = pre_mode == "paranmt" ? FilterConfig::paranmt() : FilterConfig::bitext();
    if (min_score) cfg.min_para_score = *min_score;
    if (max_score) cfg.max_para_score = *max_score;
    if (max_overlap) cfg.max_trigram_overlap = *max_overlap;
    if (min_len) cfg.min_tokens = *min_len;
    if (max_len) cfg.max_tokens = *max_len;
    if (dedup) cfg.dedup = *dedup;
    std::optional<EmbeddingModel> scorer;
    if (!pre_score_model.empty()) scorer.emplace(load_model(pre_score_model));
    PairFilter filter(cfg, scorer ? &*scorer : nullptr);

    PairReader reader(pre_input);
    std::vector<RawPair> kept;
    RawPair p;
    while (reader.next(p)) {
      p.src = normalize(p.src);
      p.tgt = normalize(p.tgt);
      try {
        if (filter.accept(p, reader.line_number())) kept.push_back(p);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(pre_input + ": " + e.what());
      }
    }
    kept = shuffle_pairs(std::move(kept), pre_seed);

    Vocabulary vocab;
    if (!pre_vocab_in.empty()) {
      vocab = Vocabulary::load(pre_vocab_in);
    } else {
      if (pre_vocab_out.empty()) throw CLI::ValidationError("--vocab-out", "required unless --vocab is given");
      std::vector<std::string> sentences;
      sentences.reserve(2 * kept.size());
      for (const auto& k : kept) {
        sentences.push_back(k.src);
        sentences.push_back(k.tgt);
      }
      vocab = train_vocab(sentences, pre_vocab_size);
      vocab.save(pre_vocab_out);
    }
    const BuildStats stats = build_dataset(kept, vocab, pre_data_out);
    out << "read " << filter.seen() << " pairs, kept " << filter.kept() << ", wrote " << stats.written
        << " (skipped " << stats.skipped_empty << " empty after encoding); vocabulary " << vocab.size() << " tokens\n";
    if (stats.skipped_empty) std::cerr << "warning: " << stats.skipped_empty << " pairs encoded to an empty side\n";
    out << "train with --mode " << pre_mode << '\n';
  } else if (*train_cmd) {
    const TrainConfig cfg = train_flags.resolve();
    const Vocabulary vocab = Vocabulary::load(train_vocab_path);
    const DatasetFile data(train_data);
    std::optional<AtomicOutputFile> log;
    if (!train_log.empty()) log.emplace(train_log, false);
    auto result = train(cfg, data, vocab, [&](const EpochMetrics& m) {
      print_metrics(out, m);
      if (log) print_metrics(log->stream(), m);
    });
    save_model(result.model, train_save);
    if (log) log->commit();
  } else if (*embed_cmd) {
    const std::size_t n = embed_file(load_model(embed_model), embed_in, embed_out, embed_batch_size);
    out << "embedded " << n << " sentences -> " << embed_out << '\n';
  } else if (*score_cmd) {
    const EmbeddingModel model = load_model(score_model);
    if (score_out.empty()) {
      std::ifstream in(score_in);
      if (!in) throw std::runtime_error("cannot open sentence pair file " + score_in);
      std::ostringstream buffered;
      score_stream(model, in, buffered, score_in);
      out << buffered.str();
    } else {
      score_file(model, score_in, score_out);
    }
  } else if (*sts_cmd) {
    const EmbeddingModel model = load_model(sts_model);
    std::vector<STSDataset> sets;
    for (const auto& f : sts_files) sets.push_back(load_sts(f));
    const STSReport report = eval_sts_suite(model, sets);
    out << "dataset\tpairs\tpearson_r\n";
    for (std::size_t i = 0; i < sets.size(); ++i) {
      out << report.per_dataset[i].first << '\t' << sets[i].pairs.size() << '\t' << fixed6(report.per_dataset[i].second) << '\n';
    }
    out << "mean\t-\t" << fixed6(report.mean) << '\n';
    if (!sts_report.empty()) {
      AtomicOutputFile rep(sts_report, false);
      rep.stream() << "dataset\tpearson_r\n";
      for (const auto& [name, r] : report.per_dataset) rep.stream() << name << '\t' << fixed6(r) << '\n';
      rep.stream() << "mean\t" << fixed6(report.mean) << '\n';
      rep.commit();
    }
  } else if (*mine_cmd) {
    const EmbeddingModel model = load_model(mine_model);
    const BitextDataset ds = load_bitext(mine_src, mine_tgt);
    std::vector<std::pair<std::string, double>> rows;
    if (mine_dir != "tgt2src") rows.emplace_back("src2tgt", mine_bitext(model, ds, MiningDirection::kSourceToTarget).error_rate);
    if (mine_dir != "src2tgt") rows.emplace_back("tgt2src", mine_bitext(model, ds, MiningDirection::kTargetToSource).error_rate);
    if (rows.size() == 2) rows.emplace_back("mean", (rows[0].second + rows[1].second) / 2.0);
    out << "direction\terror_rate\n";
    for (const auto& [name, e] : rows) out << name << '\t' << fixed6(e) << '\n';
    if (!mine_report.empty()) {
      AtomicOutputFile rep(mine_report, false);
      rep.stream() << "direction\terror_rate\n";
      for (const auto& [name, e] : rows) rep.stream() << name << '\t' << fixed6(e) << '\n';
      rep.commit();
    }
  } else if (*bench_cmd) {
    std::vector<std::string> corpus;
    if (!bench_sentences.empty()) {
      corpus = read_sentences({bench_sentences});
    } else {
      corpus = make_random_sentences(bench_synthetic, 12, 20000, 11);
    }
    std::optional<EmbeddingModel> model;
    if (!bench_model.empty()) {
      model.emplace(load_model(bench_model));
    } else {
      std::vector<std::string> vocab_corpus(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(corpus.size(), 200000)));
      model.emplace(EmbeddingModel::initialized(train_vocab(vocab_corpus, bench_vocab), bench_dim, 3));
    }
    std::vector<std::vector<TokenId>> encoded(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) encoded[i] = model->vocab().encode(corpus[i]);
    out << "threads\tbatch\tsentences\tseconds\tsentences_per_second\n";
    std::ostringstream report;
    report << "threads\tbatch\tsentences\tseconds\tsentences_per_second\tvocab\tdim\n";
    for (std::size_t t : bench_threads) {
      const BenchReport r = speed_bench(*model, encoded, bench_batch, t);
      out << r.thread_count << '\t' << r.batch_size << '\t' << r.corpus_size << '\t' << fixed6(r.seconds) << '\t'
          << fixed6(r.sentences_per_second) << '\n';
      report << r.thread_count << '\t' << r.batch_size << '\t' << r.corpus_size << '\t' << fixed6(r.seconds) << '\t'
             << fixed6(r.sentences_per_second) << '\t' << model->vocab_size() << '\t' << model->dim() << '\n';
    }
    if (!bench_report.empty()) {
      AtomicOutputFile rep(bench_report, false);
      rep.stream() << report.str();
      rep.commit();
    }
  } else if (*sweep_cmd) {
    const Vocabulary vocab = Vocabulary::load(sweep_vocab);
    const DatasetFile data(sweep_data);
    const STSDataset dev = load_sts(sweep_dev);
    std::optional<EmbeddingModel> best;
    double best_r = -2.0;
    out << "dropout\tmega_batch\tdev_r\n";
    for (double d : sweep_dropouts) {
      for (std::size_t mb : sweep_megas) {
        TrainConfig cfg = sweep_flags.resolve();
        cfg.dropout = d;
        cfg.mega_batch = mb;
        auto result = train(cfg, data, vocab);
        const double r = eval_sts(result.model, dev);
        out << fixed6(d) << '\t' << mb << '\t' << fixed6(r) << '\n';
        if (r > best_r) {
          best_r = r;
          best.emplace(std::move(result.model));
        }
      }
    }
    if (!best) throw std::invalid_argument("sweep: empty grid");
    save_model(*best, sweep_save);
    out << "best dev r " << fixed6(best_r) << " -> " << sweep_save << '\n';
  }
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace paraembed
