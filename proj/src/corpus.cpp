#include "paraembed/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <stdexcept>
#include <system_error>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "paraembed/io.hpp"
#include "paraembed/random.hpp"

namespace paraembed {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

std::set<std::string> trigrams(const std::vector<std::string_view>& words) {
  std::set<std::string> out;
  for (std::size_t i = 0; i + 2 < words.size(); ++i) {
    std::string key(words[i]);
    key += ' ';
    key += words[i + 1];
    key += ' ';
    key += words[i + 2];
    out.insert(std::move(key));
  }
  return out;
}

}  // namespace

void FilterConfig::validate() const {
  if (min_tokens > max_tokens) throw std::invalid_argument("filter: min_tokens exceeds max_tokens");
  auto in_unit = [](double x, double lo) { return std::isfinite(x) && x >= lo && x <= 1.0; };
  if (min_para_score && !in_unit(*min_para_score, -1.0)) throw std::invalid_argument("filter: min_para_score outside [-1, 1]");
  if (max_para_score && !in_unit(*max_para_score, -1.0)) throw std::invalid_argument("filter: max_para_score outside [-1, 1]");
  if (min_para_score && max_para_score && *min_para_score > *max_para_score) {
    throw std::invalid_argument("filter: min_para_score exceeds max_para_score");
  }
  if (max_trigram_overlap && !in_unit(*max_trigram_overlap, 0.0)) throw std::invalid_argument("filter: max_trigram_overlap outside [0, 1]");
}

FilterConfig FilterConfig::paranmt() {
  FilterConfig cfg;
  cfg.min_tokens = 5;
  cfg.max_tokens = 40;
  cfg.min_para_score = 0.4;
  cfg.max_para_score = 1.0;
  cfg.max_trigram_overlap = 0.7;
  return cfg;
}

FilterConfig FilterConfig::bitext() {
  FilterConfig cfg;
  cfg.min_tokens = 3;
  cfg.max_tokens = 100;
  cfg.dedup = true;
  return cfg;
}

std::size_t whitespace_token_count(std::string_view text) { return split_ws(text).size(); }

double trigram_overlap(std::string_view s1, std::string_view s2) {
  const auto w1 = split_ws(s1);
  const auto w2 = split_ws(s2);
  if (std::min(w1.size(), w2.size()) < 3) return 0.0;
  const auto t1 = trigrams(w1);
  const auto t2 = trigrams(w2);
  std::size_t shared = 0;
  for (const auto& t : t1) shared += t2.count(t);
  // Equal token counts can still give different unique-set sizes when a
  // trigram repeats; the larger set keeps the ratio symmetric.
  std::size_t denom;
  if (w1.size() == w2.size()) {
    denom = std::max(t1.size(), t2.size());
  } else {
    denom = w1.size() < w2.size() ? t1.size() : t2.size();
  }
  return static_cast<double>(shared) / static_cast<double>(denom);
}

double paraphrase_score(const EmbeddingModel& model, std::string_view s1, std::string_view s2) {
  return score_pair(model, s1, s2);
}

// ---------------------------------------------------------------------------

PairFilter::PairFilter(FilterConfig cfg, const EmbeddingModel* scorer) : cfg_(std::move(cfg)), scorer_(scorer) {
  cfg_.validate();
}

bool PairFilter::accept(RawPair& pair, std::size_t line_no) {
  ++seen_;
  for (const auto* side : {&pair.src, &pair.tgt}) {
    const auto n = whitespace_token_count(*side);
    if (n < cfg_.min_tokens || n > cfg_.max_tokens) return false;
  }
  if (cfg_.language_ok && (!cfg_.language_ok(pair.src) || !cfg_.language_ok(pair.tgt))) return false;
  if (cfg_.scores_required()) {
    if (!pair.score) {
      if (!scorer_) throw std::runtime_error("line " + std::to_string(line_no) + ": paraphrase score required by the score filter but missing");
      pair.score = paraphrase_score(*scorer_, pair.src, pair.tgt);
    }
    if (cfg_.min_para_score && *pair.score < *cfg_.min_para_score) return false;
    if (cfg_.max_para_score && *pair.score > *cfg_.max_para_score) return false;
  }
  if (cfg_.max_trigram_overlap && trigram_overlap(pair.src, pair.tgt) > *cfg_.max_trigram_overlap) return false;
  if (cfg_.dedup) {
    std::string key = pair.src;
    key += '\t';
    key += pair.tgt;
    if (!seen_pairs_.insert(std::move(key)).second) return false;
  }
  ++kept_;
  return true;
}

std::vector<RawPair> filter_pairs(std::span<const RawPair> pairs, const FilterConfig& cfg, const EmbeddingModel* scorer) {
  PairFilter filter(cfg, scorer);
  std::vector<RawPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    RawPair p = pairs[i];
    if (filter.accept(p, i + 1)) out.push_back(std::move(p));
  }
  return out;
}

std::vector<RawPair> shuffle_pairs(std::vector<RawPair> pairs, std::uint64_t seed) {
  Rng rng(seed);
  fisher_yates(std::span<RawPair>(pairs), rng);
  return pairs;
}

// ---------------------------------------------------------------------------

PairReader::PairReader(const std::string& path) : path_(path), in_(path) {
  if (!in_) throw std::runtime_error("cannot open " + path);
}

bool PairReader::next(RawPair& pair) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    if (t1 == std::string::npos) throw FormatError(path_ + ":" + std::to_string(line_no_) + ": expected src<TAB>tgt[<TAB>score]");
    const std::size_t t2 = line.find('\t', t1 + 1);
    pair.src = line.substr(0, t1);
    pair.score.reset();
    if (t2 == std::string::npos) {
      pair.tgt = line.substr(t1 + 1);
    } else {
      pair.tgt = line.substr(t1 + 1, t2 - t1 - 1);
      const std::string_view field = std::string_view(line).substr(t2 + 1);
      double value = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
      if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(value)) {
        throw FormatError(path_ + ":" + std::to_string(line_no_) + ": bad score field '" + std::string(field) + "'");
      }
      pair.score = value;
    }
    return true;
  }
  return false;
}

std::vector<RawPair> read_pairs(const std::string& path) {
  PairReader reader(path);
  std::vector<RawPair> out;
  RawPair p;
  while (reader.next(p)) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset writer

DatasetWriter::DatasetWriter(std::filesystem::path path) : path_(std::move(path)) {
  records_tmp_ = path_;
  records_tmp_ += ".records.tmp";
  offsets_tmp_ = path_;
  offsets_tmp_ += ".offsets.tmp";
  records_.open(records_tmp_, std::ios::binary | std::ios::trunc);
  offsets_.open(offsets_tmp_, std::ios::binary | std::ios::trunc);
  if (!records_ || !offsets_) throw std::runtime_error("cannot open " + path_.string() + " for writing");
  write_le<std::uint64_t>(offsets_, 0);
}

DatasetWriter::~DatasetWriter() {
  records_.close();
  offsets_.close();
  std::error_code ec;
  std::filesystem::remove(records_tmp_, ec);
  std::filesystem::remove(offsets_tmp_, ec);
}

void DatasetWriter::add(std::span<const TokenId> src, std::span<const TokenId> tgt) {
  if (finished_) throw std::logic_error("DatasetWriter::add after finish");
  if (src.size() > UINT16_MAX || tgt.size() > UINT16_MAX) {
    throw std::length_error("dataset record " + std::to_string(count_) + ": sentence longer than 65535 tokens");
  }
  write_le<std::uint16_t>(records_, static_cast<std::uint16_t>(src.size()));
  write_le<std::uint16_t>(records_, static_cast<std::uint16_t>(tgt.size()));
  for (TokenId id : src) write_le<std::uint32_t>(records_, id);
  for (TokenId id : tgt) write_le<std::uint32_t>(records_, id);
  bytes_ += 4 + 4 * (src.size() + tgt.size());
  write_le<std::uint64_t>(offsets_, bytes_);
  ++count_;
}

void DatasetWriter::finish() {
  if (finished_) return;
  records_.close();
  offsets_.close();
  if (!records_ || !offsets_) throw std::runtime_error("write failed: " + path_.string());

  AtomicOutputFile out(path_);
  auto& os = out.stream();
  os.write("SPDS", 4);
  write_le<std::uint32_t>(os, 1);
  write_le<std::uint64_t>(os, count_);
  for (const auto& part : {offsets_tmp_, records_tmp_}) {
    // streaming an empty rdbuf sets failbit
    if (std::filesystem::file_size(part) == 0) continue;
    std::ifstream in(part, std::ios::binary);
    os << in.rdbuf();
  }
  out.commit();
  finished_ = true;
}

BuildStats build_dataset(std::span<const RawPair> pairs, const Vocabulary& vocab, const std::string& out_path) {
  BuildStats stats;
  DatasetWriter writer(out_path);
  for (const auto& p : pairs) {
    const auto src = vocab.encode(p.src);
    const auto tgt = vocab.encode(p.tgt);
    if (src.empty() || tgt.empty()) {
      ++stats.skipped_empty;
      continue;
    }
    writer.add(src, tgt);
  }
  writer.finish();
  stats.written = writer.count();
  return stats;
}

// ---------------------------------------------------------------------------
// Dataset reader

DatasetFile::DatasetFile(const std::string& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) throw std::runtime_error("cannot open dataset " + path);
  try {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw std::runtime_error("cannot stat dataset " + path);
    const auto size = static_cast<std::uint64_t>(st.st_size);
    unsigned char header[kDatasetHeaderBytes];
    if (size < kDatasetHeaderBytes) throw FormatError(path + ": truncated dataset header");
    pread_exact(header, sizeof(header), 0);
    if (std::string_view(reinterpret_cast<char*>(header), 4) != "SPDS") throw FormatError(path + ": bad magic (expected SPDS)");
    const auto version = decode_le<std::uint32_t>(header + 4);
    if (version != 1) throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    count_ = decode_le<std::uint64_t>(header + 8);
    if (count_ > (size - kDatasetHeaderBytes) / 8) throw FormatError(path + ": truncated offset table");
    records_start_ = kDatasetHeaderBytes + 8 * (count_ + 1);
    if (records_start_ > size) throw FormatError(path + ": truncated offset table");
    unsigned char buf[8];
    pread_exact(buf, 8, kDatasetHeaderBytes);
    if (decode_le<std::uint64_t>(buf) != 0) throw FormatError(path + ": first offset is not zero");
    pread_exact(buf, 8, kDatasetHeaderBytes + 8 * count_);
    if (records_start_ + decode_le<std::uint64_t>(buf) != size) throw FormatError(path + ": file size does not match offset table");
  } catch (...) {
    ::close(fd_);
    throw;
  }
}

DatasetFile::~DatasetFile() {
  if (fd_ >= 0) ::close(fd_);
}

DatasetFile::DatasetFile(DatasetFile&& other) noexcept
    : path_(std::move(other.path_)), fd_(other.fd_), count_(other.count_), records_start_(other.records_start_) {
  other.fd_ = -1;
}

void DatasetFile::pread_exact(void* buf, std::size_t n, std::uint64_t offset) const {
  auto* p = static_cast<char*>(buf);
  while (n > 0) {
    const ssize_t got = ::pread(fd_, p, n, static_cast<off_t>(offset));
    if (got <= 0) throw FormatError(path_ + ": read failed at offset " + std::to_string(offset));
    p += got;
    n -= static_cast<std::size_t>(got);
    offset += static_cast<std::uint64_t>(got);
  }
}

Record DatasetFile::read_record(std::uint64_t idx) const {
  Record r;
  read_record(idx, r);
  return r;
}

void DatasetFile::read_record(std::uint64_t idx, Record& out) const {
  if (idx >= count_) throw std::out_of_range("record " + std::to_string(idx) + " out of range (count " + std::to_string(count_) + ")");
  unsigned char offs[16];
  pread_exact(offs, sizeof(offs), kDatasetHeaderBytes + 8 * idx);
  const auto begin = decode_le<std::uint64_t>(offs);
  const auto end = decode_le<std::uint64_t>(offs + 8);
  if (end <= begin || end - begin < 4) throw FormatError(path_ + ": offsets not increasing at record " + std::to_string(idx));

  std::vector<unsigned char> bytes(end - begin);
  pread_exact(bytes.data(), bytes.size(), records_start_ + begin);
  const auto src_len = decode_le<std::uint16_t>(bytes.data());
  const auto tgt_len = decode_le<std::uint16_t>(bytes.data() + 2);
  if (4 + 4 * (static_cast<std::uint64_t>(src_len) + tgt_len) != bytes.size()) {
    throw FormatError(path_ + ": record " + std::to_string(idx) + " length does not match offsets");
  }
  out.src.resize(src_len);
  out.tgt.resize(tgt_len);
  const unsigned char* p = bytes.data() + 4;
  for (auto& id : out.src) {
    id = decode_le<std::uint32_t>(p);
    p += 4;
  }
  for (auto& id : out.tgt) {
    id = decode_le<std::uint32_t>(p);
    p += 4;
  }
}

}  // namespace paraembed
