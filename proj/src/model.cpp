#include "paraembed/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "paraembed/io.hpp"
#include "paraembed/parallel.hpp"
#include "paraembed/random.hpp"

namespace paraembed {

namespace {
constexpr char kModelMagic[4] = {'S', 'P', 'P', 'E'};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

EmbeddingModel::EmbeddingModel(Vocabulary vocab, std::size_t dim, bool tied)
    : vocab_(std::make_shared<const Vocabulary>(std::move(vocab))), dim_(dim), tied_(tied) {
  if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
  params_.assign(num_tables() * vocab_->size() * dim_, 0.0f);
}

EmbeddingModel EmbeddingModel::initialized(Vocabulary vocab, std::size_t dim, std::uint64_t seed, bool tied) {
  EmbeddingModel model(std::move(vocab), dim, tied);
  Rng rng(seed);
  const double bound = 0.1 / std::sqrt(static_cast<double>(dim));
  for (float& p : model.params_) p = static_cast<float>((2.0 * uniform_unit(rng) - 1.0) * bound);
  return model;
}

std::span<const float> EmbeddingModel::row(TokenId id, Side side) const {
  if (id >= vocab_->size()) throw std::out_of_range("token id " + std::to_string(id) + " >= vocabulary size " + std::to_string(vocab_->size()));
  const std::size_t table = (tied_ || side == Side::kSource) ? 0 : 1;
  return {params_.data() + (table * vocab_->size() + id) * dim_, dim_};
}

std::span<float> EmbeddingModel::mutable_row(TokenId id, Side side) {
  auto r = std::as_const(*this).row(id, side);
  return {const_cast<float*>(r.data()), r.size()};
}

bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
  return a.dim_ == b.dim_ && a.tied_ == b.tied_ && a.params_ == b.params_ && *a.vocab_ == *b.vocab_;
}

void embed_tokens_into(const EmbeddingModel& model, std::span<const TokenId> ids, Side side,
                       std::span<const std::uint8_t> keep, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  if (ids.empty()) return;
  if (!keep.empty() && keep.size() != ids.size()) throw std::invalid_argument("dropout mask length differs from token count");
  bool use_mask = false;
  if (!keep.empty()) use_mask = std::any_of(keep.begin(), keep.end(), [](std::uint8_t k) { return k != 0; });

  std::size_t kept = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (use_mask && !keep[i]) continue;
    const auto r = model.row(ids[i], side);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += r[k];
    ++kept;
  }
  const float inv = 1.0f / static_cast<float>(kept);
  for (float& x : out) x *= inv;
}

SentenceEmbedding embed_tokens(const EmbeddingModel& model, std::span<const TokenId> ids, Side side,
                               std::span<const std::uint8_t> keep) {
  SentenceEmbedding out(model.dim());
  embed_tokens_into(model, ids, side, keep, out);
  return out;
}

double cosine(std::span<const float> u, std::span<const float> v) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  const std::size_t n = std::min(u.size(), v.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

double score_pair(const EmbeddingModel& model, std::string_view s, std::string_view t) {
  const auto s_ids = model.vocab().encode(s);
  const auto t_ids = model.vocab().encode(t);
  return cosine(embed_tokens(model, s_ids, Side::kSource), embed_tokens(model, t_ids, Side::kTarget));
}

Matrix embed_encoded(const EmbeddingModel& model, std::span<const std::vector<TokenId>> encoded, Side side,
                     std::size_t batch_size) {
  Matrix out(encoded.size(), model.dim());
  if (encoded.empty()) return out;
  if (batch_size == 0) batch_size = 1;

  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return encoded[a].size() < encoded[b].size(); });

  const std::size_t batches = (order.size() + batch_size - 1) / batch_size;
  parallel_for_each_dynamic(batches, [&](std::size_t b) {
    const std::size_t lo = b * batch_size;
    const std::size_t hi = std::min(order.size(), lo + batch_size);
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      embed_tokens_into(model, encoded[i], side, {}, out.row(i));
    }
  });
  return out;
}

Matrix embed_batch(const EmbeddingModel& model, std::span<const std::string> sentences, Side side,
                   std::size_t batch_size) {
  std::vector<std::vector<TokenId>> encoded(sentences.size());
  parallel_for(sentences.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) encoded[i] = model.vocab().encode(sentences[i]);
  });
  return embed_encoded(model, encoded, side, batch_size);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_model(std::ostream& os, const EmbeddingModel& model) {
  os.write(kModelMagic, 4);
  write_le<std::uint32_t>(os, kModelVersion);
  write_le<std::uint8_t>(os, model.tied() ? 1 : 0);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.vocab_size()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.dim()));
  const std::string vocab = model.vocab().serialize();
  write_le<std::uint64_t>(os, vocab.size());
  os.write(vocab.data(), static_cast<std::streamsize>(vocab.size()));
  const auto params = model.parameters();
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
  } else {
    for (float p : params) write_le<float>(os, p);
  }
}

}  // namespace

std::string serialize_model(const EmbeddingModel& model) {
  std::ostringstream os(std::ios::binary);
  write_model(os, model);
  return std::move(os).str();
}

namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("model: truncated file");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <class T>
  T get() {
    return decode_le<T>(reinterpret_cast<const unsigned char*>(take(sizeof(T)).data()));
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

EmbeddingModel deserialize_model(std::string_view bytes) {
  Cursor cur(bytes);
  if (cur.take(4) != std::string_view(kModelMagic, 4)) throw FormatError("model: bad magic (expected SPPE)");
  const auto version = cur.get<std::uint32_t>();
  if (version != kModelVersion) throw FormatError("model: unsupported version " + std::to_string(version));
  const auto tied_flag = cur.get<std::uint8_t>();
  if (tied_flag > 1) throw FormatError("model: bad tied flag");
  const auto vocab_size = cur.get<std::uint32_t>();
  const auto dim = cur.get<std::uint32_t>();
  if (dim == 0) throw FormatError("model: zero dimension");
  const auto vocab_len = cur.get<std::uint64_t>();
  if (vocab_len > cur.remaining()) throw FormatError("model: truncated file");
  Vocabulary vocab = Vocabulary::deserialize(cur.take(vocab_len));
  if (vocab.size() != vocab_size) throw FormatError("model: vocabulary size does not match header");

  const std::size_t payload = (tied_flag ? 1 : 2) * static_cast<std::size_t>(vocab_size) * dim * sizeof(float);
  if (cur.remaining() < payload) throw FormatError("model: truncated file");
  if (cur.remaining() > payload) throw FormatError("model: trailing bytes after parameters");

  EmbeddingModel model(std::move(vocab), dim, tied_flag == 1);
  auto params = model.parameters();
  const auto* raw = reinterpret_cast<const unsigned char*>(cur.take(payload).data());
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = decode_le<float>(raw + i * sizeof(float));
    if (!std::isfinite(params[i])) throw FormatError("model: non-finite parameter at index " + std::to_string(i));
  }
  return model;
}

void save_model(const EmbeddingModel& model, const std::string& path) {
  AtomicOutputFile out(path);
  write_model(out.stream(), model);
  out.commit();
}

EmbeddingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace paraembed
