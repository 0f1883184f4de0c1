#include "paraembed/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "paraembed/parallel.hpp"
#include "paraembed/random.hpp"

namespace paraembed {

void TrainConfig::validate() const {
  if (dim == 0) throw std::invalid_argument("train: dim must be positive");
  if (batch_size < 2) throw std::invalid_argument("train: batch size must be at least 2 so a negative exists");
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw std::invalid_argument("train: margin must be finite and >= 0");
  if (anneal_rate == 0) throw std::invalid_argument("train: anneal rate must be at least 1");
  if (mega_batch == 0) throw std::invalid_argument("train: mega-batch size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train: dropout must be in [0, 1)");
}

std::size_t mega_batch_size_at(std::uint64_t step, const TrainConfig& cfg) {
  const std::uint64_t rate = std::max<std::size_t>(cfg.anneal_rate, 1);
  const std::uint64_t grown = 1 + step / rate;
  return static_cast<std::size_t>(std::min<std::uint64_t>(grown, cfg.mega_batch));
}

// ---------------------------------------------------------------------------
// Negative selection

namespace {

// Unit-normalized copies in double; zero rows stay zero so their cosine is 0.
std::vector<double> normalized_rows(const Matrix& m) {
  std::vector<double> out(m.rows * m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = m.row(i);
    double norm = 0.0;
    for (float x : r) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (std::size_t k = 0; k < m.cols; ++k) out[i * m.cols + k] = r[k] / norm;
  }
  return out;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

// For query i, scans `opposing` (indices 0..n) then, when any_side,
// `same` (indices n..2n). Skips opposing[i] and same[i].
std::vector<std::size_t> hardest(const std::vector<double>& queries, const std::vector<double>& opposing,
                                 const std::vector<double>& same, std::size_t n, std::size_t dim, bool any_side) {
  std::vector<std::size_t> out(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* q = queries.data() + i * dim;
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double s = dot(q, opposing.data() + j * dim, dim);
        if (s > best) {
          best = s;
          best_j = j;
        }
      }
      if (any_side) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double s = dot(q, same.data() + j * dim, dim);
          if (s > best) {
            best = s;
            best_j = n + j;
          }
        }
      }
      out[i] = best_j;
    }
  });
  return out;
}

}  // namespace

NegativeSelection select_negatives(const MegaBatch& mb, const TrainConfig& cfg) {
  const std::size_t n = mb.size();
  if (mb.src_embeds.rows != n || mb.tgt_embeds.rows != n || mb.src_embeds.cols != mb.tgt_embeds.cols) {
    throw std::invalid_argument("select_negatives: embedding matrices do not match the pair count");
  }
  // Every pool excludes the partner and the query itself, so one pair leaves
  // nothing to choose from.
  if (n < 2) throw std::invalid_argument("select_negatives: candidate pool is empty (mega-batch holds a single pair)");

  const std::size_t dim = mb.src_embeds.cols;
  const bool any_side = cfg.negative_pool == NegativePool::kAnySide;
  const auto src = normalized_rows(mb.src_embeds);
  const auto tgt = normalized_rows(mb.tgt_embeds);

  NegativeSelection sel;
  sel.neg_index = hardest(src, tgt, src, n, dim, any_side);
  if (cfg.bidirectional) sel.reverse_neg_index = hardest(tgt, src, tgt, n, dim, any_side);
  return sel;
}

// ---------------------------------------------------------------------------
// Gradients

SparseGradient::SparseGradient(std::size_t num_rows, std::size_t dim) : dim_(dim), slot_(num_rows, -1) {}

std::span<double> SparseGradient::row_for(std::size_t row) {
  if (row >= slot_.size()) throw std::out_of_range("gradient row " + std::to_string(row) + " out of range");
  if (slot_[row] < 0) {
    slot_[row] = static_cast<std::int32_t>(rows_.size());
    rows_.push_back(static_cast<std::uint32_t>(row));
    values_.resize(values_.size() + dim_, 0.0);
  }
  return {values_.data() + static_cast<std::size_t>(slot_[row]) * dim_, dim_};
}

void SparseGradient::clear() {
  for (auto r : rows_) slot_[r] = -1;
  rows_.clear();
  values_.clear();
}

std::vector<double> SparseGradient::dense_row(std::size_t row) const {
  std::vector<double> out(dim_, 0.0);
  if (row < slot_.size() && slot_[row] >= 0) {
    const double* p = values_.data() + static_cast<std::size_t>(slot_[row]) * dim_;
    std::copy(p, p + dim_, out.begin());
  }
  return out;
}

namespace {

struct Pooled {
  std::vector<double> vec;
  double norm = 0.0;
  std::size_t kept = 0;
  bool masked = false;
};

bool mask_active(const TokenSeq& seq) {
  if (seq.keep.empty()) return false;
  if (seq.keep.size() != seq.ids.size()) throw std::invalid_argument("dropout mask length differs from token count");
  return std::any_of(seq.keep.begin(), seq.keep.end(), [](std::uint8_t k) { return k != 0; });
}

template <class Real>
Pooled pool(const ParamView<Real>& p, const TokenSeq& seq) {
  Pooled out;
  out.vec.assign(p.dim, 0.0);
  out.masked = mask_active(seq);
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (out.masked && !seq.keep[i]) continue;
    if (seq.ids[i] >= p.vocab_size) throw std::out_of_range("token id " + std::to_string(seq.ids[i]) + " >= vocabulary size");
    const Real* r = p.params.data() + p.row_index(seq.ids[i], seq.side) * p.dim;
    for (std::size_t k = 0; k < p.dim; ++k) out.vec[k] += static_cast<double>(r[k]);
    ++out.kept;
  }
  if (out.kept > 0) {
    for (double& x : out.vec) x /= static_cast<double>(out.kept);
  }
  double sq = 0.0;
  for (double x : out.vec) sq += x * x;
  out.norm = std::sqrt(sq);
  return out;
}

double cos_of(const Pooled& a, const Pooled& b) {
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  double d = 0.0;
  for (std::size_t k = 0; k < a.vec.size(); ++k) d += a.vec[k] * b.vec[k];
  return d / (a.norm * b.norm);
}

// d cos(a, b) / d a, scaled by `scale` and added into out.
void add_cos_grad(const Pooled& a, const Pooled& b, double c, double scale, std::vector<double>& out) {
  if (a.norm == 0.0 || b.norm == 0.0) return;
  const double inv_ab = 1.0 / (a.norm * b.norm);
  const double c_over_aa = c / (a.norm * a.norm);
  for (std::size_t k = 0; k < a.vec.size(); ++k) out[k] += scale * (b.vec[k] * inv_ab - c_over_aa * a.vec[k]);
}

template <class Real>
void scatter(const ParamView<Real>& p, const TokenSeq& seq, const Pooled& pooled, const std::vector<double>& g,
             SparseGradient& grad) {
  if (pooled.kept == 0) return;
  const double share = 1.0 / static_cast<double>(pooled.kept);
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (pooled.masked && !seq.keep[i]) continue;
    auto row = grad.row_for(p.row_index(seq.ids[i], seq.side));
    for (std::size_t k = 0; k < p.dim; ++k) row[k] += share * g[k];
  }
}

}  // namespace

template <class Real>
LossStats loss_gradients(const ParamView<Real>& params, std::span<const Triplet> batch, double margin,
                         SparseGradient* grad) {
  LossStats stats;
  std::vector<double> ga(params.dim), gp(params.dim), gn(params.dim), gr(params.dim);
  for (const auto& ex : batch) {
    const Pooled a = pool(params, ex.anchor);
    const Pooled p = pool(params, ex.positive);
    const Pooled n = pool(params, ex.negative);
    const double f_pos = cos_of(a, p);
    const double f_neg = cos_of(a, n);

    std::fill(ga.begin(), ga.end(), 0.0);
    std::fill(gp.begin(), gp.end(), 0.0);
    std::fill(gn.begin(), gn.end(), 0.0);
    std::fill(gr.begin(), gr.end(), 0.0);

    const double forward = margin - f_pos + f_neg;
    ++stats.terms;
    bool any_active = false;
    if (forward > 0.0) {
      stats.loss += forward;
      ++stats.active;
      any_active = true;
      add_cos_grad(a, p, f_pos, -1.0, ga);
      add_cos_grad(p, a, f_pos, -1.0, gp);
      add_cos_grad(a, n, f_neg, +1.0, ga);
      add_cos_grad(n, a, f_neg, +1.0, gn);
    }

    Pooled r;
    bool reverse_active = false;
    if (ex.reverse_negative) {
      r = pool(params, *ex.reverse_negative);
      const double f_rev = cos_of(r, p);
      const double backward = margin - f_pos + f_rev;
      ++stats.terms;
      if (backward > 0.0) {
        stats.loss += backward;
        ++stats.active;
        any_active = reverse_active = true;
        add_cos_grad(a, p, f_pos, -1.0, ga);
        add_cos_grad(p, a, f_pos, -1.0, gp);
        add_cos_grad(p, r, f_rev, +1.0, gp);
        add_cos_grad(r, p, f_rev, +1.0, gr);
      }
    }

    if (grad && any_active) {
      scatter(params, ex.anchor, a, ga, *grad);
      scatter(params, ex.positive, p, gp, *grad);
      if (forward > 0.0) scatter(params, ex.negative, n, gn, *grad);
      if (reverse_active) scatter(params, *ex.reverse_negative, r, gr, *grad);
    }
  }
  return stats;
}

template LossStats loss_gradients<float>(const ParamView<float>&, std::span<const Triplet>, double, SparseGradient*);
template LossStats loss_gradients<double>(const ParamView<double>&, std::span<const Triplet>, double, SparseGradient*);

LossStats loss_gradients(const EmbeddingModel& model, std::span<const Triplet> batch, double margin,
                         SparseGradient* grad) {
  const ParamView<float> view{model.parameters(), model.vocab_size(), model.dim(), model.tied()};
  return loss_gradients(view, batch, margin, grad);
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(AdamState& state, std::span<float> params, const SparseGradient& grads, double lr) {
  const std::size_t dim = grads.dim();
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter count");
  }
  for (std::size_t k = 0; k < grads.rows().size(); ++k) {
    if ((grads.rows()[k] + 1) * dim > params.size()) throw std::out_of_range("adam_step: gradient row out of range");
    for (double g : grads.values(k)) {
      if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient in row " + std::to_string(grads.rows()[k]));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < grads.rows().size(); ++k) {
    const std::size_t base = static_cast<std::size_t>(grads.rows()[k]) * dim;
    const auto g = grads.values(k);
    for (std::size_t i = 0; i < dim; ++i) {
      const std::size_t idx = base + i;
      const double m = state.beta1 * state.m[idx] + (1.0 - state.beta1) * g[i];
      const double v = state.beta2 * state.v[idx] + (1.0 - state.beta2) * g[i] * g[i];
      state.m[idx] = static_cast<float>(m);
      state.v[idx] = static_cast<float>(v);
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      params[idx] = static_cast<float>(params[idx] - lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_ids(const Record& r, std::size_t vocab_size, std::uint64_t idx) {
  for (const auto* side : {&r.src, &r.tgt}) {
    for (TokenId id : *side) {
      if (id >= vocab_size) {
        throw std::out_of_range("dataset record " + std::to_string(idx) + " holds token id " + std::to_string(id) +
                                " but the vocabulary has " + std::to_string(vocab_size) + " entries");
      }
    }
  }
}

std::vector<std::uint8_t> draw_mask(std::size_t n, double dropout, Rng& rng) {
  std::vector<std::uint8_t> keep(n);
  for (auto& k : keep) k = uniform_unit(rng) >= dropout ? 1 : 0;
  return keep;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetFile& data, const Vocabulary& vocab,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  return train_from(EmbeddingModel::initialized(vocab, cfg.dim, cfg.seed, cfg.tied), cfg, data, on_epoch);
}

TrainResult train_from(EmbeddingModel model, const TrainConfig& cfg, const DatasetFile& data,
                       const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  if (model.dim() != cfg.dim) throw std::invalid_argument("train: model dimension differs from config");
  if (model.tied() != cfg.tied) throw std::invalid_argument("train: model tying differs from config");
  TrainResult result{std::move(model), {}};
  EmbeddingModel& m = result.model;
  if (cfg.epochs == 0) return result;
  if (data.count() < cfg.batch_size) {
    throw std::invalid_argument("train: dataset holds " + std::to_string(data.count()) + " pairs, fewer than one batch of " +
                                std::to_string(cfg.batch_size));
  }

  const std::size_t vocab_size = m.vocab_size();
  const std::size_t blocks = data.count() / cfg.batch_size;
  AdamState adam(m.parameters().size());
  SparseGradient grad(m.num_tables() * vocab_size, m.dim());
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::uint32_t> order(blocks);
    std::iota(order.begin(), order.end(), 0u);
    fisher_yates(std::span<std::uint32_t>(order), rng);

    double loss_sum = 0.0;
    std::size_t examples = 0, active = 0, terms = 0, last_mega = 0;
    std::size_t pos = 0;
    while (pos < blocks) {
      const std::size_t mega = std::min(mega_batch_size_at(step, cfg), blocks - pos);
      last_mega = mega_batch_size_at(step, cfg);

      MegaBatch mb;
      mb.pairs.resize(mega * cfg.batch_size);
      for (std::size_t b = 0; b < mega; ++b) {
        const std::uint64_t first = static_cast<std::uint64_t>(order[pos + b]) * cfg.batch_size;
        for (std::size_t k = 0; k < cfg.batch_size; ++k) {
          Record& r = mb.pairs[b * cfg.batch_size + k];
          data.read_record(first + k, r);
          check_ids(r, vocab_size, first + k);
        }
      }
      const std::size_t n = mb.pairs.size();
      mb.src_embeds = Matrix(n, m.dim());
      mb.tgt_embeds = Matrix(n, m.dim());
      parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          embed_tokens_into(m, mb.pairs[i].src, Side::kSource, {}, mb.src_embeds.row(i));
          embed_tokens_into(m, mb.pairs[i].tgt, Side::kTarget, {}, mb.tgt_embeds.row(i));
        }
      });
      const NegativeSelection sel = select_negatives(mb, cfg);

      auto candidate = [&](std::size_t j, bool reverse) -> std::pair<const std::vector<TokenId>*, Side> {
        const bool opposing = j < n;
        const std::size_t idx = opposing ? j : j - n;
        const bool target = reverse ? !opposing : opposing;
        return {target ? &mb.pairs[idx].tgt : &mb.pairs[idx].src, target ? Side::kTarget : Side::kSource};
      };

      for (std::size_t b = 0; b < mega; ++b) {
        std::vector<Triplet> batch(cfg.batch_size);
        std::vector<std::vector<std::uint8_t>> masks;
        masks.reserve(cfg.batch_size * 4);
        auto seq = [&](const std::vector<TokenId>& ids, Side side) {
          TokenSeq s{ids, side, {}};
          if (cfg.dropout > 0.0) {
            masks.push_back(draw_mask(ids.size(), cfg.dropout, rng));
            s.keep = masks.back();
          }
          return s;
        };
        for (std::size_t k = 0; k < cfg.batch_size; ++k) {
          const std::size_t i = b * cfg.batch_size + k;
          Triplet& t = batch[k];
          t.anchor = seq(mb.pairs[i].src, Side::kSource);
          t.positive = seq(mb.pairs[i].tgt, Side::kTarget);
          const auto [neg_ids, neg_side] = candidate(sel.neg_index[i], false);
          t.negative = seq(*neg_ids, neg_side);
          if (cfg.bidirectional) {
            const auto [rev_ids, rev_side] = candidate(sel.reverse_neg_index[i], true);
            t.reverse_negative = seq(*rev_ids, rev_side);
          }
        }

        grad.clear();
        const LossStats stats = loss_gradients(m, batch, cfg.margin, &grad);
        adam_step(adam, m.parameters(), grad, cfg.lr);
        loss_sum += stats.loss;
        active += stats.active;
        terms += stats.terms;
        examples += cfg.batch_size;
        ++step;
      }
      pos += mega;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = examples ? loss_sum / static_cast<double>(examples) : 0.0;
    em.active_fraction = terms ? static_cast<double>(active) / static_cast<double>(terms) : 0.0;
    em.mega_batch_size = last_mega;
    result.metrics.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return result;
}

}  // namespace paraembed
