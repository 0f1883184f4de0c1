#include "paraembed/synthetic.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "paraembed/random.hpp"

namespace paraembed {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr", "pl"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

std::vector<std::string> make_words(std::size_t count, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t syllables = 2 + uniform_index(rng, 2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[uniform_index(rng, std::size(kOnsets))];
      w += kVowels[uniform_index(rng, std::size(kVowels))];
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

SyntheticCorpus make_paraphrase_corpus(const SyntheticSpec& spec) {
  if (spec.concepts == 0 || spec.synonyms == 0 || spec.min_words == 0 || spec.min_words > spec.max_words) {
    throw std::invalid_argument("synthetic corpus: bad spec");
  }
  Rng rng(spec.seed);
  SyntheticCorpus corpus;
  corpus.word_types = make_words(spec.concepts * spec.synonyms, rng);
  auto surface = [&](std::size_t concept_id, std::size_t syn) -> const std::string& {
    return corpus.word_types[concept_id * spec.synonyms + syn];
  };

  std::set<std::string> used;
  auto make_pair = [&]() {
    while (true) {
      const std::size_t len = spec.min_words + uniform_index(rng, spec.max_words - spec.min_words + 1);
      std::vector<std::size_t> concepts(len), syn(len);
      for (std::size_t i = 0; i < len; ++i) {
        concepts[i] = uniform_index(rng, spec.concepts);
        syn[i] = uniform_index(rng, spec.synonyms);
      }
      std::vector<std::string> src, tgt;
      for (std::size_t i = 0; i < len; ++i) {
        src.push_back(surface(concepts[i], syn[i]));
        std::size_t other = syn[i];
        if (spec.synonyms > 1 && uniform_unit(rng) < spec.substitution_prob) {
          other = (syn[i] + 1 + uniform_index(rng, spec.synonyms - 1)) % spec.synonyms;
        }
        tgt.push_back(surface(concepts[i], other));
      }
      if (uniform_unit(rng) < spec.reorder_prob && len > 1) {
        // Clause swap: rotate around a random split point.
        const std::size_t split = 1 + uniform_index(rng, len - 1);
        std::rotate(tgt.begin(), tgt.begin() + static_cast<std::ptrdiff_t>(split), tgt.end());
      } else if (len > 1) {
        const std::size_t i = uniform_index(rng, len - 1);
        std::swap(tgt[i], tgt[i + 1]);
      }
      RawPair p{join(src), join(tgt), std::nullopt};
      if (used.insert(p.src).second) return p;
    }
  };

  corpus.train.reserve(spec.train_pairs);
  for (std::size_t i = 0; i < spec.train_pairs; ++i) corpus.train.push_back(make_pair());
  corpus.held_out.reserve(spec.held_out_pairs);
  for (std::size_t i = 0; i < spec.held_out_pairs; ++i) corpus.held_out.push_back(make_pair());
  return corpus;
}

std::vector<std::string> make_random_sentences(std::size_t count, std::size_t words, std::size_t pool_size,
                                               std::uint64_t seed) {
  Rng rng(seed);
  const auto pool = make_words(std::max<std::size_t>(pool_size, 1), rng);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = std::max<std::size_t>(1, words - words / 4 + uniform_index(rng, words / 2 + 1));
    std::string s;
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s += ' ';
      s += pool[uniform_index(rng, pool.size())];
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace paraembed
