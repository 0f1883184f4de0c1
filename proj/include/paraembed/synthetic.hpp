#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paraembed/corpus.hpp"

namespace paraembed {

// Seeded generator for paraphrase pairs built from synonym substitution and
// reordering. Each concept has several pseudo-word surface forms; a sentence
// is a random concept sequence and its paraphrase swaps surface forms and
// moves words around.
struct SyntheticSpec {
  std::size_t concepts = 70;
  std::size_t synonyms = 3;
  std::size_t train_pairs = 10000;
  std::size_t held_out_pairs = 500;
  std::size_t min_words = 6;
  std::size_t max_words = 12;
  double substitution_prob = 0.8;
  double reorder_prob = 0.5;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<std::string> word_types;
  std::vector<RawPair> train;
  std::vector<RawPair> held_out;
};

SyntheticCorpus make_paraphrase_corpus(const SyntheticSpec& spec);

// `count` sentences of roughly `words` pseudo-words each, drawn from a pool
// of `pool_size` distinct words.
std::vector<std::string> make_random_sentences(std::size_t count, std::size_t words, std::size_t pool_size,
                                               std::uint64_t seed);

}  // namespace paraembed
