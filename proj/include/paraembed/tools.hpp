#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "paraembed/model.hpp"

namespace paraembed {

// SPEM array: "SPEM" | u32 n | u32 d | n x d f32 row-major, little-endian.
struct EmbeddingArray {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::vector<float> rows;
};

inline constexpr std::size_t kEmbeddingArrayHeaderBytes = 12;

EmbeddingArray read_embedding_array(const std::string& path);

// Embeds one sentence per input line into a SPEM file, row i for line i.
// Reads the input twice (count, then embed in chunks of chunk_lines) so
// memory stays bounded. Returns n.
std::size_t embed_file(const EmbeddingModel& model, const std::string& sentences_path, const std::string& out_path,
                       std::size_t batch_size = 64, std::size_t chunk_lines = 4096);
std::size_t embed_file(const std::string& model_path, const std::string& sentences_path, const std::string& out_path,
                       std::size_t batch_size = 64);

// `sent1<TAB>sent2` lines in, `sent1<TAB>sent2<TAB>cosine` lines out (six
// decimals). Returns the number of pairs. Throws naming the line number for
// a line without a tab; no output file is left behind on failure.
std::size_t score_file(const EmbeddingModel& model, const std::string& pairs_path, const std::string& out_path);
std::size_t score_stream(const EmbeddingModel& model, std::istream& in, std::ostream& out, const std::string& source_name);

// Entry point of the `paraembed` command. Returns the process exit status.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace paraembed
