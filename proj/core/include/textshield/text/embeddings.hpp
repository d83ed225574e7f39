#pragma once

#include <cstdint>
#include <string>

#include "textshield/grad/tensor.hpp"
#include "textshield/text/vocabulary.hpp"

namespace textshield::text {

// |V| x k matrix; the PAD row is all zeros.
struct EmbeddingTable {
  grad::Tensor matrix;

  std::size_t dim() const { return matrix.shape().at(1); }
  std::size_t rows() const { return matrix.shape().at(0); }
  std::span<const double> row(std::size_t id) const {
    return matrix.values().subspan(id * dim(), dim());
  }
};

// Seeded uniform(-0.1, 0.1) row for a token. Depends only on (seed, token).
std::vector<double> seeded_row(std::uint64_t seed, std::string_view token,
                               std::size_t dim);

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                 std::uint64_t seed);

// Text format, one `token v1 ... vk` line per token. Vectors for
// in-vocabulary tokens are copied exactly; absent tokens get seeded_row().
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                               std::uint64_t seed);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace textshield::text
