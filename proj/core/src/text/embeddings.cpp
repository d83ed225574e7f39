#include "textshield/text/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::text {

std::vector<double> seeded_row(std::uint64_t seed, std::string_view token,
                               std::size_t dim) {
  std::mt19937_64 rng(derive_seed(seed, token));
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<double> row(dim);
  for (double& v : row) v = u(rng);
  return row;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                 std::uint64_t seed) {
  EmbeddingTable table{grad::Tensor({vocab.size(), dim})};
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (id == kPadId) continue;
    const auto row = seeded_row(seed, vocab.token(id), dim);
    std::copy(row.begin(), row.end(), table.matrix.data().begin() + id * dim);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                               std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read embeddings " + path);
  std::size_t dim = 0;
  std::vector<std::pair<std::size_t, std::vector<double>>> found;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": bad number '" + field + "'");
      }
    }
    if (values.empty()) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": no vector");
    }
    if (dim == 0) dim = values.size();
    if (values.size() != dim) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": dimension " +
                        std::to_string(values.size()) + " != " +
                        std::to_string(dim));
    }
    if (vocab.contains(token)) found.emplace_back(vocab.id(token), std::move(values));
  }
  if (dim == 0) throw FormatError(path + ": no embedding lines");
  EmbeddingTable table = random_embeddings(vocab, dim, seed);
  for (const auto& [id, values] : found) {
    if (id == kPadId) continue;
    std::copy(values.begin(), values.end(), table.matrix.data().begin() + id * dim);
  }
  return table;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace textshield::text
