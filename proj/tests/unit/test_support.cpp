#include "test_support.hpp"

#include <algorithm>
#include <cmath>

namespace textshield::testing {

double relative_error(const grad::Tensor& a, const grad::Tensor& b) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

grad::Tensor random_tensor(grad::Shape shape, std::mt19937_64& rng, double lo,
                           double hi) {
  grad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace textshield::testing

namespace textshield::testing {

ToyCorpus separable_corpus(std::size_t n, std::uint64_t seed,
                           std::size_t words_per_class) {
  ToyCorpus toy;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < words_per_class; ++j) {
      toy.vocab.add("c" + std::to_string(c) + "w" + std::to_string(j), 1);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(5, 10);
  std::uniform_int_distribution<std::size_t> word(0, words_per_class - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    text::Tokens t;
    const std::size_t L = len(rng);
    for (std::size_t j = 0; j < L; ++j) {
      t.push_back("c" + std::to_string(c) + "w" + std::to_string(word(rng)));
    }
    toy.examples.push_back(text::encode(t, toy.vocab, c));
  }
  return toy;
}

}  // namespace textshield::testing
