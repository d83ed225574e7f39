#include "textshield/victims/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace textshield::victims {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

Prediction argmax(std::span<const double> probs) {
  Prediction best;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (i == 0 || probs[i] > best.confidence) best = {i, probs[i]};
  }
  return best;
}

std::vector<double> DifferentiableClassifier::logits(
    const text::EncodedExample& ex) const {
  grad::Tape tape;
  const auto input = tape.leaf(embed(ex), false);
  const auto out = record(tape, input, ex.true_length);
  const auto v = tape.value(out).values();
  return {v.begin(), v.end()};
}

grad::NodeId select_logit(grad::Tape& tape, grad::NodeId logits, std::size_t cls) {
  if (tape.value(logits).rank() == 1) return tape.pick(logits, cls);
  return tape.slice(logits, 1, cls, cls + 1);
}

}  // namespace textshield::victims
