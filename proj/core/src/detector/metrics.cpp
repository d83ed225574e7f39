#include "textshield/detector/metrics.hpp"

#include "textshield/errors.hpp"

namespace textshield::detector {

DetectionMetrics evaluate_detection(const std::vector<std::size_t>& predicted,
                                    const std::vector<std::size_t>& truth) {
  if (predicted.empty()) throw Error("evaluate_detection: empty test set");
  if (predicted.size() != truth.size()) {
    throw Error("evaluate_detection: " + std::to_string(predicted.size()) +
                " predictions for " + std::to_string(truth.size()) + " labels");
  }
  DetectionMetrics m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (p && t) ++m.tp;
    else if (p) ++m.fp;
    else if (t) ++m.fn;
    else ++m.tn;
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
  m.accuracy = ratio(m.tp + m.tn, predicted.size());
  return m;
}

}  // namespace textshield::detector
