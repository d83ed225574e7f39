#pragma once

#include <cstddef>
#include <vector>

namespace textshield::detector {

// Adversarial (label 1) is the positive class.
struct DetectionMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

// Throws Error on empty input or length mismatch. Undefined ratios are 0.
DetectionMetrics evaluate_detection(const std::vector<std::size_t>& predicted,
                                    const std::vector<std::size_t>& truth);

}  // namespace textshield::detector
