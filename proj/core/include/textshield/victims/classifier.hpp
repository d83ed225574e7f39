#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "textshield/grad/tape.hpp"
#include "textshield/text/vocabulary.hpp"

namespace textshield::victims {

std::vector<double> softmax(std::span<const double> logits);

struct Prediction {
  std::size_t label = 0;
  double confidence = 0.0;
};

// Argmax; ties go to the smaller class id.
Prediction argmax(std::span<const double> probs);

// Anything that maps an encoded sentence to class scores.
class TextClassifier {
 public:
  virtual ~TextClassifier() = default;
  virtual std::size_t num_classes() const = 0;
  virtual std::vector<double> logits(const text::EncodedExample& ex) const = 0;

  std::vector<double> probabilities(const text::EncodedExample& ex) const {
    return softmax(logits(ex));
  }
  Prediction predict(const text::EncodedExample& ex) const {
    return argmax(probabilities(ex));
  }
};

// A classifier that can be recorded on a tape starting from its embedded
// input, an [kMaxLength, k] matrix. Saliency methods differentiate with
// respect to that matrix.
class DifferentiableClassifier : public TextClassifier {
 public:
  virtual std::size_t embed_dim() const = 0;
  virtual grad::Tensor embed(const text::EncodedExample& ex) const = 0;
  // Records the model with parameters as constant leaves. Returns the logits
  // node, shaped [C] or [1, C].
  virtual grad::NodeId record(grad::Tape& tape, grad::NodeId input,
                              std::size_t true_length) const = 0;

  std::vector<double> logits(const text::EncodedExample& ex) const override;
};

// Scalar node holding logit `cls` of a [C] or [1, C] logits node.
grad::NodeId select_logit(grad::Tape& tape, grad::NodeId logits, std::size_t cls);

}  // namespace textshield::victims
