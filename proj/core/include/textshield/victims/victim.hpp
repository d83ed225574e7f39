#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textshield/nn/checkpoint.hpp"
#include "textshield/nn/params.hpp"
#include "textshield/text/embeddings.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::victims {

enum class Arch { TextCnn, Lstm };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& s);  // ConfigError when unknown

struct VictimConfig {
  Arch arch = Arch::TextCnn;
  std::size_t num_classes = 2;
  std::vector<std::size_t> widths{3, 4, 5};
  std::size_t filters = 100;
  std::size_t hidden = 128;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double dropout = 0.5;
};

inline constexpr grad::NodeId kUnbound = static_cast<grad::NodeId>(-1);

// Tape ids of one recorded forward pass.
struct Trace {
  grad::NodeId logits = 0;
  // params[i] is the leaf of parameter i; the embedding table (index 0) is
  // never bound (kUnbound), its gradient arrives through the input leaf.
  std::vector<grad::NodeId> params;
};

// TextCNN (Kim-style) or single-layer LSTM over a trainable embedding table.
// Parameter 0 is always the embedding table.
class VictimModel : public DifferentiableClassifier {
 public:
  VictimModel(const VictimConfig& cfg, text::EmbeddingTable embeddings,
              std::uint64_t seed);

  const VictimConfig& config() const { return cfg_; }
  std::size_t num_classes() const override { return cfg_.num_classes; }
  std::size_t embed_dim() const override { return params_[0].shape()[1]; }
  std::size_t vocab_size() const { return params_[0].shape()[0]; }

  grad::Tensor embed(const text::EncodedExample& ex) const override;
  grad::NodeId record(grad::Tape& tape, grad::NodeId input,
                      std::size_t true_length) const override;

  // Forward pass with optional dropout mask values (one per pooled/hidden
  // feature, already scaled); trainable marks parameter leaves.
  Trace trace(grad::Tape& tape, grad::NodeId input, std::size_t true_length,
              bool trainable, const std::vector<double>* dropout_mask) const;
  std::size_t feature_width() const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  nn::Checkpoint to_checkpoint() const;
  static VictimModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  VictimConfig cfg_;
  nn::ParamStore params_;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

// Adam on mean cross-entropy over mini-batches; reshuffles every epoch from
// `cfg.seed`. Throws NumericError on a non-finite loss.
TrainResult train_victim(VictimModel& model,
                         const std::vector<text::EncodedExample>& data,
                         const TrainConfig& cfg);

double accuracy(const TextClassifier& model,
                const std::vector<text::EncodedExample>& data);

void save_victim(const VictimModel& model, const std::string& path);
VictimModel load_victim(const std::string& path);

}  // namespace textshield::victims
