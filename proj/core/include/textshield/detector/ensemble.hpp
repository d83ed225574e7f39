#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "textshield/nn/checkpoint.hpp"
#include "textshield/nn/params.hpp"
#include "textshield/saliency/awi.hpp"

namespace textshield::detector {

using Awi4 = std::array<saliency::AwiMatrix, 4>;

// What the combiner reads: the four 2-wide sub-detector logits (8 inputs) or
// the four final LSTM hidden states (4 * hidden inputs).
enum class CombinerMode { Logits, Hidden };
// What a sub-detector reads at each step: the full |Y|-wide AWI row, or only
// the column of the predicted class.
enum class InputView { Matrix, Column };

std::string to_string(CombinerMode m);
std::string to_string(InputView v);
CombinerMode parse_combiner_mode(const std::string& s);
InputView parse_input_view(const std::string& s);

using Mask = std::array<bool, 4>;  // VG, GBP, LRP, IG
inline constexpr Mask kAllActive{true, true, true, true};

struct DetectorConfig {
  std::size_t num_classes = 2;
  std::size_t hidden = 128;
  std::size_t combiner_hidden = 64;
  CombinerMode mode = CombinerMode::Logits;
  InputView view = InputView::Matrix;
  Mask active = kAllActive;
};

struct DetectorOutput {
  std::size_t verdict = 0;  // 1 = adversarial
  std::array<std::array<double, 2>, 4> sub_logits{};
  std::array<double, 2> probs{};
};

struct BatchTrace {
  grad::NodeId logits = 0;  // [B, 2] combiner logits
  std::vector<grad::NodeId> params;
  std::array<grad::NodeId, 4> sub_logits{};
};

// Four LSTM sub-detectors (one per saliency method) and an MLP combiner.
// Each LSTM reads its AWI sequence from position 127 down to 0.
// Inactive sub-detectors feed zeros to the combiner.
class DetectorEnsemble {
 public:
  DetectorEnsemble(const DetectorConfig& cfg, std::uint64_t seed);

  const DetectorConfig& config() const { return cfg_; }
  void set_active(const Mask& mask);
  std::size_t input_width() const;
  std::size_t combiner_input() const;

  // Multiplies method m's AWI entries before they enter its LSTM.
  const std::array<double, 4>& input_scale() const { return scale_; }
  void set_input_scale(const std::array<double, 4>& s) { scale_ = s; }

  DetectorOutput forward(const Awi4& awi) const;
  std::vector<DetectorOutput> forward_batch(std::span<const Awi4* const> batch) const;
  BatchTrace trace(grad::Tape& tape, std::span<const Awi4* const> batch,
                   bool trainable) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  // Parameter indices owned by sub-detector m.
  std::vector<std::size_t> sub_params(std::size_t m) const;

  nn::Checkpoint to_checkpoint() const;
  static DetectorEnsemble from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  grad::Tensor sequence(std::span<const Awi4* const> batch, std::size_t m) const;

  DetectorConfig cfg_;
  nn::ParamStore params_;
  std::array<double, 4> scale_{1.0, 1.0, 1.0, 1.0};
};

void save_detector(const DetectorEnsemble& ens, const std::string& path);
DetectorEnsemble load_detector(const std::string& path);

}  // namespace textshield::detector
