#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "textshield/grad/tape.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::saliency {

enum class Method { VG, GBP, LRP, IG };
inline constexpr std::array<Method, 4> kMethods{Method::VG, Method::GBP,
                                                Method::LRP, Method::IG};

std::string_view to_string(Method m);
Method parse_method(std::string_view s);  // ConfigError when unknown

// What the backward passes start from. LRP always starts from the logit.
enum class Target { Logit, Probability };

struct SaliencyOptions {
  Target target = Target::Logit;
  // VG/GBP reduce the k gradient components by averaging the signed values,
  // then take |.|; this flips the order.
  bool abs_then_average = false;
  // Zero rows at positions >= true_length.
  bool mask_pad = false;
  std::size_t ig_steps = 32;
  double lrp_epsilon = 1e-6;
};

// Per-sentence word importance, [kMaxLength, C], entries >= 0.
struct AwiMatrix {
  Method method = Method::VG;
  std::size_t predicted = 0;
  grad::Tensor values;

  double at(std::size_t word, std::size_t cls) const { return values.at(word, cls); }
};

// An embedded sentence: [kMaxLength, k] rows plus the real length.
struct EmbeddedInput {
  grad::Tensor embedded;
  std::size_t true_length = 0;
};

EmbeddedInput embed(const victims::DifferentiableClassifier& model,
                    const text::EncodedExample& ex);

// Signed per-word scores, [rows, C], before the absolute value. VG/GBP
// average over k; LRP and IG sum over k.
grad::Tensor signed_gradient(const victims::DifferentiableClassifier& model,
                             const EmbeddedInput& in, grad::BackwardMode mode,
                             const SaliencyOptions& opts = {});
grad::Tensor signed_lrp(const victims::DifferentiableClassifier& model,
                        const EmbeddedInput& in, double epsilon);
grad::Tensor signed_ig(const victims::DifferentiableClassifier& model,
                       const EmbeddedInput& in, std::size_t steps,
                       const SaliencyOptions& opts = {});

AwiMatrix awi_vg(const victims::DifferentiableClassifier& model,
                 const EmbeddedInput& in, const SaliencyOptions& opts = {});
AwiMatrix awi_gbp(const victims::DifferentiableClassifier& model,
                  const EmbeddedInput& in, const SaliencyOptions& opts = {});
AwiMatrix awi_lrp(const victims::DifferentiableClassifier& model,
                  const EmbeddedInput& in, const SaliencyOptions& opts = {});
AwiMatrix awi_ig(const victims::DifferentiableClassifier& model,
                 const EmbeddedInput& in, const SaliencyOptions& opts = {});

// VG, GBP and LRP share one recorded forward pass.
std::array<AwiMatrix, 4> awi_all(const victims::DifferentiableClassifier& model,
                                 const EmbeddedInput& in,
                                 const SaliencyOptions& opts = {});
std::array<AwiMatrix, 4> awi_all(const victims::DifferentiableClassifier& model,
                                 const text::EncodedExample& ex,
                                 const SaliencyOptions& opts = {});

// Binary record: "AWI1" | u8 method | u32 predicted | u32 rows | u32 cols |
// rows*cols f64, row-major, little-endian.
void append_awi(std::string& out, const AwiMatrix& m);
// Reads one record starting at `pos` and advances it.
AwiMatrix read_awi(std::string_view bytes, std::size_t& pos);

}  // namespace textshield::saliency
