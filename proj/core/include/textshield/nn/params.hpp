#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "textshield/grad/tape.hpp"

namespace textshield::nn {

struct Parameter {
  std::string name;
  grad::Tensor value;
};

// Ordered, named parameter set. Order is insertion order and defines the
// checkpoint layout.
class ParamStore {
 public:
  std::size_t add(std::string name, grad::Tensor value);

  std::size_t size() const { return params_.size(); }
  grad::Tensor& operator[](std::size_t i) { return params_[i].value; }
  const grad::Tensor& operator[](std::size_t i) const { return params_[i].value; }
  const std::string& name(std::size_t i) const { return params_[i].name; }
  // Throws Error when absent.
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter>& entries() { return params_; }
  const std::vector<Parameter>& entries() const { return params_; }

  bool all_finite() const;
  std::size_t total_size() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<Parameter> params_;
};

// Records every parameter as a tape leaf; ids[i] belongs to params[i].
std::vector<grad::NodeId> bind(const ParamStore& params, grad::Tape& tape,
                               bool requires_grad);

// Per-parameter gradient accumulators with the shapes of a ParamStore.
class Gradients {
 public:
  explicit Gradients(const ParamStore& params);

  void zero();
  // Adds `scale * g` for every bound leaf present in `grads`.
  void accumulate(const grad::GradientMap& grads,
                  const std::vector<grad::NodeId>& ids, double scale = 1.0);
  std::vector<double>& operator[](std::size_t i) { return grads_[i]; }
  const std::vector<double>& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }
  double norm(std::size_t i) const;

 private:
  std::vector<std::vector<double>> grads_;
};

// Adam with bias correction.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg);
  void step(ParamStore& params, const Gradients& grads);
  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
grad::Tensor xavier_uniform(std::size_t out, std::size_t in, std::mt19937_64& rng);

// LSTM cell built from tape primitives. Weight is [4H, in + H] with gate
// blocks ordered input, forget, candidate, output; bias is [4H].
struct LstmState {
  grad::NodeId h;
  grad::NodeId c;
};

LstmState lstm_step(grad::Tape& tape, grad::NodeId x, LstmState prev,
                    grad::NodeId weight, grad::NodeId bias, std::size_t hidden);

// Forget-gate bias starts at 1, everything else Xavier / zero.
void init_lstm(ParamStore& params, const std::string& prefix, std::size_t input,
               std::size_t hidden, std::mt19937_64& rng);

}  // namespace textshield::nn
