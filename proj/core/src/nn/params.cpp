#include "textshield/nn/params.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "textshield/errors.hpp"

namespace textshield::nn {

std::size_t ParamStore::add(std::string name, grad::Tensor value) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t ParamStore::index(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw Error("no parameter named '" + std::string(name) + "'");
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

bool ParamStore::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Parameter& p) { return p.value.all_finite(); });
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.name(i) != b.name(i) || !(a[i] == b[i])) return false;
  }
  return true;
}

std::vector<grad::NodeId> bind(const ParamStore& params, grad::Tape& tape,
                               bool requires_grad) {
  std::vector<grad::NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params.entries()) ids.push_back(tape.leaf(p.value, requires_grad));
  return ids;
}

Gradients::Gradients(const ParamStore& params) {
  grads_.reserve(params.size());
  for (const auto& p : params.entries()) grads_.emplace_back(p.value.size(), 0.0);
}

void Gradients::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void Gradients::accumulate(const grad::GradientMap& grads,
                           const std::vector<grad::NodeId>& ids, double scale) {
  for (std::size_t i = 0; i < ids.size() && i < grads_.size(); ++i) {
    auto it = grads.find(ids[i]);
    if (it == grads.end()) continue;
    const auto& src = it->second.data();
    auto& dst = grads_[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

double Gradients::norm(std::size_t i) const {
  double s = 0.0;
  for (double g : grads_[i]) s += g * g;
  return std::sqrt(s);
}

Adam::Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  for (const auto& p : params.entries()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(ParamStore& params, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].data();
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      w[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

grad::Tensor xavier_uniform(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  grad::Tensor t({out, in});
  for (double& x : t.data()) x = dist(rng);
  return t;
}

LstmState lstm_step(grad::Tape& tape, grad::NodeId x, LstmState prev,
                    grad::NodeId weight, grad::NodeId bias, std::size_t hidden) {
  const std::array<grad::NodeId, 2> xh{x, prev.h};
  const auto gates = tape.affine(tape.concat(xh), weight, bias);
  const std::size_t H = hidden;
  const auto i = tape.sigmoid(tape.slice(gates, 1, 0, H));
  const auto f = tape.sigmoid(tape.slice(gates, 1, H, 2 * H));
  const auto g = tape.tanh(tape.slice(gates, 1, 2 * H, 3 * H));
  const auto o = tape.sigmoid(tape.slice(gates, 1, 3 * H, 4 * H));
  // Relevance follows the cell content, never the gates.
  const auto c = tape.add(tape.mul(f, prev.c, 1), tape.mul(i, g, 1));
  const auto h = tape.mul(o, tape.tanh(c), 1);
  return {h, c};
}

void init_lstm(ParamStore& params, const std::string& prefix, std::size_t input,
               std::size_t hidden, std::mt19937_64& rng) {
  params.add(prefix + ".weight", xavier_uniform(4 * hidden, input + hidden, rng));
  grad::Tensor bias({4 * hidden});
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  params.add(prefix + ".bias", std::move(bias));
}

}  // namespace textshield::nn
