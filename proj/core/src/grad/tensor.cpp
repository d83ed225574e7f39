#include "textshield/grad/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "textshield/errors.hpp"

namespace textshield::grad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t matrix_rows(const Shape& shape) {
  return shape.size() >= 2 ? shape[0] : 1;
}

std::size_t matrix_cols(const Shape& shape) {
  if (shape.empty()) return 1;
  return shape.size() >= 2 ? numel(shape) / shape[0] : shape[0];
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(numel(shape_)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != numel(shape_)) {
    throw ShapeError("tensor: " + std::to_string(values_.size()) +
                     " values do not fill shape " + to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.values_.begin(), t.values_.end(), value);
  return t;
}

std::span<double> Tensor::grad() {
  if (!grad_) throw Error("tensor has no gradient buffer");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw Error("tensor has no gradient buffer");
  return *grad_;
}

void Tensor::ensure_grad() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace textshield::grad
