#include "textshield/grad/finite_difference.hpp"

#include <cmath>

#include "textshield/errors.hpp"

namespace textshield::grad {

Tensor finite_difference(const ScalarFunction& f, const Tensor& point,
                         double h) {
  if (!(h > 0.0)) throw Error("finite_difference: h must be > 0");
  Tensor probe = point;
  probe.clear_grad();
  Tensor out(point.shape());
  auto eval = [&]() {
    const double v = f(probe);
    if (!std::isfinite(v)) {
      throw NumericError("finite_difference: function returned a non-finite value");
    }
    return v;
  };
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x = point[i];
    probe[i] = x + h;
    const double up = eval();
    probe[i] = x - h;
    const double down = eval();
    probe[i] = x;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

}  // namespace textshield::grad
