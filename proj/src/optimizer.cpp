#include "dfmcam/optimizer.hpp"

#include <cmath>

#include "dfmcam/error.hpp"

namespace dfmcam {

void validate(const AdadeltaConfig& cfg) {
  if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw ValidationError("adadelta: rho must lie in [0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("adadelta: epsilon must be positive");
  if (!(cfg.learning_rate > 0.0 && std::isfinite(cfg.learning_rate)))
    throw ValidationError("adadelta: learning rate must be positive");
}

template <typename Real>
void adadelta_step(Network<Real>& net, const AdadeltaConfig& cfg) {
  validate(cfg);
  auto params = net.parameters();
  for (const auto& ref : params) {
    const Parameter<Real>& p = *ref.param;
    if (p.grad.size() != p.value.size() || p.acc_grad_sq.size() != p.value.size() ||
        p.acc_delta_sq.size() != p.value.size())
      throw ShapeError("adadelta: accumulator size mismatch in layer " + std::to_string(ref.layer));
    for (Real g : p.grad)
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in layer " + std::to_string(ref.layer) + " (" +
                           std::string(to_string(net.spec().layers[ref.layer].kind)) + ") parameter " + p.name);
  }
  const double rho = cfg.rho, eps = cfg.epsilon, lr = cfg.learning_rate;
  for (const auto& ref : params) {
    Parameter<Real>& p = *ref.param;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      const double eg = rho * p.acc_grad_sq[i] + (1.0 - rho) * g * g;
      const double dx = -std::sqrt(p.acc_delta_sq[i] + eps) / std::sqrt(eg + eps) * g;
      p.acc_grad_sq[i] = static_cast<Real>(eg);
      p.acc_delta_sq[i] = static_cast<Real>(rho * p.acc_delta_sq[i] + (1.0 - rho) * dx * dx);
      p.value[i] = static_cast<Real>(p.value[i] + lr * dx);
    }
  }
}

template void adadelta_step<float>(Network<float>&, const AdadeltaConfig&);
template void adadelta_step<double>(Network<double>&, const AdadeltaConfig&);

}  // namespace dfmcam
