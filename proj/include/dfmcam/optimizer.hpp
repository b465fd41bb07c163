#pragma once

#include "dfmcam/network.hpp"

namespace dfmcam {

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  double learning_rate = 1.0;  // scales the applied step only
};

void validate(const AdadeltaConfig& cfg);

/// One ADADELTA update of every parameter from its current gradient:
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
///   x       <- x + learning_rate * dx
/// Gradients are checked first; a non-finite entry throws NumericError
/// naming the layer and leaves the network untouched.
template <typename Real>
void adadelta_step(Network<Real>& net, const AdadeltaConfig& cfg);

}  // namespace dfmcam
