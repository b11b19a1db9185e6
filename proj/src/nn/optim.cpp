#include "scalenet/optim.hpp"

#include <cmath>
#include <string>

namespace scalenet::nn {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive, got " + std::to_string(learning_rate));
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("Adam eps must be positive");
  if (!(decay > 0) || decay_every < 1) throw ConfigError("invalid learning-rate decay schedule");
}

double OptimizerConfig::effective_rate(int epoch) const {
  if (epoch < 0) throw ConfigError("epoch must be non-negative");
  return learning_rate * std::pow(decay, epoch / decay_every);
}

template <typename T>
Adam<T>::Adam(OptimizerConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
void Adam<T>::step(std::span<Parameter<T>* const> params, int epoch) {
  ++steps_;
  const double lr = config_.effective_rate(epoch);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (Parameter<T>* p : params) {
    if (p->m.shape() != p->value.shape()) p->m = Tensor<T>(p->value.shape());
    if (p->v.shape() != p->value.shape()) p->v = Tensor<T>(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double m = b1 * p->m[i] + (1.0 - b1) * g;
      const double v = b2 * p->v[i] + (1.0 - b2) * g * g;
      p->m[i] = static_cast<T>(m);
      p->v[i] = static_cast<T>(v);
      p->value[i] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace scalenet::nn
