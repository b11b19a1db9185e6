#pragma once

#include <span>

#include "scalenet/autograd.hpp"

namespace scalenet::nn {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.1;    // multiplied into the rate ...
  int decay_every = 10;  // ... once per this many epochs

  void validate() const;  // ConfigError
  // base * decay^floor(epoch / decay_every)
  double effective_rate(int epoch) const;
};

// Bias-corrected Adam. Moments live in each Parameter; the step counter here.
template <typename T>
class Adam {
 public:
  explicit Adam(OptimizerConfig config = {});

  void step(std::span<Parameter<T>* const> params, int epoch);
  long steps() const noexcept { return steps_; }
  void set_steps(long n) noexcept { steps_ = n; }
  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  long steps_ = 0;
};

}  // namespace scalenet::nn
