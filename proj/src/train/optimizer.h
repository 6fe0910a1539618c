#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "core/tensor.h"
#include "model/model.h"

namespace rssl {

  struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
  };

  // Adam with bias correction. Moments are keyed by parameter name so they
  // survive checkpoints and partial parameter sets.
  class Adam {
  public:
    explicit Adam(AdamOptions options = {})
      : _options(options) {
    }

    // Updates every parameter that received a gradient.
    void step(ParameterStore& params, double lr);

    std::int64_t steps_taken() const { return _t; }
    void set_steps_taken(std::int64_t t) { _t = t; }

    std::map<std::string, Tensor>& first_moments() { return _m; }
    std::map<std::string, Tensor>& second_moments() { return _v; }
    const std::map<std::string, Tensor>& first_moments() const { return _m; }
    const std::map<std::string, Tensor>& second_moments() const { return _v; }

    // Drops moments of parameters that no longer exist.
    void prune(const ParameterStore& params);

  private:
    AdamOptions _options;
    std::int64_t _t = 0;
    std::map<std::string, Tensor> _m;
    std::map<std::string, Tensor> _v;
  };

  // Scales all gradients so their global L2 norm is at most max_norm.
  // Returns the norm before clipping.
  double clip_grad_norm(ParameterStore& params, double max_norm);

  // Linear warmup to peak_lr over warmup steps, then constant.
  double learning_rate_at(std::int64_t step, double peak_lr, std::int64_t warmup);

}
