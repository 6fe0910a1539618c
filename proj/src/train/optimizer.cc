#include "train/optimizer.h"

#include <cmath>

namespace rssl {

  void Adam::step(ParameterStore& params, double lr) {
    ++_t;
    const double bc1 = 1.0 - std::pow(_options.beta1, static_cast<double>(_t));
    const double bc2 = 1.0 - std::pow(_options.beta2, static_cast<double>(_t));
    for (const auto& [name, param] : params.items()) {
      if (!param.requires_grad() || param.grad().empty())
        continue;
      Var leaf = param;
      Tensor& w = leaf.mutable_value();
      const Tensor& g = param.grad();
      auto& m = _m[name];
      auto& v = _v[name];
      if (m.empty()) {
        m = Tensor(w.rows(), w.cols());
        v = Tensor(w.rows(), w.cols());
      }
      for (Index i = 0; i < w.size(); ++i) {
        m[i] = _options.beta1 * m[i] + (1.0 - _options.beta1) * g[i];
        v[i] = _options.beta2 * v[i] + (1.0 - _options.beta2) * g[i] * g[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        w[i] -= lr * mh / (std::sqrt(vh) + _options.eps);
      }
    }
  }

  void Adam::prune(const ParameterStore& params) {
    for (auto* moments : {&_m, &_v})
      for (auto it = moments->begin(); it != moments->end();)
        it = params.contains(it->first) ? std::next(it) : moments->erase(it);
  }

  double clip_grad_norm(ParameterStore& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [_, p] : params.items())
      for (double g : p.grad().storage())
        sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      const double factor = max_norm / norm;
      for (const auto& [_, p] : params.items()) {
        if (p.grad().empty())
          continue;
        Tensor& g = p.node()->grad;
        for (Index i = 0; i < g.size(); ++i)
          g[i] *= factor;
      }
    }
    return norm;
  }

  double learning_rate_at(std::int64_t step, double peak_lr, std::int64_t warmup) {
    if (warmup > 0 && step < warmup)
      return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    return peak_lr;
  }

}
