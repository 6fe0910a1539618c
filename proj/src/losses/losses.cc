#include "losses/losses.h"

#include <algorithm>
#include <cmath>

#include "core/error.h"

namespace rssl {

  namespace {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    double log_add(double a, double b) {
      if (a == kNegInf)
        return b;
      if (b == kNegInf)
        return a;
      const double m = std::max(a, b);
      return m + std::log(std::exp(a - m) + std::exp(b - m));
    }

    double norm_of(const double* x, Index n) {
      double s = 0.0;
      for (Index i = 0; i < n; ++i)
        s += x[i] * x[i];
      return std::sqrt(s);
    }

    double dot(const double* a, const double* b, Index n) {
      double s = 0.0;
      for (Index i = 0; i < n; ++i)
        s += a[i] * b[i];
      return s;
    }

    // One InfoNCE step. Candidates[0] is the positive. Accumulates gradients
    // into gc / gq rows when non-null (scaled by `weight`). Returns the loss
    // and whether the positive scored highest.
    std::pair<double, bool> contrastive_step(const double* c, const std::vector<const double*>& candidates,
                                             Index dim, double tau, double weight,
                                             double* gc, const std::vector<double*>& gq) {
      const double cn = norm_of(c, dim);
      if (!std::isfinite(cn))
        fail(ErrorKind::Numeric, "NonFiniteLoss", "context vector is not finite");
      if (cn == 0.0)
        fail(ErrorKind::Data, "ZeroVector", "context vector has zero norm");
      const std::size_t n = candidates.size();
      std::vector<double> norms(n), cos(n), logits(n);
      double mx = kNegInf;
      for (std::size_t i = 0; i < n; ++i) {
        norms[i] = norm_of(candidates[i], dim);
        if (!std::isfinite(norms[i]))
          fail(ErrorKind::Numeric, "NonFiniteLoss", "quantized vector is not finite");
        if (norms[i] == 0.0)
          fail(ErrorKind::Data, "ZeroVector", "quantized vector has zero norm");
        cos[i] = dot(c, candidates[i], dim) / (cn * norms[i]);
        logits[i] = cos[i] / tau;
        mx = std::max(mx, logits[i]);
      }
      double z = 0.0;
      for (double l : logits)
        z += std::exp(l - mx);
      const double lse = mx + std::log(z);
      const double loss = lse - logits[0];
      bool correct = true;
      for (std::size_t i = 1; i < n; ++i)
        correct = correct && logits[0] >= logits[i];

      if (gc || !gq.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
          const double dlogit = (std::exp(logits[i] - lse) - (i == 0 ? 1.0 : 0.0)) * weight / tau;
          if (dlogit == 0.0)
            continue;
          const double inv = 1.0 / (cn * norms[i]);
          if (gc) {
            const double a = cos[i] / (cn * cn);
            for (Index k = 0; k < dim; ++k)
              gc[k] += dlogit * (candidates[i][k] * inv - a * c[k]);
          }
          if (!gq.empty() && gq[i]) {
            const double b = cos[i] / (norms[i] * norms[i]);
            for (Index k = 0; k < dim; ++k)
              gq[i][k] += dlogit * (c[k] * inv - b * candidates[i][k]);
          }
        }
      }
      return {loss, correct};
    }
  }

  ContrastiveResult contrastive_loss(const Tensor& c_masked, const Tensor& q_true,
                                     const std::vector<Tensor>& negatives, double tau) {
    if (!(tau > 0.0))
      fail(ErrorKind::Usage, "BadArgument", "temperature must be positive");
    if (!c_masked.same_shape(q_true) || static_cast<Index>(negatives.size()) != c_masked.rows())
      fail(ErrorKind::Data, "LengthMismatch", "contrastive inputs disagree in step count or width");
    ContrastiveResult r;
    r.steps = c_masked.rows();
    if (r.steps == 0)
      return r;
    double total = 0.0;
    Index correct = 0;
    for (Index t = 0; t < r.steps; ++t) {
      const Tensor& neg = negatives[static_cast<std::size_t>(t)];
      if (neg.rows() < 1 || neg.cols() != c_masked.cols())
        fail(ErrorKind::Data, "LengthMismatch", "each step needs K >= 1 negatives of the model width");
      std::vector<const double*> cands{q_true.row(t)};
      for (Index k = 0; k < neg.rows(); ++k)
        cands.push_back(neg.row(k));
      auto [loss, ok] = contrastive_step(c_masked.row(t), cands, c_masked.cols(), tau, 1.0, nullptr, {});
      total += loss;
      correct += ok ? 1 : 0;
    }
    r.loss = total / static_cast<double>(r.steps);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.steps);
    return r;
  }

  ContrastiveSum contrastive_loss_sum(const Var& c, const Var& q, const std::vector<Index>& steps,
                                      const std::vector<std::vector<Index>>& negatives, double tau) {
    if (steps.size() != negatives.size())
      fail(ErrorKind::Internal, "BadShape", "one negative set per step required");
    const Tensor& cv = c.value();
    const Tensor& qv = q.value();
    const Index dim = cv.cols();
    double total = 0.0;
    Index correct = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      std::vector<const double*> cands{qv.row(steps[i])};
      for (Index k : negatives[i])
        cands.push_back(qv.row(k));
      auto [loss, ok] = contrastive_step(cv.row(steps[i]), cands, dim, tau, 1.0, nullptr, {});
      total += loss;
      correct += ok ? 1 : 0;
    }
    ContrastiveSum out;
    out.correct = correct;
    out.sum = ag::make_result(Tensor::scalar(total), {c, q},
                              [steps, negatives, tau, dim](const Tensor& g, const std::vector<ag::NodePtr>& in) {
      const Tensor& cv = in[0]->value;
      const Tensor& qv = in[1]->value;
      Tensor* gc = in[0] && in[0]->requires_grad ? &in[0]->grad_buffer() : nullptr;
      Tensor* gq = in[1] && in[1]->requires_grad ? &in[1]->grad_buffer() : nullptr;
      for (std::size_t i = 0; i < steps.size(); ++i) {
        std::vector<const double*> cands{qv.row(steps[i])};
        std::vector<double*> gq_rows;
        if (gq)
          gq_rows.push_back(gq->row(steps[i]));
        for (Index k : negatives[i]) {
          cands.push_back(qv.row(k));
          if (gq)
            gq_rows.push_back(gq->row(k));
        }
        contrastive_step(cv.row(steps[i]), cands, dim, tau, g[0], gc ? gc->row(steps[i]) : nullptr, gq_rows);
      }
    });
    return out;
  }

  double diversity_loss(const Tensor& usage) {
    for (Index g = 0; g < usage.rows(); ++g) {
      double s = 0.0;
      for (Index v = 0; v < usage.cols(); ++v) {
        if (usage(g, v) < 0.0)
          fail(ErrorKind::Data, "NotADistribution", "negative usage probability");
        s += usage(g, v);
      }
      if (std::abs(s - 1.0) > 1e-5)
        fail(ErrorKind::Data, "NotADistribution", "usage row " + std::to_string(g) + " sums to " + std::to_string(s));
    }
    const double gv = static_cast<double>(usage.size());
    double perplexity_sum = 0.0;
    for (double p : codebook_perplexity(usage))
      perplexity_sum += p;
    return (gv - perplexity_sum) / gv;
  }

  std::vector<double> codebook_perplexity(const Tensor& usage) {
    std::vector<double> out;
    for (Index g = 0; g < usage.rows(); ++g) {
      double h = 0.0;
      for (Index v = 0; v < usage.cols(); ++v) {
        const double p = usage(g, v);
        if (p > 0.0)
          h -= p * std::log(p);
      }
      out.push_back(std::exp(h));
    }
    return out;
  }

  Tensor average_usage(const Tensor& frame_probs, Index groups) {
    const Index entries = frame_probs.cols() / groups;
    Tensor usage(groups, entries);
    for (Index t = 0; t < frame_probs.rows(); ++t)
      for (Index i = 0; i < frame_probs.cols(); ++i)
        usage[i] += frame_probs(t, i);
    const double inv = 1.0 / static_cast<double>(std::max<Index>(frame_probs.rows(), 1));
    for (Index i = 0; i < usage.size(); ++i)
      usage[i] *= inv;
    return usage;
  }

  Var diversity_loss_from_probs(const Var& frame_probs, Index groups) {
    Tensor usage = average_usage(frame_probs.value(), groups);
    const double value = diversity_loss(usage);
    auto saved = std::make_shared<Tensor>(std::move(usage));
    return ag::make_result(Tensor::scalar(value), {frame_probs},
                           [saved, groups](const Tensor& g, const std::vector<ag::NodePtr>& in) {
      const Tensor& usage = *saved;
      const Index entries = usage.cols();
      const double gv = static_cast<double>(usage.size());
      const auto perplexity = codebook_perplexity(usage);
      Tensor dusage(groups, entries);
      for (Index gi = 0; gi < groups; ++gi)
        for (Index v = 0; v < entries; ++v) {
          const double p = usage(gi, v);
          if (p > 0.0)
            dusage(gi, v) = perplexity[static_cast<std::size_t>(gi)] * (std::log(p) + 1.0) / gv;
        }
      Tensor& gp = in[0]->grad_buffer();
      const double scale = g[0] / static_cast<double>(gp.rows());
      for (Index t = 0; t < gp.rows(); ++t)
        for (Index i = 0; i < gp.cols(); ++i)
          gp(t, i) += scale * dusage[i];
    });
  }

  double reconstruction_loss(const std::vector<double>& y_hat, const std::vector<double>& y) {
    if (y_hat.size() != y.size() || y.empty())
      fail(ErrorKind::Data, "LengthMismatch", "reconstruction has " + std::to_string(y_hat.size())
           + " samples, target " + std::to_string(y.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
      s += std::abs(y_hat[i] - y[i]);
    return s / static_cast<double>(y.size());
  }

  Var reconstruction_loss(const Var& y_hat, const Tensor& y) {
    const double value = reconstruction_loss(y_hat.value().storage(), y.storage());
    auto target = std::make_shared<Tensor>(y);
    return ag::make_result(Tensor::scalar(value), {y_hat}, [target](const Tensor& g, const std::vector<ag::NodePtr>& in) {
      const Tensor& yh = in[0]->value;
      Tensor& gy = in[0]->grad_buffer();
      const double scale = g[0] / static_cast<double>(yh.size());
      for (Index i = 0; i < yh.size(); ++i) {
        const double diff = yh[i] - (*target)[i];
        gy[i] += scale * static_cast<double>((diff > 0.0) - (diff < 0.0));
      }
    });
  }

  double total_loss(double contrastive, double diversity, double reconstruction, const LossWeights& weights) {
    return contrastive + weights.diversity * diversity + weights.reconstruction * reconstruction;
  }

  Var total_loss(const Var& contrastive, const Var& diversity, const Var& reconstruction, const LossWeights& weights) {
    Var total = contrastive;
    if (diversity.defined())
      total = ag::add(total, ag::scale(diversity, weights.diversity));
    if (reconstruction.defined())
      total = ag::add(total, ag::scale(reconstruction, weights.reconstruction));
    return total;
  }

  Index ctc_min_frames(const std::vector<Index>& labels) {
    Index n = static_cast<Index>(labels.size());
    for (std::size_t i = 1; i < labels.size(); ++i)
      if (labels[i] == labels[i - 1])
        ++n;
    return n;
  }

  double ctc_loss(const Tensor& lp, const std::vector<Index>& labels, Index blank, Tensor* grad) {
    const Index steps = lp.rows();
    const Index vocab = lp.cols();
    for (Index l : labels)
      if (l < 0 || l >= vocab || l == blank)
        fail(ErrorKind::Data, "BadLabel", "label index " + std::to_string(l) + " outside the vocabulary");
    if (grad)
      *grad = Tensor(steps, vocab);
    if (steps < 1 || ctc_min_frames(labels) > steps)
      return std::numeric_limits<double>::infinity();

    const Index s_len = 2 * static_cast<Index>(labels.size()) + 1;
    auto sym = [&](Index s) { return s % 2 == 0 ? blank : labels[static_cast<std::size_t>(s / 2)]; };
    auto skip_allowed = [&](Index s) { return s >= 2 && s % 2 == 1 && sym(s) != sym(s - 2); };

    Tensor alpha(steps, s_len, kNegInf);
    alpha(0, 0) = lp(0, blank);
    if (s_len > 1)
      alpha(0, 1) = lp(0, sym(1));
    for (Index t = 1; t < steps; ++t)
      for (Index s = 0; s < s_len; ++s) {
        double a = alpha(t - 1, s);
        if (s >= 1)
          a = log_add(a, alpha(t - 1, s - 1));
        if (skip_allowed(s))
          a = log_add(a, alpha(t - 1, s - 2));
        alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, sym(s));
      }
    double log_p = alpha(steps - 1, s_len - 1);
    if (s_len > 1)
      log_p = log_add(log_p, alpha(steps - 1, s_len - 2));
    if (log_p == kNegInf)
      return std::numeric_limits<double>::infinity();

    if (grad) {
      Tensor beta(steps, s_len, kNegInf);
      beta(steps - 1, s_len - 1) = lp(steps - 1, sym(s_len - 1));
      if (s_len > 1)
        beta(steps - 1, s_len - 2) = lp(steps - 1, sym(s_len - 2));
      for (Index t = steps - 2; t >= 0; --t)
        for (Index s = 0; s < s_len; ++s) {
          double b = beta(t + 1, s);
          if (s + 1 < s_len)
            b = log_add(b, beta(t + 1, s + 1));
          if (s + 2 < s_len && skip_allowed(s + 2))
            b = log_add(b, beta(t + 1, s + 2));
          beta(t, s) = b == kNegInf ? kNegInf : b + lp(t, sym(s));
        }
      Tensor occupancy(steps, vocab, kNegInf);
      for (Index t = 0; t < steps; ++t)
        for (Index s = 0; s < s_len; ++s) {
          double& o = occupancy(t, sym(s));
          o = log_add(o, alpha(t, s) + beta(t, s) - lp(t, sym(s)));
        }
      for (Index t = 0; t < steps; ++t)
        for (Index k = 0; k < vocab; ++k)
          if (occupancy(t, k) != kNegInf)
            (*grad)(t, k) = -std::exp(occupancy(t, k) - log_p);
    }
    return -log_p;
  }

  Var ctc_loss(const Var& log_probs, const std::vector<Index>& labels, Index blank) {
    auto grad = std::make_shared<Tensor>();
    const double value = ctc_loss(log_probs.value(), labels, blank, grad.get());
    if (!std::isfinite(value))
      return Var(Tensor::scalar(value));
    return ag::make_result(Tensor::scalar(value), {log_probs}, [grad](const Tensor& g, const std::vector<ag::NodePtr>& in) {
      Tensor& gl = in[0]->grad_buffer();
      for (Index i = 0; i < gl.size(); ++i)
        gl[i] += g[0] * (*grad)[i];
    });
  }

}
