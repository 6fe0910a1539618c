#include "core/autograd.h"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "core/error.h"

namespace rssl::ag {

  namespace {
    thread_local bool g_grad_enabled = true;

    void check(bool ok, const std::string& what) {
      if (!ok)
        fail(ErrorKind::Internal, "BadShape", what);
    }

    bool wants(const NodePtr& n) {
      return n && n->requires_grad;
    }

    Tensor copy_cols(const Tensor& src, Index c0, Index n) {
      Tensor out(src.rows(), n);
      for (Index r = 0; r < src.rows(); ++r)
        std::copy_n(src.row(r) + c0, n, out.row(r));
      return out;
    }

    void add_cols(Tensor& dst, Index c0, const Tensor& src) {
      for (Index r = 0; r < src.rows(); ++r) {
        double* d = dst.row(r) + c0;
        const double* s = src.row(r);
        for (Index c = 0; c < src.cols(); ++c)
          d[c] += s[c];
      }
    }

    void add_bias_rows(Tensor& out, const Tensor& bias) {
      for (Index r = 0; r < out.rows(); ++r) {
        double* o = out.row(r);
        for (Index c = 0; c < out.cols(); ++c)
          o[c] += bias[c];
      }
    }

    void accumulate_col_sums(Tensor& dst, const Tensor& g) {
      for (Index r = 0; r < g.rows(); ++r) {
        const double* s = g.row(r);
        for (Index c = 0; c < g.cols(); ++c)
          dst[c] += s[c];
      }
    }

    double sigmoid(double x) {
      return 1.0 / (1.0 + std::exp(-x));
    }
  }

  Tensor& Node::grad_buffer() {
    if (grad.empty())
      grad = Tensor(value.rows(), value.cols());
    return grad;
  }

  Var::Var(Tensor value, bool requires_grad)
    : _node(std::make_shared<Node>()) {
    _node->value = std::move(value);
    _node->requires_grad = requires_grad;
  }

  bool grad_enabled() {
    return g_grad_enabled;
  }

  NoGradGuard::NoGradGuard()
    : _previous(g_grad_enabled) {
    g_grad_enabled = false;
  }

  NoGradGuard::~NoGradGuard() {
    g_grad_enabled = _previous;
  }

  Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (!g_grad_enabled)
      return Var(node);
    bool any = false;
    for (const auto& in : inputs)
      any = any || (in.defined() && in.requires_grad());
    if (!any)
      return Var(node);
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs)
      node->inputs.push_back(in.defined() ? in.node() : nullptr);
    node->backward = std::move(fn);
    return Var(node);
  }

  void backward(const Var& root) {
    check(root.value().size() == 1, "backward() requires a scalar root");
    if (!root.requires_grad())
      return;

    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].get();
        if (child && child->requires_grad && child->backward && visited.insert(child).second)
          stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->has_grad() && node->backward)
        node->backward(node->grad, node->inputs);
    }
  }

  Var add(const Var& a, const Var& b) {
    check(a.value().same_shape(b.value()), "add " + a.value().shape_string() + " + " + b.value().shape_string());
    Tensor out = a.value();
    out += b.value();
    return make_result(std::move(out), {a, b}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      if (wants(in[0]))
        in[0]->grad_buffer() += g;
      if (wants(in[1]))
        in[1]->grad_buffer() += g;
    });
  }

  Var sub(const Var& a, const Var& b) {
    check(a.value().same_shape(b.value()), "sub shape mismatch");
    Tensor out = a.value();
    for (Index i = 0; i < out.size(); ++i)
      out[i] -= b.value()[i];
    return make_result(std::move(out), {a, b}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      if (wants(in[0]))
        in[0]->grad_buffer() += g;
      if (wants(in[1])) {
        Tensor& gb = in[1]->grad_buffer();
        for (Index i = 0; i < g.size(); ++i)
          gb[i] -= g[i];
      }
    });
  }

  Var scale(const Var& a, double factor) {
    Tensor out = a.value();
    for (Index i = 0; i < out.size(); ++i)
      out[i] *= factor;
    return make_result(std::move(out), {a}, [factor](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor& ga = in[0]->grad_buffer();
      for (Index i = 0; i < g.size(); ++i)
        ga[i] += factor * g[i];
    });
  }

  Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().storage())
      s += v;
    return make_result(Tensor::scalar(s), {a}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor& ga = in[0]->grad_buffer();
      const double d = g[0];
      for (Index i = 0; i < ga.size(); ++i)
        ga[i] += d;
    });
  }

  Var gelu(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    for (Index i = 0; i < xv.size(); ++i)
      out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    return make_result(std::move(out), {x}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      const Tensor& xv = in[0]->value;
      Tensor& gx = in[0]->grad_buffer();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (Index i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }

  Var linear(const Var& x, const Var& weight, const Var& bias) {
    check(x.cols() == weight.cols(), "linear: input " + x.value().shape_string()
          + " vs weight " + weight.value().shape_string());
    Tensor out = matmul(x.value(), false, weight.value(), true);
    if (bias.defined()) {
      check(bias.value().size() == weight.rows(), "linear: bias size");
      add_bias_rows(out, bias.value());
    }
    return make_result(std::move(out), {x, weight, bias}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      if (wants(in[0]))
        gemm(g, false, in[1]->value, false, in[0]->grad_buffer(), 1.0, 1.0);
      if (wants(in[1]))
        gemm(g, true, in[0]->value, false, in[1]->grad_buffer(), 1.0, 1.0);
      if (wants(in[2]))
        accumulate_col_sums(in[2]->grad_buffer(), g);
    });
  }

  Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    const Index n = xv.cols();
    check(gamma.value().size() == n && beta.value().size() == n, "layer_norm: affine size");
    Tensor out(xv.rows(), n);
    auto normed = std::make_shared<Tensor>(xv.rows(), n);
    auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xv.rows()));
    for (Index r = 0; r < xv.rows(); ++r) {
      const double* xr = xv.row(r);
      double mean = 0.0;
      for (Index c = 0; c < n; ++c)
        mean += xr[c];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (Index c = 0; c < n; ++c)
        var += (xr[c] - mean) * (xr[c] - mean);
      var /= static_cast<double>(n);
      const double rs = 1.0 / std::sqrt(var + eps);
      (*rstd)[static_cast<std::size_t>(r)] = rs;
      for (Index c = 0; c < n; ++c) {
        const double h = (xr[c] - mean) * rs;
        (*normed)(r, c) = h;
        out(r, c) = gamma.value()[c] * h + beta.value()[c];
      }
    }
    return make_result(std::move(out), {x, gamma, beta},
                       [normed, rstd](const Tensor& g, const std::vector<NodePtr>& in) {
      const Index n = g.cols();
      const Tensor& gam = in[1]->value;
      if (wants(in[1])) {
        Tensor& gg = in[1]->grad_buffer();
        for (Index r = 0; r < g.rows(); ++r)
          for (Index c = 0; c < n; ++c)
            gg[c] += g(r, c) * (*normed)(r, c);
      }
      if (wants(in[2]))
        accumulate_col_sums(in[2]->grad_buffer(), g);
      if (wants(in[0])) {
        Tensor& gx = in[0]->grad_buffer();
        std::vector<double> dh(static_cast<std::size_t>(n));
        for (Index r = 0; r < g.rows(); ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (Index c = 0; c < n; ++c) {
            dh[static_cast<std::size_t>(c)] = g(r, c) * gam[c];
            s1 += dh[static_cast<std::size_t>(c)];
            s2 += dh[static_cast<std::size_t>(c)] * (*normed)(r, c);
          }
          const double rs = (*rstd)[static_cast<std::size_t>(r)];
          const double inv_n = 1.0 / static_cast<double>(n);
          for (Index c = 0; c < n; ++c)
            gx(r, c) += rs * (dh[static_cast<std::size_t>(c)] - inv_n * s1 - (*normed)(r, c) * inv_n * s2);
        }
      }
    });
  }

  Var time_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    const Index rows = xv.rows();
    const Index n = xv.cols();
    check(gamma.value().size() == n && beta.value().size() == n, "time_norm: affine size");
    check(rows > 0, "time_norm: empty input");
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    std::vector<double> var(static_cast<std::size_t>(n), 0.0);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < n; ++c)
        mean[static_cast<std::size_t>(c)] += xv(r, c);
    for (auto& m : mean)
      m /= static_cast<double>(rows);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < n; ++c) {
        const double d = xv(r, c) - mean[static_cast<std::size_t>(c)];
        var[static_cast<std::size_t>(c)] += d * d;
      }
    auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    for (Index c = 0; c < n; ++c)
      (*rstd)[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] / static_cast<double>(rows) + eps);
    auto normed = std::make_shared<Tensor>(rows, n);
    Tensor out(rows, n);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < n; ++c) {
        const double h = (xv(r, c) - mean[static_cast<std::size_t>(c)]) * (*rstd)[static_cast<std::size_t>(c)];
        (*normed)(r, c) = h;
        out(r, c) = gamma.value()[c] * h + beta.value()[c];
      }
    return make_result(std::move(out), {x, gamma, beta},
                       [normed, rstd](const Tensor& g, const std::vector<NodePtr>& in) {
      const Index rows = g.rows();
      const Index n = g.cols();
      const Tensor& gam = in[1]->value;
      if (wants(in[1])) {
        Tensor& gg = in[1]->grad_buffer();
        for (Index r = 0; r < rows; ++r)
          for (Index c = 0; c < n; ++c)
            gg[c] += g(r, c) * (*normed)(r, c);
      }
      if (wants(in[2]))
        accumulate_col_sums(in[2]->grad_buffer(), g);
      if (wants(in[0])) {
        Tensor& gx = in[0]->grad_buffer();
        std::vector<double> s1(static_cast<std::size_t>(n), 0.0), s2(static_cast<std::size_t>(n), 0.0);
        for (Index r = 0; r < rows; ++r)
          for (Index c = 0; c < n; ++c) {
            const double dh = g(r, c) * gam[c];
            s1[static_cast<std::size_t>(c)] += dh;
            s2[static_cast<std::size_t>(c)] += dh * (*normed)(r, c);
          }
        const double inv = 1.0 / static_cast<double>(rows);
        for (Index r = 0; r < rows; ++r)
          for (Index c = 0; c < n; ++c) {
            const auto ci = static_cast<std::size_t>(c);
            const double dh = g(r, c) * gam[c];
            gx(r, c) += (*rstd)[ci] * (dh - inv * s1[ci] - (*normed)(r, c) * inv * s2[ci]);
          }
      }
    });
  }

  Var softmax_groups(const Var& x, Index groups) {
    const Tensor& xv = x.value();
    check(groups > 0 && xv.cols() % groups == 0, "softmax_groups: width not divisible");
    const Index width = xv.cols() / groups;
    Tensor out(xv.rows(), xv.cols());
    for (Index r = 0; r < xv.rows(); ++r)
      for (Index gi = 0; gi < groups; ++gi) {
        const double* xr = xv.row(r) + gi * width;
        double* o = out.row(r) + gi * width;
        double mx = xr[0];
        for (Index c = 1; c < width; ++c)
          mx = std::max(mx, xr[c]);
        double z = 0.0;
        for (Index c = 0; c < width; ++c) {
          o[c] = std::exp(xr[c] - mx);
          z += o[c];
        }
        for (Index c = 0; c < width; ++c)
          o[c] /= z;
      }
    auto saved = std::make_shared<Tensor>(out);
    return make_result(std::move(out), {x}, [saved, groups, width](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor& gx = in[0]->grad_buffer();
      for (Index r = 0; r < g.rows(); ++r)
        for (Index gi = 0; gi < groups; ++gi) {
          const double* y = saved->row(r) + gi * width;
          const double* dy = g.row(r) + gi * width;
          double dot = 0.0;
          for (Index c = 0; c < width; ++c)
            dot += y[c] * dy[c];
          double* d = gx.row(r) + gi * width;
          for (Index c = 0; c < width; ++c)
            d[c] += y[c] * (dy[c] - dot);
        }
    });
  }

  Var log_softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    for (Index r = 0; r < xv.rows(); ++r) {
      const double* xr = xv.row(r);
      double mx = xr[0];
      for (Index c = 1; c < xv.cols(); ++c)
        mx = std::max(mx, xr[c]);
      double z = 0.0;
      for (Index c = 0; c < xv.cols(); ++c)
        z += std::exp(xr[c] - mx);
      const double lse = mx + std::log(z);
      for (Index c = 0; c < xv.cols(); ++c)
        out(r, c) = xr[c] - lse;
    }
    auto saved = std::make_shared<Tensor>(out);
    return make_result(std::move(out), {x}, [saved](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor& gx = in[0]->grad_buffer();
      for (Index r = 0; r < g.rows(); ++r) {
        double total = 0.0;
        for (Index c = 0; c < g.cols(); ++c)
          total += g(r, c);
        for (Index c = 0; c < g.cols(); ++c)
          gx(r, c) += g(r, c) - std::exp((*saved)(r, c)) * total;
      }
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols: no parts");
    const Index rows = parts.front().rows();
    Index cols = 0;
    for (const auto& p : parts) {
      check(p.rows() == rows, "concat_cols: row mismatch");
      cols += p.cols();
    }
    Tensor out(rows, cols);
    std::vector<Index> offsets;
    Index off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      add_cols(out, off, p.value());
      off += p.cols();
    }
    return make_result(std::move(out), parts, [offsets](const Tensor& g, const std::vector<NodePtr>& in) {
      for (std::size_t i = 0; i < in.size(); ++i)
        if (wants(in[i]))
          in[i]->grad_buffer() += copy_cols(g, offsets[i], in[i]->value.cols());
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows: no parts");
    const Index cols = parts.front().cols();
    Index rows = 0;
    for (const auto& p : parts) {
      check(p.cols() == cols, "concat_rows: column mismatch");
      rows += p.rows();
    }
    Tensor out(rows, cols);
    std::vector<Index> offsets;
    Index off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      std::copy_n(p.value().data(), p.value().size(), out.row(off));
      off += p.rows();
    }
    return make_result(std::move(out), parts, [offsets](const Tensor& g, const std::vector<NodePtr>& in) {
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (!wants(in[i]))
          continue;
        Tensor& gi = in[i]->grad_buffer();
        const double* src = g.row(offsets[i]);
        for (Index k = 0; k < gi.size(); ++k)
          gi[k] += src[k];
      }
    });
  }

  Var conv1d(const Var& x, const Var& weight, const Var& bias, Index kernel, Index stride) {
    const Tensor& xv = x.value();
    const Index cin = xv.cols();
    check(weight.cols() == kernel * cin, "conv1d: weight " + weight.value().shape_string()
          + " vs kernel " + std::to_string(kernel) + " x C_in " + std::to_string(cin));
    check(xv.rows() >= kernel, "conv1d: input shorter than kernel");
    const Index t_out = (xv.rows() - kernel) / stride + 1;
    const Index span = kernel * cin;
    // Time-major layout: each receptive field is one contiguous block.
    auto cols = std::make_shared<Tensor>(t_out, span);
    for (Index t = 0; t < t_out; ++t)
      std::copy_n(xv.row(t * stride), span, cols->row(t));
    Tensor out = matmul(*cols, false, weight.value(), true);
    if (bias.defined())
      add_bias_rows(out, bias.value());
    return make_result(std::move(out), {x, weight, bias},
                       [cols, kernel, stride, span](const Tensor& g, const std::vector<NodePtr>& in) {
      if (wants(in[1]))
        gemm(g, true, *cols, false, in[1]->grad_buffer(), 1.0, 1.0);
      if (wants(in[2]))
        accumulate_col_sums(in[2]->grad_buffer(), g);
      if (wants(in[0])) {
        Tensor dcols = matmul(g, false, in[1]->value, false);
        Tensor& gx = in[0]->grad_buffer();
        for (Index t = 0; t < dcols.rows(); ++t) {
          double* dst = gx.row(t * stride);
          const double* src = dcols.row(t);
          for (Index i = 0; i < span; ++i)
            dst[i] += src[i];
        }
      }
      (void)kernel;
    });
  }

  Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, Index kernel, Index stride) {
    const Tensor& xv = x.value();
    check(weight.rows() == xv.cols() && weight.cols() % kernel == 0,
          "conv_transpose1d: weight " + weight.value().shape_string() + " vs input " + xv.shape_string());
    const Index cout = weight.cols() / kernel;
    const Index t_out = (xv.rows() - 1) * stride + kernel;
    const Index span = kernel * cout;
    Tensor cols = matmul(xv, false, weight.value(), false);
    Tensor out(t_out, cout);
    for (Index t = 0; t < xv.rows(); ++t) {
      double* dst = out.row(t * stride);
      const double* src = cols.row(t);
      for (Index i = 0; i < span; ++i)
        dst[i] += src[i];
    }
    if (bias.defined())
      add_bias_rows(out, bias.value());
    const Index t_in = xv.rows();
    return make_result(std::move(out), {x, weight, bias},
                       [t_in, stride, span](const Tensor& g, const std::vector<NodePtr>& in) {
      if (wants(in[2]))
        accumulate_col_sums(in[2]->grad_buffer(), g);
      if (!wants(in[0]) && !wants(in[1]))
        return;
      Tensor dcols(t_in, span);
      for (Index t = 0; t < t_in; ++t)
        std::copy_n(g.row(t * stride), span, dcols.row(t));
      if (wants(in[0]))
        gemm(dcols, false, in[1]->value, true, in[0]->grad_buffer(), 1.0, 1.0);
      if (wants(in[1]))
        gemm(in[0]->value, true, dcols, false, in[1]->grad_buffer(), 1.0, 1.0);
    });
  }

  Var depthwise_conv_same(const Var& x, const Var& weight, const Var& bias) {
    const Tensor& xv = x.value();
    const Tensor& w = weight.value();
    const Index ch = xv.cols();
    const Index kernel = w.rows();
    check(w.cols() == ch && kernel % 2 == 1, "depthwise_conv_same: weight must be (odd K x C)");
    const Index half = kernel / 2;
    const Index steps = xv.rows();
    Tensor out(steps, ch);
    for (Index t = 0; t < steps; ++t) {
      double* o = out.row(t);
      if (bias.defined())
        for (Index c = 0; c < ch; ++c)
          o[c] = bias.value()[c];
      for (Index k = 0; k < kernel; ++k) {
        const Index src = t + k - half;
        if (src < 0 || src >= steps)
          continue;
        const double* xr = xv.row(src);
        const double* wr = w.row(k);
        for (Index c = 0; c < ch; ++c)
          o[c] += wr[c] * xr[c];
      }
    }
    return make_result(std::move(out), {x, weight, bias}, [half, kernel](const Tensor& g, const std::vector<NodePtr>& in) {
      const Tensor& xv = in[0]->value;
      const Tensor& w = in[1]->value;
      const Index steps = g.rows();
      const Index ch = g.cols();
      if (wants(in[2]))
        accumulate_col_sums(in[2]->grad_buffer(), g);
      Tensor* gx = wants(in[0]) ? &in[0]->grad_buffer() : nullptr;
      Tensor* gw = wants(in[1]) ? &in[1]->grad_buffer() : nullptr;
      for (Index t = 0; t < steps; ++t) {
        const double* gr = g.row(t);
        for (Index k = 0; k < kernel; ++k) {
          const Index src = t + k - half;
          if (src < 0 || src >= steps)
            continue;
          if (gx) {
            double* d = gx->row(src);
            const double* wr = w.row(k);
            for (Index c = 0; c < ch; ++c)
              d[c] += gr[c] * wr[c];
          }
          if (gw) {
            double* d = gw->row(k);
            const double* xr = xv.row(src);
            for (Index c = 0; c < ch; ++c)
              d[c] += gr[c] * xr[c];
          }
        }
      }
    });
  }

  Var reshape(const Var& x, Index rows, Index cols) {
    check(rows * cols == x.value().size(), "reshape: element count");
    Tensor out(rows, cols, x.value().storage());
    return make_result(std::move(out), {x}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor& gx = in[0]->grad_buffer();
      for (Index i = 0; i < g.size(); ++i)
        gx[i] += g[i];
    });
  }

  Var fit_rows(const Var& x, Index target_rows) {
    const Tensor& xv = x.value();
    const Index offset = xv.rows() > target_rows ? (xv.rows() - target_rows) / 2 : 0;
    const Index copy = std::min(xv.rows(), target_rows);
    Tensor out(target_rows, xv.cols());
    std::copy_n(xv.row(offset), copy * xv.cols(), out.data());
    return make_result(std::move(out), {x}, [offset, copy](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor& gx = in[0]->grad_buffer();
      double* dst = gx.row(offset);
      for (Index i = 0; i < copy * g.cols(); ++i)
        dst[i] += g[i];
    });
  }

  Var mask_rows(const Var& x, const std::vector<bool>& mask, const Var& embedding) {
    const Tensor& xv = x.value();
    check(static_cast<Index>(mask.size()) == xv.rows(), "mask_rows: mask length");
    check(embedding.value().size() == xv.cols(), "mask_rows: embedding width");
    Tensor out = xv;
    for (Index t = 0; t < xv.rows(); ++t)
      if (mask[static_cast<std::size_t>(t)])
        std::copy_n(embedding.value().data(), xv.cols(), out.row(t));
    return make_result(std::move(out), {x, embedding}, [mask](const Tensor& g, const std::vector<NodePtr>& in) {
      Tensor* gx = wants(in[0]) ? &in[0]->grad_buffer() : nullptr;
      Tensor* ge = wants(in[1]) ? &in[1]->grad_buffer() : nullptr;
      for (Index t = 0; t < g.rows(); ++t) {
        const double* gr = g.row(t);
        double* d = mask[static_cast<std::size_t>(t)] ? (ge ? ge->data() : nullptr) : (gx ? gx->row(t) : nullptr);
        if (!d)
          continue;
        for (Index c = 0; c < g.cols(); ++c)
          d[c] += gr[c];
      }
    });
  }

  Var attention(const Var& q, const Var& k, const Var& v, Index heads) {
    const Index steps = q.rows();
    const Index dim = q.cols();
    check(k.value().same_shape(q.value()) && v.value().same_shape(q.value()), "attention: q/k/v shapes");
    check(heads > 0 && dim % heads == 0, "attention: dim not divisible by heads");
    const Index dh = dim / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
    auto probs = std::make_shared<std::vector<Tensor>>();
    probs->reserve(static_cast<std::size_t>(heads));
    Tensor out(steps, dim);
    for (Index h = 0; h < heads; ++h) {
      Tensor qh = copy_cols(q.value(), h * dh, dh);
      Tensor kh = copy_cols(k.value(), h * dh, dh);
      Tensor vh = copy_cols(v.value(), h * dh, dh);
      Tensor s = matmul(qh, false, kh, true);
      for (Index r = 0; r < steps; ++r) {
        double* sr = s.row(r);
        double mx = -INFINITY;
        for (Index c = 0; c < steps; ++c) {
          sr[c] *= scale_factor;
          mx = std::max(mx, sr[c]);
        }
        double z = 0.0;
        for (Index c = 0; c < steps; ++c) {
          sr[c] = std::exp(sr[c] - mx);
          z += sr[c];
        }
        for (Index c = 0; c < steps; ++c)
          sr[c] /= z;
      }
      add_cols(out, h * dh, matmul(s, false, vh, false));
      probs->push_back(std::move(s));
    }
    return make_result(std::move(out), {q, k, v},
                       [probs, heads, dh, scale_factor](const Tensor& g, const std::vector<NodePtr>& in) {
      const Index steps = g.rows();
      for (Index h = 0; h < heads; ++h) {
        const Tensor& p = (*probs)[static_cast<std::size_t>(h)];
        Tensor go = copy_cols(g, h * dh, dh);
        Tensor qh = copy_cols(in[0]->value, h * dh, dh);
        Tensor kh = copy_cols(in[1]->value, h * dh, dh);
        Tensor vh = copy_cols(in[2]->value, h * dh, dh);
        if (wants(in[2]))
          add_cols(in[2]->grad_buffer(), h * dh, matmul(p, true, go, false));
        if (!wants(in[0]) && !wants(in[1]))
          continue;
        Tensor dp = matmul(go, false, vh, true);
        for (Index r = 0; r < steps; ++r) {
          const double* pr = p.row(r);
          double* dr = dp.row(r);
          double dot = 0.0;
          for (Index c = 0; c < steps; ++c)
            dot += pr[c] * dr[c];
          for (Index c = 0; c < steps; ++c)
            dr[c] = pr[c] * (dr[c] - dot) * scale_factor;
        }
        if (wants(in[0]))
          add_cols(in[0]->grad_buffer(), h * dh, matmul(dp, false, kh, false));
        if (wants(in[1]))
          add_cols(in[1]->grad_buffer(), h * dh, matmul(dp, true, qh, false));
      }
    });
  }

  Var lstm(const Var& input_gates, const Var& recurrent_weight, bool reverse) {
    const Tensor& gx = input_gates.value();
    const Tensor& whh = recurrent_weight.value();
    const Index hidden = whh.cols();
    check(whh.rows() == 4 * hidden && gx.cols() == 4 * hidden, "lstm: gate widths");
    const Index steps = gx.rows();

    // acts holds post-activation gates (i, f, g, o); cells holds c_t.
    auto acts = std::make_shared<Tensor>(steps, 4 * hidden);
    auto cells = std::make_shared<Tensor>(steps, hidden);
    Tensor out(steps, hidden);
    std::vector<double> h_prev(static_cast<std::size_t>(hidden), 0.0);
    std::vector<double> c_prev(static_cast<std::size_t>(hidden), 0.0);
    for (Index s = 0; s < steps; ++s) {
      const Index t = reverse ? steps - 1 - s : s;
      double* a = acts->row(t);
      std::copy_n(gx.row(t), 4 * hidden, a);
      for (Index r = 0; r < 4 * hidden; ++r) {
        const double* wr = whh.row(r);
        double acc = 0.0;
        for (Index c = 0; c < hidden; ++c)
          acc += wr[c] * h_prev[static_cast<std::size_t>(c)];
        a[r] += acc;
      }
      for (Index j = 0; j < hidden; ++j) {
        const double ig = sigmoid(a[j]);
        const double fg = sigmoid(a[hidden + j]);
        const double gg = std::tanh(a[2 * hidden + j]);
        const double og = sigmoid(a[3 * hidden + j]);
        a[j] = ig;
        a[hidden + j] = fg;
        a[2 * hidden + j] = gg;
        a[3 * hidden + j] = og;
        const double c = fg * c_prev[static_cast<std::size_t>(j)] + ig * gg;
        (*cells)(t, j) = c;
        out(t, j) = og * std::tanh(c);
      }
      std::copy_n(cells->row(t), hidden, c_prev.data());
      std::copy_n(out.row(t), hidden, h_prev.data());
    }
    auto outputs = std::make_shared<Tensor>(out);
    return make_result(std::move(out), {input_gates, recurrent_weight},
                       [acts, cells, outputs, reverse, hidden](const Tensor& g, const std::vector<NodePtr>& in) {
      const Index steps = g.rows();
      const Tensor& whh = in[1]->value;
      Tensor dgates(steps, 4 * hidden);
      std::vector<double> dh_next(static_cast<std::size_t>(hidden), 0.0);
      std::vector<double> dc_next(static_cast<std::size_t>(hidden), 0.0);
      for (Index s = steps - 1; s >= 0; --s) {
        const Index t = reverse ? steps - 1 - s : s;
        const Index t_prev = reverse ? t + 1 : t - 1;
        const bool has_prev = s > 0;
        const double* a = acts->row(t);
        double* dg = dgates.row(t);
        for (Index j = 0; j < hidden; ++j) {
          const auto ju = static_cast<std::size_t>(j);
          const double ig = a[j], fg = a[hidden + j], gg = a[2 * hidden + j], og = a[3 * hidden + j];
          const double c = (*cells)(t, j);
          const double tc = std::tanh(c);
          const double dh = g(t, j) + dh_next[ju];
          const double dc = dh * og * (1.0 - tc * tc) + dc_next[ju];
          const double cp = has_prev ? (*cells)(t_prev, j) : 0.0;
          dg[j] = dc * gg * ig * (1.0 - ig);
          dg[hidden + j] = dc * cp * fg * (1.0 - fg);
          dg[2 * hidden + j] = dc * ig * (1.0 - gg * gg);
          dg[3 * hidden + j] = dh * tc * og * (1.0 - og);
          dc_next[ju] = dc * fg;
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (Index r = 0; r < 4 * hidden; ++r) {
          const double d = dg[r];
          const double* wr = whh.row(r);
          for (Index c = 0; c < hidden; ++c)
            dh_next[static_cast<std::size_t>(c)] += d * wr[c];
        }
      }
      if (wants(in[0]))
        in[0]->grad_buffer() += dgates;
      if (wants(in[1])) {
        // h_{t-1} for each step in processing order; zero at the first step.
        Tensor h_prev(steps, hidden);
        for (Index s = 1; s < steps; ++s) {
          const Index t = reverse ? steps - 1 - s : s;
          const Index t_prev = reverse ? t + 1 : t - 1;
          std::copy_n(outputs->row(t_prev), hidden, h_prev.row(t));
        }
        gemm(dgates, true, h_prev, false, in[1]->grad_buffer(), 1.0, 1.0);
      }
    });
  }

  Var straight_through(Tensor hard, const Var& soft) {
    check(hard.same_shape(soft.value()), "straight_through: shape mismatch");
    return make_result(std::move(hard), {soft}, [](const Tensor& g, const std::vector<NodePtr>& in) {
      in[0]->grad_buffer() += g;
    });
  }

  Var codebook_lookup(const Var& selection, const Var& codebook, Index groups) {
    const Tensor& sel = selection.value();
    const Tensor& cb = codebook.value();
    check(groups > 0 && sel.cols() % groups == 0 && cb.rows() == sel.cols(), "codebook_lookup: shapes");
    const Index entries = sel.cols() / groups;
    const Index dim = cb.cols();
    Tensor out(sel.rows(), groups * dim);
    for (Index t = 0; t < sel.rows(); ++t)
      for (Index gi = 0; gi < groups; ++gi) {
        double* o = out.row(t) + gi * dim;
        for (Index v = 0; v < entries; ++v) {
          const double w = sel(t, gi * entries + v);
          if (w == 0.0)
            continue;
          const double* e = cb.row(gi * entries + v);
          for (Index j = 0; j < dim; ++j)
            o[j] += w * e[j];
        }
      }
    return make_result(std::move(out), {selection, codebook},
                       [groups, entries, dim](const Tensor& g, const std::vector<NodePtr>& in) {
      const Tensor& sel = in[0]->value;
      const Tensor& cb = in[1]->value;
      Tensor* gs = wants(in[0]) ? &in[0]->grad_buffer() : nullptr;
      Tensor* gc = wants(in[1]) ? &in[1]->grad_buffer() : nullptr;
      for (Index t = 0; t < g.rows(); ++t)
        for (Index gi = 0; gi < groups; ++gi) {
          const double* go = g.row(t) + gi * dim;
          for (Index v = 0; v < entries; ++v) {
            const Index row = gi * entries + v;
            if (gs) {
              const double* e = cb.row(row);
              double acc = 0.0;
              for (Index j = 0; j < dim; ++j)
                acc += go[j] * e[j];
              (*gs)(t, row) += acc;
            }
            if (gc) {
              const double w = sel(t, row);
              if (w == 0.0)
                continue;
              double* d = gc->row(row);
              for (Index j = 0; j < dim; ++j)
                d[j] += w * go[j];
            }
          }
        }
    });
  }

}
