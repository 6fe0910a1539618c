#include "model/model.h"

#include <algorithm>
#include <cmath>

#include "core/error.h"

namespace rssl {

  namespace {
    Tensor uniform_tensor(Index rows, Index cols, double bound, Rng& rng) {
      Tensor t(rows, cols);
      for (Index i = 0; i < t.size(); ++i)
        t[i] = bound * (2.0 * rng.uniform() - 1.0);
      return t;
    }

    Tensor normal_tensor(Index rows, Index cols, double stddev, Rng& rng) {
      Tensor t(rows, cols);
      for (Index i = 0; i < t.size(); ++i)
        t[i] = stddev * rng.normal();
      return t;
    }

    std::string idx(const std::string& base, Index i) {
      return base + std::to_string(i);
    }
  }

  // ParameterStore

  void ParameterStore::add(const std::string& name, Tensor value) {
    _params[name] = Var(std::move(value), true);
  }

  const Var& ParameterStore::get(const std::string& name) const {
    auto it = _params.find(name);
    if (it == _params.end())
      fail(ErrorKind::Internal, "MissingParameter", "no parameter named '" + name + "'");
    return it->second;
  }

  bool ParameterStore::contains(const std::string& name) const {
    return _params.count(name) > 0;
  }

  void ParameterStore::erase_prefix(const std::string& prefix) {
    for (auto it = _params.begin(); it != _params.end();)
      it = it->first.starts_with(prefix) ? _params.erase(it) : std::next(it);
  }

  bool ParameterStore::any_with_prefix(const std::string& prefix) const {
    auto it = _params.lower_bound(prefix);
    return it != _params.end() && it->first.starts_with(prefix);
  }

  std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : _params)
      out.push_back(name);
    return out;
  }

  Index ParameterStore::total_size() const {
    Index n = 0;
    for (const auto& [_, v] : _params)
      n += v.value().size();
    return n;
  }

  void ParameterStore::zero_grad() {
    for (auto& [_, v] : _params) {
      Var leaf = v;
      leaf.zero_grad();
    }
  }

  void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [name, v] : _params)
      if (name.starts_with(prefix)) {
        Var leaf = v;
        leaf.set_requires_grad(trainable);
      }
  }

  ParameterStore ParameterStore::clone() const {
    ParameterStore out;
    for (const auto& [name, v] : _params)
      out._params[name] = Var(v.value(), v.requires_grad());
    return out;
  }

  // Masking

  std::vector<Index> MaskPlan::masked_indices() const {
    std::vector<Index> out;
    for (std::size_t t = 0; t < mask.size(); ++t)
      if (mask[t])
        out.push_back(static_cast<Index>(t));
    return out;
  }

  MaskPlan plan_masks(Index frames, double p, Index span, Rng& rng) {
    if (frames < 1)
      fail(ErrorKind::Data, "TooShort", "cannot mask an empty sequence");
    MaskPlan plan;
    plan.span = span;
    plan.mask.assign(static_cast<std::size_t>(frames), false);
    for (Index t = 0; t < frames; ++t)
      if (rng.bernoulli(p))
        plan.starts.push_back(t);
    if (plan.starts.empty())
      plan.starts.push_back(rng.uniform_int(0, frames - 1));
    for (Index s : plan.starts)
      for (Index t = s; t < std::min(frames, s + span); ++t)
        plan.mask[static_cast<std::size_t>(t)] = true;
    return plan;
  }

  // Model

  Model::Model(ModelConfig config, std::uint64_t seed, ModelParts parts)
    : _config(std::move(config)) {
    _config.validate();
    Rng rng(derive_seed(seed, "model/core"));
    init_core(rng);
    if (parts.reconstruction)
      add_reconstruction(derive_seed(seed, "model/recon"));
    if (parts.ctc_head)
      add_ctc_head(derive_seed(seed, "model/ctc"));
  }

  Model Model::clone() const {
    Model m;
    m._config = _config;
    m._params = _params.clone();
    return m;
  }

  void Model::init_core(Rng& rng) {
    const auto& c = _config;
    Index in_ch = 1;
    for (std::size_t i = 0; i < c.encoder_layers.size(); ++i) {
      const auto& l = c.encoder_layers[i];
      const Index fan_in = l.kernel * in_ch;
      const auto li = static_cast<Index>(i);
      _params.add(idx("encoder.conv", li) + ".weight", normal_tensor(l.channels, fan_in, std::sqrt(2.0 / static_cast<double>(fan_in)), rng));
      _params.add(idx("encoder.conv", li) + ".bias", Tensor(1, l.channels));
      if (i == 0) {
        _params.add("encoder.norm0.gamma", Tensor(1, l.channels, 1.0));
        _params.add("encoder.norm0.beta", Tensor(1, l.channels));
      }
      in_ch = l.channels;
    }

    const Index d = c.model_dim;
    const Index zc = c.latent_dim();
    auto linear_init = [&](const std::string& name, Index out, Index in) {
      _params.add(name + ".weight", uniform_tensor(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
      _params.add(name + ".bias", Tensor(1, out));
    };
    auto norm_init = [&](const std::string& name, Index width) {
      _params.add(name + ".gamma", Tensor(1, width, 1.0));
      _params.add(name + ".beta", Tensor(1, width));
    };

    norm_init("feature.norm", zc);
    linear_init("feature.proj", d, zc);

    const Index gv = c.quantizer_groups * c.entries_per_group;
    linear_init("quantizer.logits", gv, zc);
    _params.add("quantizer.codebook", normal_tensor(gv, d / c.quantizer_groups, 1.0, rng));
    linear_init("quantizer.proj", d, d);

    Tensor mask_emb(1, d);
    for (Index i = 0; i < d; ++i)
      mask_emb[i] = rng.uniform();
    _params.add("context.mask_emb", std::move(mask_emb));
    _params.add("context.pos_conv.weight", normal_tensor(c.pos_conv_kernel, d, 1.0 / std::sqrt(static_cast<double>(c.pos_conv_kernel)), rng));
    _params.add("context.pos_conv.bias", Tensor(1, d));
    norm_init("context.pos_norm", d);
    for (Index b = 0; b < c.transformer_blocks; ++b) {
      const std::string prefix = idx("context.block", b);
      norm_init(prefix + ".norm1", d);
      linear_init(prefix + ".attn.q", d, d);
      linear_init(prefix + ".attn.k", d, d);
      linear_init(prefix + ".attn.v", d, d);
      linear_init(prefix + ".attn.o", d, d);
      norm_init(prefix + ".norm2", d);
      linear_init(prefix + ".ffn.fc1", c.ffn_dim, d);
      linear_init(prefix + ".ffn.fc2", d, c.ffn_dim);
    }
    norm_init("context.final_norm", d);
  }

  void Model::add_reconstruction(std::uint64_t seed) {
    drop_reconstruction();
    Rng rng(seed);
    init_reconstruction(rng);
  }

  void Model::add_ctc_head(std::uint64_t seed) {
    drop_ctc_head();
    Rng rng(seed);
    init_ctc(rng);
  }

  void Model::init_reconstruction(Rng& rng) {
    const auto& c = _config;
    const Index h = c.recon_hidden;
    Index in = c.recon_attach == ReconAttach::Latent ? c.latent_dim() : c.model_dim;
    const Index layers = c.recon_bottleneck == ReconBottleneck::Crn ? 2 : 3;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (Index l = 0; l < layers; ++l) {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string prefix = idx("recon.rnn", l) + "." + dir;
        _params.add(prefix + ".w_ih", uniform_tensor(4 * h, in, bound, rng));
        _params.add(prefix + ".w_hh", uniform_tensor(4 * h, h, bound, rng));
        _params.add(prefix + ".bias", Tensor(1, 4 * h));
      }
      _params.add(idx("recon.norm", l) + ".gamma", Tensor(1, 2 * h, 1.0));
      _params.add(idx("recon.norm", l) + ".beta", Tensor(1, 2 * h));
      in = 2 * h;
    }

    if (c.recon_bottleneck == ReconBottleneck::Crn) {
      // Mirror of the encoder: layer j undoes encoder layer L-1-j.
      const auto n = static_cast<Index>(c.encoder_layers.size());
      for (Index j = 0; j < n; ++j) {
        const Index i = n - 1 - j;
        const auto& l = c.encoder_layers[static_cast<std::size_t>(i)];
        const Index out = i == 0 ? 1 : c.encoder_layers[static_cast<std::size_t>(i - 1)].channels;
        double stddev = 1.0 / std::sqrt(static_cast<double>(in * l.kernel) / static_cast<double>(l.stride));
        if (i == 0)
          stddev *= 0.1;
        _params.add(idx("recon.deconv", j) + ".weight", normal_tensor(in, l.kernel * out, stddev, rng));
        _params.add(idx("recon.deconv", j) + ".bias", Tensor(1, out));
        in = out;
      }
    } else {
      const Index r = c.total_stride();
      _params.add("recon.upsample.weight", uniform_tensor(r, in, 0.1 / std::sqrt(static_cast<double>(in)), rng));
      _params.add("recon.upsample.bias", Tensor(1, r));
    }
  }

  void Model::init_ctc(Rng& rng) {
    const Index d = _config.model_dim;
    _params.add("ctc.weight", uniform_tensor(_config.vocab_size(), d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    _params.add("ctc.bias", Tensor(1, _config.vocab_size()));
  }

  Var Model::encode(const Var& waveform) const {
    if (waveform.cols() != 1)
      fail(ErrorKind::Internal, "BadShape", "waveform must be a column");
    if (_config.frames(waveform.rows()) < 1)
      fail(ErrorKind::Data, "TooShort",
           "input of " + std::to_string(waveform.rows()) + " samples is shorter than the receptive field ("
           + std::to_string(_config.min_input_length()) + ")");
    Var x = waveform;
    for (std::size_t i = 0; i < _config.encoder_layers.size(); ++i) {
      const auto& l = _config.encoder_layers[i];
      const auto li = static_cast<Index>(i);
      x = ag::conv1d(x, p(idx("encoder.conv", li) + ".weight"), p(idx("encoder.conv", li) + ".bias"), l.kernel, l.stride);
      if (i == 0)
        x = ag::time_norm(x, p("encoder.norm0.gamma"), p("encoder.norm0.beta"));
      x = ag::gelu(x);
    }
    return x;
  }

  Var Model::project_features(const Var& z) const {
    Var x = ag::layer_norm(z, p("feature.norm.gamma"), p("feature.norm.beta"));
    return ag::linear(x, p("feature.proj.weight"), p("feature.proj.bias"));
  }

  QuantizerOutput Model::quantize(const Var& z, QuantizerMode mode, double tau, std::optional<std::uint64_t> gumbel_seed) const {
    const Index groups = _config.quantizer_groups;
    const Index entries = _config.entries_per_group;
    Var logits = ag::linear(z, p("quantizer.logits.weight"), p("quantizer.logits.bias"));
    QuantizerOutput out;
    out.code_probs = ag::softmax_groups(logits, groups);

    Var perturbed = logits;
    if (gumbel_seed && mode != QuantizerMode::Hard) {
      Rng rng(*gumbel_seed);
      Tensor noise(logits.rows(), logits.cols());
      for (Index i = 0; i < noise.size(); ++i)
        noise[i] = rng.gumbel();
      perturbed = ag::add(logits, Var(std::move(noise)));
    }

    const Index frames = logits.rows();
    Tensor hard(frames, groups * entries);
    out.codes.resize(static_cast<std::size_t>(frames * groups));
    for (Index t = 0; t < frames; ++t)
      for (Index g = 0; g < groups; ++g) {
        const double* row = perturbed.value().row(t) + g * entries;
        const Index best = std::max_element(row, row + entries) - row;
        out.codes[static_cast<std::size_t>(t * groups + g)] = best;
        hard(t, g * entries + best) = 1.0;
      }

    Var selection;
    switch (mode) {
    case QuantizerMode::Soft:
      selection = ag::softmax_groups(ag::scale(perturbed, 1.0 / tau), groups);
      break;
    case QuantizerMode::StraightThrough:
      selection = ag::straight_through(std::move(hard), ag::softmax_groups(ag::scale(perturbed, 1.0 / tau), groups));
      break;
    case QuantizerMode::Hard:
      selection = Var(std::move(hard));
      break;
    }
    Var codewords = ag::codebook_lookup(selection, p("quantizer.codebook"), groups);
    out.q = ag::linear(codewords, p("quantizer.proj.weight"), p("quantizer.proj.bias"));
    return out;
  }

  Var Model::contextualize(const Var& features, const std::vector<bool>& mask) const {
    const Index heads = _config.attention_heads;
    Var x = ag::mask_rows(features, mask, p("context.mask_emb"));
    Var pos = ag::gelu(ag::depthwise_conv_same(x, p("context.pos_conv.weight"), p("context.pos_conv.bias")));
    x = ag::layer_norm(ag::add(x, pos), p("context.pos_norm.gamma"), p("context.pos_norm.beta"));
    for (Index b = 0; b < _config.transformer_blocks; ++b) {
      const std::string prefix = idx("context.block", b);
      auto lin = [&](const Var& in, const std::string& name) {
        return ag::linear(in, p(prefix + name + ".weight"), p(prefix + name + ".bias"));
      };
      Var h = ag::layer_norm(x, p(prefix + ".norm1.gamma"), p(prefix + ".norm1.beta"));
      Var a = ag::attention(lin(h, ".attn.q"), lin(h, ".attn.k"), lin(h, ".attn.v"), heads);
      x = ag::add(x, lin(a, ".attn.o"));
      h = ag::layer_norm(x, p(prefix + ".norm2.gamma"), p(prefix + ".norm2.beta"));
      x = ag::add(x, lin(ag::gelu(lin(h, ".ffn.fc1")), ".ffn.fc2"));
    }
    return ag::layer_norm(x, p("context.final_norm.gamma"), p("context.final_norm.beta"));
  }

  Var Model::blstm_layer(const Var& x, const std::string& prefix) const {
    Var fwd = ag::lstm(ag::linear(x, p(prefix + ".fwd.w_ih"), p(prefix + ".fwd.bias")), p(prefix + ".fwd.w_hh"), false);
    Var bwd = ag::lstm(ag::linear(x, p(prefix + ".bwd.w_ih"), p(prefix + ".bwd.bias")), p(prefix + ".bwd.w_hh"), true);
    return ag::concat_cols({fwd, bwd});
  }

  Var Model::reconstruct(const Var& rep, ReconAttach site, Index target_length) const {
    if (site != _config.recon_attach)
      fail(ErrorKind::Usage, "AttachmentMismatch",
           "reconstruction module is attached at '" + to_string(_config.recon_attach) + "', got '" + to_string(site) + "'");
    if (!has_reconstruction())
      fail(ErrorKind::Internal, "MissingParameter", "model has no reconstruction module");
    const Index expected = site == ReconAttach::Latent ? _config.latent_dim() : _config.model_dim;
    if (rep.cols() != expected)
      fail(ErrorKind::Usage, "AttachmentMismatch", "representation width " + std::to_string(rep.cols())
           + " does not match the '" + to_string(site) + "' site (" + std::to_string(expected) + ")");

    const Index layers = _config.recon_bottleneck == ReconBottleneck::Crn ? 2 : 3;
    Var x = rep;
    for (Index l = 0; l < layers; ++l) {
      x = blstm_layer(x, idx("recon.rnn", l));
      x = ag::layer_norm(x, p(idx("recon.norm", l) + ".gamma"), p(idx("recon.norm", l) + ".beta"));
    }

    if (_config.recon_bottleneck == ReconBottleneck::Crn) {
      const auto n = static_cast<Index>(_config.encoder_layers.size());
      for (Index j = 0; j < n; ++j) {
        const auto& l = _config.encoder_layers[static_cast<std::size_t>(n - 1 - j)];
        x = ag::conv_transpose1d(x, p(idx("recon.deconv", j) + ".weight"), p(idx("recon.deconv", j) + ".bias"), l.kernel, l.stride);
        if (j + 1 < n)
          x = ag::gelu(x);
      }
    } else {
      x = ag::linear(x, p("recon.upsample.weight"), p("recon.upsample.bias"));
      x = ag::reshape(x, x.rows() * x.cols(), 1);
    }
    return ag::fit_rows(x, target_length);
  }

  Var Model::ctc_log_probs(const Var& c) const {
    if (!has_ctc_head())
      fail(ErrorKind::Internal, "MissingParameter", "model has no CTC head");
    return ag::log_softmax_rows(ag::linear(c, p("ctc.weight"), p("ctc.bias")));
  }

  const Var& Model::attachment_input(const Representations& rep) const {
    switch (_config.recon_attach) {
    case ReconAttach::Latent: return rep.z;
    case ReconAttach::Quantized: return rep.q;
    case ReconAttach::Context: return rep.c;
    }
    return rep.c;
  }

  Representations Model::forward(const std::vector<double>& waveform, const ForwardOptions& options) const {
    Representations rep;
    rep.input_length = static_cast<Index>(waveform.size());
    rep.z = encode(waveform_var(waveform));
    rep.features = project_features(rep.z);
    if (options.run_quantizer) {
      QuantizerOutput qo = quantize(rep.z, options.quantizer, options.gumbel_tau, options.gumbel_seed);
      rep.q = qo.q;
      rep.code_probs = qo.code_probs;
    }
    if (options.mask) {
      if (static_cast<Index>(options.mask->mask.size()) != rep.z.rows())
        fail(ErrorKind::Internal, "BadShape", "mask length does not match frame count");
      rep.mask = *options.mask;
    } else {
      rep.mask.mask.assign(static_cast<std::size_t>(rep.z.rows()), false);
    }
    rep.c = contextualize(rep.features, rep.mask.mask);
    if (options.run_reconstruction) {
      if (_config.recon_attach == ReconAttach::Quantized && !options.run_quantizer)
        fail(ErrorKind::Usage, "AttachmentMismatch", "quantized attachment requires the quantizer");
      rep.y_hat = reconstruct(attachment_input(rep), _config.recon_attach, rep.input_length);
    }
    return rep;
  }

  Var waveform_var(const std::vector<double>& samples) {
    return Var(Tensor(static_cast<Index>(samples.size()), 1, samples));
  }

}
