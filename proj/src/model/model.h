#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/autograd.h"
#include "core/rng.h"
#include "model/config.h"

namespace rssl {

  using ag::Var;

  // Named parameter leaves, iterated in name order.
  class ParameterStore {
  public:
    void add(const std::string& name, Tensor value);
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    void erase_prefix(const std::string& prefix);
    bool any_with_prefix(const std::string& prefix) const;

    std::vector<std::string> names() const;
    const std::map<std::string, Var>& items() const { return _params; }
    Index total_size() const;

    void zero_grad();
    // Gradient recording on/off for every parameter under `prefix`.
    void set_trainable(const std::string& prefix, bool trainable);

    // Independent copy of every value (fresh leaves).
    ParameterStore clone() const;

  private:
    std::map<std::string, Var> _params;
  };

  // Span mask over latent frames.
  struct MaskPlan {
    std::vector<Index> starts;
    Index span = 1;
    std::vector<bool> mask;

    std::vector<Index> masked_indices() const;
  };

  // Every frame starts a span with probability p; spans are clipped to the
  // sequence and one span is forced when none was drawn.
  MaskPlan plan_masks(Index frames, double p, Index span, Rng& rng);

  enum class QuantizerMode {
    // Differentiable Gumbel-softmax selection.
    Soft,
    // Hard one-hot forward, soft gradient.
    StraightThrough,
    // Argmax of the logits, no noise.
    Hard,
  };

  struct QuantizerOutput {
    Var q;             // T' x d
    Var code_probs;    // T' x G*V, noise-free softmax of the logits
    std::vector<Index> codes;  // T' x G selected entries, row-major
  };

  struct ForwardOptions {
    QuantizerMode quantizer = QuantizerMode::Hard;
    double gumbel_tau = 1.0;
    // Gumbel noise is drawn only when set.
    std::optional<std::uint64_t> gumbel_seed;
    std::optional<MaskPlan> mask;
    bool run_quantizer = true;
    bool run_reconstruction = false;
  };

  struct Representations {
    Var z;          // latent frames, T' x C_last
    Var features;   // projected latents fed to the context network, T' x d
    Var q;          // quantized targets, T' x d
    Var code_probs;
    Var c;          // contextual vectors, T' x d
    Var y_hat;      // reconstruction, T x 1 (when requested)
    MaskPlan mask;
    Index input_length = 0;
  };

  struct ModelParts {
    bool reconstruction = false;
    bool ctc_head = false;
  };

  class Model {
  public:
    Model() = default;
    Model(ModelConfig config, std::uint64_t seed, ModelParts parts = {});

    const ModelConfig& config() const { return _config; }
    ModelConfig& mutable_config() { return _config; }
    ParameterStore& params() { return _params; }
    const ParameterStore& params() const { return _params; }

    bool has_reconstruction() const { return _params.any_with_prefix("recon."); }
    bool has_ctc_head() const { return _params.any_with_prefix("ctc."); }
    void add_reconstruction(std::uint64_t seed);
    void add_ctc_head(std::uint64_t seed);
    void drop_reconstruction() { _params.erase_prefix("recon."); }
    void drop_ctc_head() { _params.erase_prefix("ctc."); }

    Model clone() const;

    // Waveform (T x 1) -> Z (T' x C_last). Throws Data/TooShort when T' < 1.
    Var encode(const Var& waveform) const;
    // Layer norm + projection of Z to the model dimension.
    Var project_features(const Var& z) const;
    QuantizerOutput quantize(const Var& z, QuantizerMode mode, double tau, std::optional<std::uint64_t> gumbel_seed) const;
    // Replaces masked frames by the learned mask embedding, adds the
    // convolutional positional term and runs the transformer blocks.
    Var contextualize(const Var& features, const std::vector<bool>& mask) const;
    // rep must come from the configured attachment site. Output T x 1.
    Var reconstruct(const Var& rep, ReconAttach site, Index target_length) const;
    // Per-frame log-probabilities over the vocabulary.
    Var ctc_log_probs(const Var& c) const;

    Representations forward(const std::vector<double>& waveform, const ForwardOptions& options) const;

    // Z, Q or C per the configured site.
    const Var& attachment_input(const Representations& rep) const;

  private:
    Var p(const std::string& name) const { return _params.get(name); }
    void init_core(Rng& rng);
    void init_reconstruction(Rng& rng);
    void init_ctc(Rng& rng);
    Var blstm_layer(const Var& x, const std::string& prefix) const;

    ModelConfig _config;
    ParameterStore _params;
  };

  Var waveform_var(const std::vector<double>& samples);

}
