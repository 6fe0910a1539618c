#pragma once

#include <limits>
#include <vector>

#include "core/autograd.h"
#include "core/tensor.h"

namespace rssl {

  using ag::Var;

  struct LossWeights {
    double diversity = 0.1;
    double reconstruction = 0.1;
  };

  struct LossBreakdown {
    double contrastive = 0.0;
    double diversity = 0.0;
    double reconstruction = 0.0;
    double total = 0.0;
    double contrastive_accuracy = 0.0;
    std::vector<double> codebook_perplexity;
  };

  // Contrastive (InfoNCE) terms over cosine similarity.
  struct ContrastiveResult {
    double loss = 0.0;       // mean over steps
    double accuracy = 0.0;   // fraction of steps whose positive scores highest
    Index steps = 0;
  };

  // Row t of c_masked is scored against row t of q_true (positive) and the K
  // rows of negatives[t]. Throws Data/ZeroVector on a zero-norm vector.
  ContrastiveResult contrastive_loss(const Tensor& c_masked, const Tensor& q_true,
                                     const std::vector<Tensor>& negatives, double tau);

  // Summed contrastive loss on full sequences: for each steps[i], context row
  // steps[i] of c against quantized row steps[i] of q and rows negatives[i].
  struct ContrastiveSum {
    Var sum;
    Index correct = 0;
  };
  ContrastiveSum contrastive_loss_sum(const Var& c, const Var& q, const std::vector<Index>& steps,
                                      const std::vector<std::vector<Index>>& negatives, double tau);

  // usage is G x V; each row a distribution (tolerance 1e-5, else
  // Data/NotADistribution).
  double diversity_loss(const Tensor& usage);

  // Per-group exp(entropy) of a G x V usage matrix.
  std::vector<double> codebook_perplexity(const Tensor& usage);

  // Batch-averaged usage (G x V) from stacked per-frame probabilities (N x G*V).
  Tensor average_usage(const Tensor& frame_probs, Index groups);

  // Diversity loss of the averaged per-frame probabilities, differentiable.
  Var diversity_loss_from_probs(const Var& frame_probs, Index groups);

  // Mean absolute error; Data/LengthMismatch on differing lengths.
  double reconstruction_loss(const std::vector<double>& y_hat, const std::vector<double>& y);
  Var reconstruction_loss(const Var& y_hat, const Tensor& y);

  double total_loss(double contrastive, double diversity, double reconstruction, const LossWeights& weights = {});
  Var total_loss(const Var& contrastive, const Var& diversity, const Var& reconstruction, const LossWeights& weights);

  // Negative log-likelihood of labels under the CTC lattice; +inf when the
  // labels cannot be aligned in the available frames. Optional gradient with
  // respect to the (T x V) log-probability inputs.
  double ctc_loss(const Tensor& log_probs, const std::vector<Index>& labels, Index blank = 0, Tensor* grad = nullptr);
  Var ctc_loss(const Var& log_probs, const std::vector<Index>& labels, Index blank = 0);

  // Minimum frame count CTC needs for the label sequence.
  Index ctc_min_frames(const std::vector<Index>& labels);

}
