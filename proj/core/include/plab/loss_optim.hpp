#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plab/dataio.hpp"
#include "plab/matrix.hpp"
#include "plab/model.hpp"

namespace plab {

// Loss-facing label encoding: per-class soft target in [0,1] plus a binary
// observation mask. Targets are ignored wherever the mask is 0.
struct TargetMask {
    Vec targets;
    std::vector<std::uint8_t> mask;

    std::size_t size() const { return targets.size(); }
};

struct LossConfig {
    double alpha = 0.75;  // positive-class balance; negatives weigh 1-alpha
    double gamma = 2.0;   // focusing exponent

    void validate() const;
};

// +1 -> (t=1, m=1); -1 -> (t=0, m=1); 0 -> (t=0, m=0)
TargetMask map_labels_to_targets(const LabelVector& labels);

struct FocalResult {
    double loss = 0.0;
    Vec dloss_dp;
};

// Masked focal loss over soft targets, normalized by the observed-class count:
//   l_c = m_c [ -t_c a (1-p_c)^g log p_c - (1-t_c)(1-a) p_c^g log(1-p_c) ]
//   loss = sum_c l_c / max(1, sum_c m_c)
// Probabilities are clamped to [1e-12, 1-1e-12] first. Masked classes
// contribute exactly zero to the loss and carry exactly zero gradient.
FocalResult focal_loss(std::span<const double> probs, const TargetMask& tm,
                       const LossConfig& cfg);

struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t step = 0;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(std::size_t size, double lr = 5e-4);
};

// One bias-corrected Adam update, elementwise over the flat parameter buffer.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// --- finite-difference harness -------------------------------------------

// Mean-over-batch eval-mode loss at the given parameters.
double batch_loss(const ModelParams& params, const ModelConfig& cfg,
                  const std::vector<const Example*>& batch, const LossConfig& loss_cfg);

// Analytic gradient of batch_loss via model_backward.
Vec analytic_gradients(const ModelParams& params, const ModelConfig& cfg,
                       const std::vector<const Example*>& batch, const LossConfig& loss_cfg);

// Central-difference gradient of batch_loss, perturbing every entry by +-eps.
Vec finite_difference_gradients(const ModelParams& params, const ModelConfig& cfg,
                                const std::vector<const Example*>& batch,
                                const LossConfig& loss_cfg, double eps);

// max over entries of |a - b| / max(|a|, |b|, 1e-8)
double max_relative_error(std::span<const double> a, std::span<const double> b);

// Initializes params from the seed, builds both gradients, returns the max
// relative disagreement. Intended for tiny configs (D<=4, H<=3, C<=3, T<=5).
double finite_difference_check(const ModelConfig& cfg, const LossConfig& loss_cfg,
                               const std::vector<const Example*>& batch, std::uint64_t seed,
                               double eps);

}  // namespace plab
