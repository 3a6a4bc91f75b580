#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plab/dataio.hpp"
#include "plab/loss_optim.hpp"
#include "plab/rng.hpp"

namespace plab {

struct AugmentConfig {
    double beta_alpha = 0.2;  // Beta(alpha, alpha) shape for the mix-up weight
    double mixup_prob = 0.5;  // per-item application probability
    double concat_prob = 0.5;

    void validate() const;
};

// A loss-ready training item: features plus soft targets with observation mask.
struct TrainItem {
    std::string provenance;  // clip id, "a+b" for concat, "mix(...)" for mix-up
    FeatureSequence features;
    TargetMask target;
};

// lambda ~ Beta(beta_alpha, beta_alpha)
double sample_mixup_weight(double beta_alpha, Rng& rng);

// Convex feature blend; labels mix in (target, mask) space with AND-masking,
// so a class unobserved in either source stays unobserved in the mix.
TrainItem mixup(const Example& a, const Example& b, double lambda);

// Three-valued disjunction over {-1,0,+1}: +1 dominates, -1 only when both
// are -1, otherwise unknown. Equivalent to max under -1 < 0 < +1.
std::int8_t label_or(std::int8_t a, std::int8_t b);

// Stacks b's rows after a's along time; labels combine via label_or.
Example concat_augment(const Example& a, const Example& b);

// Batch policy: each example is concatenated with a random batch member with
// probability concat_prob, then mix-up runs within equal-length groups with
// probability mixup_prob and a fresh lambda per pair. Untouched items pass
// through with hard labels mapped to targets. Emits one item per input
// example, grouped into sub-batches homogeneous in T (base length first).
std::vector<std::vector<TrainItem>> augment_batch(const Batch& batch, const AugmentConfig& cfg,
                                                  Rng& rng);

}  // namespace plab
