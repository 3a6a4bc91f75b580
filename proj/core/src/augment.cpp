#include "plab/augment.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace plab {
namespace {

TrainItem pass_through(const Example& ex) {
    TrainItem item;
    item.provenance = ex.clip_id;
    item.features = ex.features;
    item.target = map_labels_to_targets(ex.labels);
    return item;
}

std::string format_lambda(double lambda) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", lambda);
    return buf;
}

}  // namespace

void AugmentConfig::validate() const {
    if (!(beta_alpha > 0.0))
        throw std::invalid_argument("AugmentConfig: beta_alpha must be > 0");
    if (!(mixup_prob >= 0.0 && mixup_prob <= 1.0) ||
        !(concat_prob >= 0.0 && concat_prob <= 1.0))
        throw std::invalid_argument("AugmentConfig: probabilities must be in [0,1]");
}

double sample_mixup_weight(double beta_alpha, Rng& rng) {
    if (!(beta_alpha > 0.0))
        throw std::invalid_argument("sample_mixup_weight: beta_alpha must be > 0");
    return rng.beta(beta_alpha, beta_alpha);
}

TrainItem mixup(const Example& a, const Example& b, double lambda) {
    if (a.features.timesteps != b.features.timesteps || a.features.dim != b.features.dim)
        throw std::invalid_argument("mixup: feature shape mismatch");
    if (a.labels.size() != b.labels.size())
        throw std::invalid_argument("mixup: label length mismatch");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("mixup: lambda outside [0,1]");

    TrainItem item;
    item.provenance = "mix(" + a.clip_id + "," + b.clip_id + "|l=" + format_lambda(lambda) + ")";
    item.features = FeatureSequence(a.features.timesteps, a.features.dim);
    for (std::size_t j = 0; j < item.features.data.size(); ++j)
        item.features.data[j] = lambda * a.features.data[j] + (1.0 - lambda) * b.features.data[j];

    const TargetMask ta = map_labels_to_targets(a.labels);
    const TargetMask tb = map_labels_to_targets(b.labels);
    item.target.targets.resize(ta.size());
    item.target.mask.resize(ta.size());
    for (std::size_t c = 0; c < ta.size(); ++c) {
        item.target.targets[c] = lambda * ta.targets[c] + (1.0 - lambda) * tb.targets[c];
        item.target.mask[c] = ta.mask[c] & tb.mask[c];  // supervise only where both observed
    }
    return item;
}

std::int8_t label_or(std::int8_t a, std::int8_t b) { return std::max(a, b); }

Example concat_augment(const Example& a, const Example& b) {
    if (a.features.dim != b.features.dim)
        throw std::invalid_argument("concat_augment: feature dim mismatch");
    if (a.labels.size() != b.labels.size())
        throw std::invalid_argument("concat_augment: label length mismatch");

    Example out;
    out.clip_id = a.clip_id + "+" + b.clip_id;
    out.split = a.split;
    out.features = FeatureSequence(a.features.timesteps + b.features.timesteps, a.features.dim);
    std::copy(a.features.data.begin(), a.features.data.end(), out.features.data.begin());
    std::copy(b.features.data.begin(), b.features.data.end(),
              out.features.data.begin() + static_cast<std::ptrdiff_t>(a.features.data.size()));
    out.labels.resize(a.labels.size());
    for (std::size_t c = 0; c < a.labels.size(); ++c)
        out.labels[c] = label_or(a.labels[c], b.labels[c]);
    return out;
}

std::vector<std::vector<TrainItem>> augment_batch(const Batch& batch, const AugmentConfig& cfg,
                                                  Rng& rng) {
    cfg.validate();
    const std::size_t n = batch.size();
    if (n == 0) return {};

    // stage 1: concat decisions, partner uniform over the batch (self allowed)
    std::vector<Example> staged;
    staged.reserve(n);
    std::vector<bool> concatenated(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.bernoulli(cfg.concat_prob)) {
            const std::size_t j = static_cast<std::size_t>(rng.below(n));
            staged.push_back(concat_augment(*batch.items[i], *batch.items[j]));
            concatenated[i] = true;
        } else {
            staged.push_back(*batch.items[i]);
        }
    }

    // equal-length groups, base length first, original order within each
    std::vector<std::size_t> base_group, concat_group;
    for (std::size_t i = 0; i < n; ++i)
        (concatenated[i] ? concat_group : base_group).push_back(i);

    // stage 2: mix-up within groups, fresh lambda per pair
    std::vector<std::vector<TrainItem>> out;
    for (const auto& group : {base_group, concat_group}) {
        if (group.empty()) continue;
        std::vector<TrainItem> sub;
        sub.reserve(group.size());
        for (std::size_t idx : group) {
            if (rng.bernoulli(cfg.mixup_prob)) {
                const std::size_t partner = group[rng.below(group.size())];
                const double lambda = sample_mixup_weight(cfg.beta_alpha, rng);
                sub.push_back(mixup(staged[idx], staged[partner], lambda));
            } else {
                sub.push_back(pass_through(staged[idx]));
            }
        }
        out.push_back(std::move(sub));
    }
    return out;
}

}  // namespace plab
