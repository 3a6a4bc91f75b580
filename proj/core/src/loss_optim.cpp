#include "plab/loss_optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plab {

namespace {
constexpr double kProbClamp = 1e-12;
}

void LossConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("LossConfig: alpha must be in (0,1)");
    if (!(gamma >= 0.0)) throw std::invalid_argument("LossConfig: gamma must be >= 0");
}

TargetMask map_labels_to_targets(const LabelVector& labels) {
    TargetMask tm;
    tm.targets.resize(labels.size());
    tm.mask.resize(labels.size());
    for (std::size_t c = 0; c < labels.size(); ++c) {
        tm.targets[c] = labels[c] == kPresent ? 1.0 : 0.0;
        tm.mask[c] = labels[c] == kUnknown ? 0 : 1;
    }
    return tm;
}

FocalResult focal_loss(std::span<const double> probs, const TargetMask& tm,
                       const LossConfig& cfg) {
    if (probs.size() != tm.size())
        throw std::invalid_argument("focal_loss: probs/targets size mismatch");

    std::size_t observed = 0;
    for (std::uint8_t m : tm.mask) observed += m;
    const double denom = std::max<std::size_t>(1, observed);

    FocalResult out;
    out.dloss_dp.assign(probs.size(), 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        if (tm.mask[c] == 0) continue;  // unknown labels never touch the loss
        if (!std::isfinite(probs[c]))
            throw std::invalid_argument("focal_loss: non-finite probability");
        const double p = std::clamp(probs[c], kProbClamp, 1.0 - kProbClamp);
        const double t = tm.targets[c];
        const double log_p = std::log(p);
        const double log_1mp = std::log1p(-p);
        const double pow_1mp = std::pow(1.0 - p, cfg.gamma);
        const double pow_p = std::pow(p, cfg.gamma);

        total += -t * cfg.alpha * pow_1mp * log_p -
                 (1.0 - t) * (1.0 - cfg.alpha) * pow_p * log_1mp;

        // d/dp of each branch; gamma*x^(gamma-1) vanishes for gamma == 0
        const double d_pos = -t * cfg.alpha *
                             (-cfg.gamma * std::pow(1.0 - p, cfg.gamma - 1.0) * log_p +
                              pow_1mp / p);
        const double d_neg = -(1.0 - t) * (1.0 - cfg.alpha) *
                             (cfg.gamma * std::pow(p, cfg.gamma - 1.0) * log_1mp -
                              pow_p / (1.0 - p));
        out.dloss_dp[c] = (d_pos + d_neg) / denom;
    }
    out.loss = total / denom;
    return out;
}

AdamState AdamState::init(std::size_t size, double lr) {
    AdamState s;
    s.m.assign(size, 0.0);
    s.v.assign(size, 0.0);
    s.lr = lr;
    return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");

    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

double batch_loss(const ModelParams& params, const ModelConfig& cfg,
                  const std::vector<const Example*>& batch, const LossConfig& loss_cfg) {
    double total = 0.0;
    for (const Example* ex : batch) {
        const Predictions pred = model_forward(params, cfg, ex->features, Mode::eval, nullptr);
        total += focal_loss(pred.clip_probs, map_labels_to_targets(ex->labels), loss_cfg).loss;
    }
    return total / static_cast<double>(batch.size());
}

Vec analytic_gradients(const ModelParams& params, const ModelConfig& cfg,
                       const std::vector<const Example*>& batch, const LossConfig& loss_cfg) {
    ModelGrads grads(params.layout);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Example* ex : batch) {
        ForwardCache cache;
        model_forward(params, cfg, ex->features, Mode::eval, nullptr, &cache);
        FocalResult fr = focal_loss(cache.clip_probs, map_labels_to_targets(ex->labels), loss_cfg);
        for (double& g : fr.dloss_dp) g *= scale;
        model_backward(params, cfg, cache, ex->features, fr.dloss_dp, grads);
    }
    return std::move(grads.values);
}

Vec finite_difference_gradients(const ModelParams& params, const ModelConfig& cfg,
                                const std::vector<const Example*>& batch,
                                const LossConfig& loss_cfg, double eps) {
    ModelParams work = params;
    Vec fd(params.values.size());
    for (std::size_t i = 0; i < work.values.size(); ++i) {
        const double saved = work.values[i];
        work.values[i] = saved + eps;
        const double up = batch_loss(work, cfg, batch, loss_cfg);
        work.values[i] = saved - eps;
        const double down = batch_loss(work, cfg, batch, loss_cfg);
        work.values[i] = saved;
        fd[i] = (up - down) / (2.0 * eps);
    }
    return fd;
}

double max_relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("max_relative_error: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

double finite_difference_check(const ModelConfig& cfg, const LossConfig& loss_cfg,
                               const std::vector<const Example*>& batch, std::uint64_t seed,
                               double eps) {
    if (batch.empty()) throw std::invalid_argument("finite_difference_check: empty batch");
    const ModelParams params = init_params(cfg, seed);
    const Vec analytic = analytic_gradients(params, cfg, batch, loss_cfg);
    const Vec fd = finite_difference_gradients(params, cfg, batch, loss_cfg, eps);
    return max_relative_error(analytic, fd);
}

}  // namespace plab
