#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "plab/dataio.hpp"
#include "plab/matrix.hpp"
#include "plab/rng.hpp"

namespace plab {

struct ModelConfig {
    std::size_t input_dim = 128;
    std::size_t hidden = 64;        // units per direction
    std::size_t num_classes = 20;
    double dropout = 0.2;           // input mask rate
    double recurrent_dropout = 0.2; // recurrent-state mask rate
    double attention_clip = 10.0;   // score clamp before softmax-over-time

    void validate() const;
};

// All learnable parameters in one flat buffer. Block order (also the
// checkpoint order): W_fwd, U_fwd, b_fwd, W_bwd, U_bwd, b_bwd, W_att, b_att,
// W_cla, b_cla. Gate slices within the 4H axis are [i, f, g, o]; the forget
// slice is rows [H, 2H).
struct ParamLayout {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    std::size_t num_classes = 0;

    ParamLayout() = default;
    ParamLayout(std::size_t d, std::size_t h, std::size_t c)
        : input_dim(d), hidden(h), num_classes(c) {}

    std::size_t gate_rows() const { return 4 * hidden; }
    std::size_t w_dir_size() const { return gate_rows() * input_dim; }
    std::size_t u_dir_size() const { return gate_rows() * hidden; }
    std::size_t dir_size() const { return w_dir_size() + u_dir_size() + gate_rows(); }
    std::size_t head_size() const { return num_classes * 2 * hidden + num_classes; }
    std::size_t total() const { return 2 * dir_size() + 2 * head_size(); }

    std::size_t w_dir_off(std::size_t dir) const { return dir * dir_size(); }
    std::size_t u_dir_off(std::size_t dir) const { return w_dir_off(dir) + w_dir_size(); }
    std::size_t b_dir_off(std::size_t dir) const { return u_dir_off(dir) + u_dir_size(); }
    std::size_t w_att_off() const { return 2 * dir_size(); }
    std::size_t b_att_off() const { return w_att_off() + num_classes * 2 * hidden; }
    std::size_t w_cla_off() const { return b_att_off() + num_classes; }
    std::size_t b_cla_off() const { return w_cla_off() + num_classes * 2 * hidden; }

    bool operator==(const ParamLayout&) const = default;
};

struct ModelParams {
    ParamLayout layout;
    Vec values;

    ModelParams() = default;
    explicit ModelParams(ParamLayout l) : layout(l), values(l.total(), 0.0) {}

    // dir: 0 = forward, 1 = backward
    MatView w_dir(std::size_t dir) {
        return {values.data() + layout.w_dir_off(dir), layout.gate_rows(), layout.input_dim};
    }
    ConstMatView w_dir(std::size_t dir) const {
        return {values.data() + layout.w_dir_off(dir), layout.gate_rows(), layout.input_dim};
    }
    MatView u_dir(std::size_t dir) {
        return {values.data() + layout.u_dir_off(dir), layout.gate_rows(), layout.hidden};
    }
    ConstMatView u_dir(std::size_t dir) const {
        return {values.data() + layout.u_dir_off(dir), layout.gate_rows(), layout.hidden};
    }
    std::span<double> b_dir(std::size_t dir) {
        return {values.data() + layout.b_dir_off(dir), layout.gate_rows()};
    }
    std::span<const double> b_dir(std::size_t dir) const {
        return {values.data() + layout.b_dir_off(dir), layout.gate_rows()};
    }
    MatView w_att() {
        return {values.data() + layout.w_att_off(), layout.num_classes, 2 * layout.hidden};
    }
    ConstMatView w_att() const {
        return {values.data() + layout.w_att_off(), layout.num_classes, 2 * layout.hidden};
    }
    std::span<double> b_att() { return {values.data() + layout.b_att_off(), layout.num_classes}; }
    std::span<const double> b_att() const {
        return {values.data() + layout.b_att_off(), layout.num_classes};
    }
    MatView w_cla() {
        return {values.data() + layout.w_cla_off(), layout.num_classes, 2 * layout.hidden};
    }
    ConstMatView w_cla() const {
        return {values.data() + layout.w_cla_off(), layout.num_classes, 2 * layout.hidden};
    }
    std::span<double> b_cla() { return {values.data() + layout.b_cla_off(), layout.num_classes}; }
    std::span<const double> b_cla() const {
        return {values.data() + layout.b_cla_off(), layout.num_classes};
    }

    void zero() { values.assign(values.size(), 0.0); }
};

// Gradients share the parameter layout.
using ModelGrads = ModelParams;

// Variational dropout: one mask per sequence, reused at every timestep.
// Entries are 0 or 1/(1-rate) (inverted scaling).
struct DropoutMasks {
    Vec input;     // D
    Vec rec_fwd;   // H
    Vec rec_bwd;   // H

    static DropoutMasks identity(const ModelConfig& cfg);
    static DropoutMasks sample(const ModelConfig& cfg, Rng& rng);
};

struct Predictions {
    Vec clip_probs;         // C
    Matrix per_step_probs;  // T x C
    Matrix attention;       // T x C, per-class rows sum to 1 over time
};

enum class Mode { train, eval };

// Everything the backward pass needs, cached by the forward pass.
struct DirectionCache {
    Matrix gate_i, gate_f, gate_g, gate_o;  // T x H, post-activation
    Matrix cell, cell_tanh;                 // T x H
    Matrix hidden;                          // T x H

    void resize(std::size_t t, std::size_t h);
};

struct ForwardCache {
    std::size_t timesteps = 0;
    DropoutMasks masks;
    Matrix masked_input;    // T x D, input rows times the variational mask
    DirectionCache fwd, bwd;
    Matrix hidden_cat;      // T x 2H
    Matrix att_scores_raw;  // T x C, pre-clip scores (gates the clip gradient)
    Matrix att_weights;     // T x C
    Matrix step_probs;      // T x C
    Vec clip_probs;         // C
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// One timestep of one direction over pre-masked inputs. Gates:
//   i,f,o = logistic(W x + U h_prev + b) on their slices, g = tanh(...)
//   c = f.c_prev + i.g,  h = o.tanh(c)
void lstm_cell_forward(ConstMatView w, ConstMatView u, std::span<const double> bias,
                       std::span<const double> x_masked, std::span<const double> h_prev_masked,
                       std::span<const double> c_prev, std::span<double> gate_i,
                       std::span<double> gate_f, std::span<double> gate_g,
                       std::span<double> gate_o, std::span<double> c_out,
                       std::span<double> c_tanh_out, std::span<double> h_out);

// Full bidirectional encoding; row t of the result is [h_t^fwd || h_t^bwd].
// Both directions start from zero state.
Matrix bilstm_forward(const ModelParams& params, const FeatureSequence& features,
                      const DropoutMasks& masks);

// Per-class attention pooling over a T x 2H hidden sequence:
//   z_tc = clip(W_att h_t + b_att, +-kappa), a_.c = softmax over t (max-subtracted)
//   q_tc = logistic(W_cla h_t + b_cla),      p_c  = sum_t a_tc q_tc
Predictions attention_forward(const ModelParams& params, const Matrix& hidden,
                              double attention_clip);

// Train mode samples one DropoutMasks per call from rng; eval mode is a pure
// function of (params, features). Pass a cache to enable model_backward.
Predictions model_forward(const ModelParams& params, const ModelConfig& cfg,
                          const FeatureSequence& features, Mode mode, Rng* rng,
                          ForwardCache* cache = nullptr);

// Exact reverse-mode gradients of model_forward for one example, accumulated
// into grads (+=). dloss_dp is the upstream gradient w.r.t. clip_probs.
// Dropout masks are treated as constants.
void model_backward(const ModelParams& params, const ModelConfig& cfg, const ForwardCache& cache,
                    const FeatureSequence& features, std::span<const double> dloss_dp,
                    ModelGrads& grads);

// Checkpoint file: magic "PLAB", u32 version, u32 dims (D,H,C), then the flat
// parameter buffer as little-endian float64. Bit-exact round-trip.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace plab
