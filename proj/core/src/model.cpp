#include "plab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace plab {
namespace {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// pre-activation (4H) + previous cell -> gate activations and new state
void apply_gates(std::span<const double> pre, std::span<const double> c_prev,
                 std::span<double> gi, std::span<double> gf, std::span<double> gg,
                 std::span<double> go, std::span<double> c_out, std::span<double> tc_out,
                 std::span<double> h_out) {
    const std::size_t h = gi.size();
    for (std::size_t k = 0; k < h; ++k) {
        gi[k] = logistic(pre[k]);
        gf[k] = logistic(pre[h + k]);
        gg[k] = std::tanh(pre[2 * h + k]);
        go[k] = logistic(pre[3 * h + k]);
        c_out[k] = gf[k] * c_prev[k] + gi[k] * gg[k];
        tc_out[k] = std::tanh(c_out[k]);
        h_out[k] = go[k] * tc_out[k];
    }
}

// dir: 0 scans t = 0..T-1, 1 scans t = T-1..0
void run_direction(const ModelParams& params, std::size_t dir, const Matrix& masked_x,
                   std::span<const double> rec_mask, DirectionCache& cache) {
    const std::size_t t_count = masked_x.rows();
    const std::size_t h = params.layout.hidden;
    cache.resize(t_count, h);

    const ConstMatView w = params.w_dir(dir);
    const ConstMatView u = params.u_dir(dir);
    const std::span<const double> bias = params.b_dir(dir);

    // input contribution for every timestep up front
    Matrix wx(t_count, 4 * h);
    for (std::size_t t = 0; t < t_count; ++t) gemv(w, masked_x.row(t), wx.row(t));

    const Vec zeros(h, 0.0);
    Vec pre(4 * h), hm(h);
    for (std::size_t k = 0; k < t_count; ++k) {
        const std::size_t t = dir == 0 ? k : t_count - 1 - k;
        const auto wx_row = wx.row(t);
        for (std::size_t j = 0; j < 4 * h; ++j) pre[j] = wx_row[j] + bias[j];

        std::span<const double> h_prev = zeros;
        std::span<const double> c_prev = zeros;
        if (k > 0) {
            const std::size_t t_prev = dir == 0 ? t - 1 : t + 1;
            h_prev = cache.hidden.row(t_prev);
            c_prev = cache.cell.row(t_prev);
        }
        for (std::size_t j = 0; j < h; ++j) hm[j] = h_prev[j] * rec_mask[j];
        gemv_add(u, hm, pre);

        apply_gates(pre, c_prev, cache.gate_i.row(t), cache.gate_f.row(t), cache.gate_g.row(t),
                    cache.gate_o.row(t), cache.cell.row(t), cache.cell_tanh.row(t),
                    cache.hidden.row(t));
    }
}

void backward_direction(const ModelParams& params, std::size_t dir, const DirectionCache& cache,
                        const Matrix& masked_x, std::span<const double> rec_mask,
                        const Matrix& dhidden_cat, ModelGrads& grads) {
    const std::size_t t_count = masked_x.rows();
    const std::size_t h = params.layout.hidden;
    const std::size_t col0 = dir == 0 ? 0 : h;  // this direction's half of [fwd || bwd]

    const ConstMatView u = params.u_dir(dir);
    MatView gw = grads.w_dir(dir);
    MatView gu = grads.u_dir(dir);
    std::span<double> gb = grads.b_dir(dir);

    const Vec zeros(h, 0.0);
    Vec dh(h), dc(h), dh_carry(h, 0.0), dc_carry(h, 0.0), dpre(4 * h), hm_prev(h);

    // reverse of the processing order; the carry flows toward earlier steps
    for (std::size_t k = t_count; k-- > 0;) {
        const std::size_t t = dir == 0 ? k : t_count - 1 - k;
        std::span<const double> c_prev = zeros;
        std::span<const double> h_prev = zeros;
        if (k > 0) {
            const std::size_t t_prev = dir == 0 ? t - 1 : t + 1;
            c_prev = cache.cell.row(t_prev);
            h_prev = cache.hidden.row(t_prev);
        }

        const auto gi = cache.gate_i.row(t);
        const auto gf = cache.gate_f.row(t);
        const auto gg = cache.gate_g.row(t);
        const auto go = cache.gate_o.row(t);
        const auto tc = cache.cell_tanh.row(t);
        const auto ext = dhidden_cat.row(t);

        for (std::size_t j = 0; j < h; ++j) {
            dh[j] = ext[col0 + j] + dh_carry[j];
            const double d_o = dh[j] * tc[j];
            const double d_tc = dh[j] * go[j];
            dc[j] = dc_carry[j] + d_tc * (1.0 - tc[j] * tc[j]);
            const double d_i = dc[j] * gg[j];
            const double d_g = dc[j] * gi[j];
            const double d_f = dc[j] * c_prev[j];
            dc_carry[j] = dc[j] * gf[j];
            dpre[j] = d_i * gi[j] * (1.0 - gi[j]);
            dpre[h + j] = d_f * gf[j] * (1.0 - gf[j]);
            dpre[2 * h + j] = d_g * (1.0 - gg[j] * gg[j]);
            dpre[3 * h + j] = d_o * go[j] * (1.0 - go[j]);
        }

        outer_add(gw, dpre, masked_x.row(t));
        if (k > 0) {
            for (std::size_t j = 0; j < h; ++j) hm_prev[j] = h_prev[j] * rec_mask[j];
            outer_add(gu, dpre, hm_prev);
            std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
            gemv_t_add(u, dpre, dh_carry);
            for (std::size_t j = 0; j < h; ++j) dh_carry[j] *= rec_mask[j];
        }
        axpy(1.0, dpre, gb);
    }
}

void attention_into_cache(const ModelParams& params, const Matrix& hidden, double kappa,
                          ForwardCache& cache) {
    const std::size_t t_count = hidden.rows();
    const std::size_t c_count = params.layout.num_classes;

    cache.att_scores_raw = Matrix(t_count, c_count);
    cache.att_weights = Matrix(t_count, c_count);
    cache.step_probs = Matrix(t_count, c_count);
    cache.clip_probs.assign(c_count, 0.0);

    const ConstMatView w_att = params.w_att();
    const ConstMatView w_cla = params.w_cla();
    const auto b_att = params.b_att();
    const auto b_cla = params.b_cla();

    for (std::size_t t = 0; t < t_count; ++t) {
        auto raw = cache.att_scores_raw.row(t);
        auto q = cache.step_probs.row(t);
        gemv(w_att, hidden.row(t), raw);
        gemv(w_cla, hidden.row(t), q);
        for (std::size_t c = 0; c < c_count; ++c) {
            raw[c] += b_att[c];
            q[c] = logistic(q[c] + b_cla[c]);
        }
    }

    // per-class softmax over time of the clipped scores, max-subtracted
    for (std::size_t c = 0; c < c_count; ++c) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < t_count; ++t) {
            const double z = std::clamp(cache.att_scores_raw(t, c), -kappa, kappa);
            zmax = std::max(zmax, z);
        }
        double sum = 0.0;
        for (std::size_t t = 0; t < t_count; ++t) {
            const double z = std::clamp(cache.att_scores_raw(t, c), -kappa, kappa);
            const double e = std::exp(z - zmax);
            cache.att_weights(t, c) = e;
            sum += e;
        }
        double p = 0.0;
        for (std::size_t t = 0; t < t_count; ++t) {
            cache.att_weights(t, c) /= sum;
            p += cache.att_weights(t, c) * cache.step_probs(t, c);
        }
        cache.clip_probs[c] = p;
    }
}

void checkpoint_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
    if (input_dim == 0 || hidden == 0 || num_classes == 0)
        throw std::invalid_argument("ModelConfig: dims must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0) ||
        !(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0))
        throw std::invalid_argument("ModelConfig: dropout rates must be in [0,1)");
    if (!(attention_clip > 0.0))
        throw std::invalid_argument("ModelConfig: attention_clip must be > 0");
}

void DirectionCache::resize(std::size_t t, std::size_t h) {
    for (Matrix* m : {&gate_i, &gate_f, &gate_g, &gate_o, &cell, &cell_tanh, &hidden})
        if (m->rows() != t || m->cols() != h) *m = Matrix(t, h);
}

DropoutMasks DropoutMasks::identity(const ModelConfig& cfg) {
    DropoutMasks m;
    m.input.assign(cfg.input_dim, 1.0);
    m.rec_fwd.assign(cfg.hidden, 1.0);
    m.rec_bwd.assign(cfg.hidden, 1.0);
    return m;
}

DropoutMasks DropoutMasks::sample(const ModelConfig& cfg, Rng& rng) {
    DropoutMasks m = identity(cfg);
    auto draw = [&rng](Vec& mask, double rate) {
        if (rate == 0.0) return;
        const double scale = 1.0 / (1.0 - rate);
        for (double& v : mask) v = rng.uniform() < rate ? 0.0 : scale;
    };
    draw(m.input, cfg.dropout);
    draw(m.rec_fwd, cfg.recurrent_dropout);
    draw(m.rec_bwd, cfg.recurrent_dropout);
    return m;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams params(ParamLayout(cfg.input_dim, cfg.hidden, cfg.num_classes));
    Rng rng(seed);
    const std::size_t h = cfg.hidden;

    auto glorot = [&rng](MatView m) {
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c)
                m(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    };
    // per-gate H x H orthogonal blocks via twice-iterated Gram-Schmidt
    auto orthogonal_gates = [&rng, h](MatView u) {
        Matrix a(h, h);
        for (std::size_t gate = 0; gate < 4; ++gate) {
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < h; ++c) a(r, c) = rng.normal();
            for (std::size_t j = 0; j < h; ++j) {
                for (int pass = 0; pass < 2; ++pass) {
                    for (std::size_t k = 0; k < j; ++k) {
                        double proj = 0.0;
                        for (std::size_t r = 0; r < h; ++r) proj += a(r, k) * a(r, j);
                        for (std::size_t r = 0; r < h; ++r) a(r, j) -= proj * a(r, k);
                    }
                }
                double norm2 = 0.0;
                for (std::size_t r = 0; r < h; ++r) norm2 += a(r, j) * a(r, j);
                const double inv = 1.0 / std::sqrt(norm2);
                for (std::size_t r = 0; r < h; ++r) a(r, j) *= inv;
            }
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < h; ++c) u(gate * h + r, c) = a(r, c);
        }
    };

    for (std::size_t dir = 0; dir < 2; ++dir) {
        glorot(params.w_dir(dir));
        orthogonal_gates(params.u_dir(dir));
        auto bias = params.b_dir(dir);
        std::fill(bias.begin(), bias.end(), 0.0);
        for (std::size_t j = 0; j < h; ++j) bias[h + j] = 1.0;  // forget-gate slice
    }
    glorot(params.w_att());
    glorot(params.w_cla());
    return params;
}

void lstm_cell_forward(ConstMatView w, ConstMatView u, std::span<const double> bias,
                       std::span<const double> x_masked, std::span<const double> h_prev_masked,
                       std::span<const double> c_prev, std::span<double> gate_i,
                       std::span<double> gate_f, std::span<double> gate_g,
                       std::span<double> gate_o, std::span<double> c_out,
                       std::span<double> c_tanh_out, std::span<double> h_out) {
    Vec pre(bias.begin(), bias.end());
    gemv_add(w, x_masked, pre);
    gemv_add(u, h_prev_masked, pre);
    apply_gates(pre, c_prev, gate_i, gate_f, gate_g, gate_o, c_out, c_tanh_out, h_out);
}

Matrix bilstm_forward(const ModelParams& params, const FeatureSequence& features,
                      const DropoutMasks& masks) {
    const std::size_t t_count = features.timesteps;
    const std::size_t d = features.dim;
    const std::size_t h = params.layout.hidden;
    if (d != params.layout.input_dim)
        throw std::invalid_argument("bilstm_forward: feature dim does not match params");

    Matrix masked_x(t_count, d);
    for (std::size_t t = 0; t < t_count; ++t) {
        const auto src = features.row(t);
        auto dst = masked_x.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] * masks.input[j];
    }

    DirectionCache fwd, bwd;
    run_direction(params, 0, masked_x, masks.rec_fwd, fwd);
    run_direction(params, 1, masked_x, masks.rec_bwd, bwd);

    Matrix out(t_count, 2 * h);
    for (std::size_t t = 0; t < t_count; ++t) {
        auto row = out.row(t);
        const auto hf = fwd.hidden.row(t);
        const auto hb = bwd.hidden.row(t);
        std::copy(hf.begin(), hf.end(), row.begin());
        std::copy(hb.begin(), hb.end(), row.begin() + static_cast<std::ptrdiff_t>(h));
    }
    return out;
}

Predictions attention_forward(const ModelParams& params, const Matrix& hidden,
                              double attention_clip) {
    if (hidden.cols() != 2 * params.layout.hidden)
        throw std::invalid_argument("attention_forward: hidden width does not match params");
    ForwardCache cache;
    attention_into_cache(params, hidden, attention_clip, cache);
    Predictions pred;
    pred.clip_probs = cache.clip_probs;
    pred.per_step_probs = std::move(cache.step_probs);
    pred.attention = std::move(cache.att_weights);
    return pred;
}

Predictions model_forward(const ModelParams& params, const ModelConfig& cfg,
                          const FeatureSequence& features, Mode mode, Rng* rng,
                          ForwardCache* cache) {
    if (features.dim != cfg.input_dim || params.layout.input_dim != cfg.input_dim ||
        params.layout.hidden != cfg.hidden || params.layout.num_classes != cfg.num_classes)
        throw std::invalid_argument("model_forward: dimension mismatch");
    if (mode == Mode::train && rng == nullptr)
        throw std::invalid_argument("model_forward: train mode needs an rng");

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.timesteps = features.timesteps;
    fc.masks = mode == Mode::train ? DropoutMasks::sample(cfg, *rng) : DropoutMasks::identity(cfg);

    const std::size_t t_count = features.timesteps;
    const std::size_t d = features.dim;
    const std::size_t h = cfg.hidden;

    fc.masked_input = Matrix(t_count, d);
    for (std::size_t t = 0; t < t_count; ++t) {
        const auto src = features.row(t);
        auto dst = fc.masked_input.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] * fc.masks.input[j];
    }

    run_direction(params, 0, fc.masked_input, fc.masks.rec_fwd, fc.fwd);
    run_direction(params, 1, fc.masked_input, fc.masks.rec_bwd, fc.bwd);

    fc.hidden_cat = Matrix(t_count, 2 * h);
    for (std::size_t t = 0; t < t_count; ++t) {
        auto row = fc.hidden_cat.row(t);
        const auto hf = fc.fwd.hidden.row(t);
        const auto hb = fc.bwd.hidden.row(t);
        std::copy(hf.begin(), hf.end(), row.begin());
        std::copy(hb.begin(), hb.end(), row.begin() + static_cast<std::ptrdiff_t>(h));
    }

    attention_into_cache(params, fc.hidden_cat, cfg.attention_clip, fc);

    Predictions pred;
    pred.clip_probs = fc.clip_probs;
    pred.per_step_probs = fc.step_probs;
    pred.attention = fc.att_weights;
    return pred;
}

void model_backward(const ModelParams& params, const ModelConfig& cfg, const ForwardCache& cache,
                    const FeatureSequence& features, std::span<const double> dloss_dp,
                    ModelGrads& grads) {
    const std::size_t t_count = cache.timesteps;
    const std::size_t c_count = cfg.num_classes;
    if (dloss_dp.size() != c_count)
        throw std::invalid_argument("model_backward: upstream gradient size mismatch");
    if (cache.hidden_cat.rows() != t_count || features.timesteps != t_count)
        throw std::invalid_argument("model_backward: cache does not match batch");
    if (grads.layout != params.layout)
        throw std::invalid_argument("model_backward: gradient layout mismatch");

    const double kappa = cfg.attention_clip;

    // attention + prediction-head backward
    Matrix dhidden(t_count, 2 * cfg.hidden);
    Vec dz(c_count), ds(c_count);
    MatView gw_att = grads.w_att();
    MatView gw_cla = grads.w_cla();
    std::span<double> gb_att = grads.b_att();
    std::span<double> gb_cla = grads.b_cla();

    for (std::size_t t = 0; t < t_count; ++t) {
        for (std::size_t c = 0; c < c_count; ++c) {
            const double a = cache.att_weights(t, c);
            const double q = cache.step_probs(t, c);
            const double p = cache.clip_probs[c];
            // softmax-over-time backward; p_c doubles as sum_t a.q
            double g = a * dloss_dp[c] * (q - p);
            if (std::abs(cache.att_scores_raw(t, c)) >= kappa) g = 0.0;  // clipped: flat score
            dz[c] = g;
            const double dq = a * dloss_dp[c];
            ds[c] = dq * q * (1.0 - q);
        }
        auto dh_row = dhidden.row(t);
        gemv_t_add(params.w_att(), dz, dh_row);
        gemv_t_add(params.w_cla(), ds, dh_row);
        outer_add(gw_att, dz, cache.hidden_cat.row(t));
        outer_add(gw_cla, ds, cache.hidden_cat.row(t));
        axpy(1.0, dz, gb_att);
        axpy(1.0, ds, gb_cla);
    }

    backward_direction(params, 0, cache.fwd, cache.masked_input, cache.masks.rec_fwd, dhidden,
                       grads);
    backward_direction(params, 1, cache.bwd, cache.masked_input, cache.masks.rec_bwd, dhidden,
                       grads);
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write("PLAB", 4);
    checkpoint_u32(out, kCheckpointVersion);
    checkpoint_u32(out, static_cast<std::uint32_t>(params.layout.input_dim));
    checkpoint_u32(out, static_cast<std::uint32_t>(params.layout.hidden));
    checkpoint_u32(out, static_cast<std::uint32_t>(params.layout.num_classes));
    for (double v : params.values) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!out) throw std::runtime_error("short write on checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PLAB", 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path.string());
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t d = read_u32(in);
    const std::uint32_t h = read_u32(in);
    const std::uint32_t c = read_u32(in);
    if (!in || d == 0 || h == 0 || c == 0)
        throw std::runtime_error("bad checkpoint dims in " + path.string());

    ModelParams params(ParamLayout(d, h, c));
    for (double& v : params.values) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        v = std::bit_cast<double>(u);
        if (!std::isfinite(v)) throw std::runtime_error("non-finite parameter in checkpoint");
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    in.peek();
    if (!in.eof()) throw std::runtime_error("trailing bytes in checkpoint: " + path.string());
    return params;
}

}  // namespace plab
