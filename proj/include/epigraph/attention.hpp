// Multi-head self-attention over each anchor's neighbor tokens. The angular
// encoding enters as a learned per-head additive bias on the pre-softmax
// logits of the key token; outputs are mean-pooled over the token axis.
// Backward is analytic and checked against finite differences in the tests.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "epigraph/detail/random.hpp"
#include "epigraph/error.hpp"
#include "epigraph/graph.hpp"

namespace epigraph {

struct AttentionConfig {
    int heads = 2;
    int model_dim = 16;    // D, divisible by heads
    int input_dim = 16;    // 2F
    int encoding_dim = 8;  // 2L
    std::uint64_t seed = 42;

    int head_dim() const { return model_dim / heads; }

    void validate() const {
        if (heads < 1 || model_dim < 1 || input_dim < 1 || encoding_dim < 1) {
            throw Error(ErrorCode::invalid_config, "attention dimensions must all be >= 1");
        }
        if (model_dim % heads != 0) {
            throw Error(ErrorCode::invalid_config,
                        "model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                            std::to_string(heads));
        }
    }
};

struct AttentionParams {
    Eigen::MatrixXd w_in;                 // input_dim x D
    std::vector<Eigen::MatrixXd> w_q;     // per head, Dh x Dh
    std::vector<Eigen::MatrixXd> w_k;
    std::vector<Eigen::MatrixXd> w_v;
    Eigen::MatrixXd w_o;                  // D x D
    std::vector<Eigen::VectorXd> w_theta; // per head, encoding_dim
    Eigen::VectorXd b_theta;              // per head

    int heads() const { return static_cast<int>(w_q.size()); }
    int model_dim() const { return static_cast<int>(w_o.rows()); }
    int input_dim() const { return static_cast<int>(w_in.rows()); }
    int encoding_dim() const { return w_theta.empty() ? 0 : static_cast<int>(w_theta[0].size()); }
};

struct RefinedFeatures {
    Eigen::MatrixXd values;  // M x D
};

namespace detail {

inline void fill_xavier_uniform(Eigen::MatrixXd& w, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            w(r, c) = uniform_symmetric(rng, bound);
        }
    }
}

// Draw order is part of the determinism contract: w_in, then q/k/v per head,
// then w_o. The angular-bias weights start at zero so the initial forward
// pass equals unbiased attention.
}  // namespace detail

inline AttentionParams init_params(const AttentionConfig& config) {
    config.validate();
    const int dh = config.head_dim();

    std::mt19937_64 rng(config.seed);
    AttentionParams params;
    params.w_in.resize(config.input_dim, config.model_dim);
    detail::fill_xavier_uniform(params.w_in, rng);

    params.w_q.resize(config.heads);
    params.w_k.resize(config.heads);
    params.w_v.resize(config.heads);
    params.w_theta.resize(config.heads);
    for (int h = 0; h < config.heads; ++h) {
        params.w_q[h].resize(dh, dh);
        params.w_k[h].resize(dh, dh);
        params.w_v[h].resize(dh, dh);
        detail::fill_xavier_uniform(params.w_q[h], rng);
        detail::fill_xavier_uniform(params.w_k[h], rng);
        detail::fill_xavier_uniform(params.w_v[h], rng);
        params.w_theta[h] = Eigen::VectorXd::Zero(config.encoding_dim);
    }

    params.w_o.resize(config.model_dim, config.model_dim);
    detail::fill_xavier_uniform(params.w_o, rng);
    params.b_theta = Eigen::VectorXd::Zero(config.heads);
    return params;
}

namespace detail {

inline void require_attention_shapes(const AggregatedFeatures& agg, const EncodedAngles& enc,
                                     const AttentionParams& params) {
    if (agg.m != enc.m || agg.k != enc.k) {
        throw Error(ErrorCode::contract_violation,
                    "feature tensor " + std::to_string(agg.m) + "x" + std::to_string(agg.k) +
                        " does not match encoding tensor " + std::to_string(enc.m) + "x" +
                        std::to_string(enc.k));
    }
    if (agg.token_dim() != params.input_dim()) {
        throw Error(ErrorCode::contract_violation,
                    "token width " + std::to_string(agg.token_dim()) + " != input projection rows " +
                        std::to_string(params.input_dim()));
    }
    if (enc.encoding_dim() != params.encoding_dim()) {
        throw Error(ErrorCode::contract_violation,
                    "encoding width " + std::to_string(enc.encoding_dim()) +
                        " != angular-bias weight size " + std::to_string(params.encoding_dim()));
    }
    if (params.model_dim() % params.heads() != 0) {
        throw Error(ErrorCode::contract_violation, "model_dim not divisible by head count");
    }
}

inline void require_finite_inputs(const AggregatedFeatures& agg, const EncodedAngles& enc) {
    for (int i = 0; i < agg.m; ++i) {
        for (int j = 0; j < agg.k; ++j) {
            for (int c = 0; c < agg.token_dim(); ++c) {
                if (!std::isfinite(agg.at(i, j, c))) {
                    throw Error(ErrorCode::nonfinite_input,
                                "non-finite feature at agg[" + std::to_string(i) + "][" +
                                    std::to_string(j) + "][" + std::to_string(c) + "]");
                }
            }
        }
    }
    for (int i = 0; i < enc.m; ++i) {
        for (int j = 0; j < enc.k; ++j) {
            for (int c = 0; c < enc.encoding_dim(); ++c) {
                if (!std::isfinite(enc.at(i, j, c))) {
                    throw Error(ErrorCode::nonfinite_input,
                                "non-finite encoding at enc[" + std::to_string(i) + "][" +
                                    std::to_string(j) + "][" + std::to_string(c) + "]");
                }
            }
        }
    }
}

inline Eigen::MatrixXd token_matrix(const AggregatedFeatures& agg, int i) {
    Eigen::MatrixXd tokens(agg.k, agg.token_dim());
    for (int j = 0; j < agg.k; ++j) {
        for (int c = 0; c < agg.token_dim(); ++c) tokens(j, c) = agg.at(i, j, c);
    }
    return tokens;
}

inline Eigen::MatrixXd encoding_matrix(const EncodedAngles& enc, int i) {
    Eigen::MatrixXd gamma(enc.k, enc.encoding_dim());
    for (int j = 0; j < enc.k; ++j) {
        for (int c = 0; c < enc.encoding_dim(); ++c) gamma(j, c) = enc.at(i, j, c);
    }
    return gamma;
}

inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd weights(scores.rows(), scores.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double peak = scores.row(r).maxCoeff();
        Eigen::ArrayXd e = (scores.row(r).array() - peak).exp();
        weights.row(r) = (e / e.sum()).matrix();
    }
    return weights;
}

}  // namespace detail

inline RefinedFeatures attention_forward(const AggregatedFeatures& agg, const EncodedAngles& enc,
                                         const AttentionParams& params) {
    detail::require_attention_shapes(agg, enc, params);
    detail::require_finite_inputs(agg, enc);

    const int d = params.model_dim();
    const int heads = params.heads();
    const int dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    RefinedFeatures out;
    out.values.resize(agg.m, d);

    for (int i = 0; i < agg.m; ++i) {
        const Eigen::MatrixXd tokens = detail::token_matrix(agg, i);      // k x 2F
        const Eigen::MatrixXd gamma = detail::encoding_matrix(enc, i);    // k x 2L
        const Eigen::MatrixXd x = tokens * params.w_in;                   // k x D

        Eigen::MatrixXd heads_out(agg.k, d);
        for (int h = 0; h < heads; ++h) {
            const Eigen::MatrixXd xh = x.middleCols(h * dh, dh);
            const Eigen::MatrixXd q = xh * params.w_q[h];
            const Eigen::MatrixXd k = xh * params.w_k[h];
            const Eigen::MatrixXd v = xh * params.w_v[h];

            // Bias depends on the key token only: scores(j, j') picks up the
            // angular term of neighbor j'.
            const Eigen::VectorXd bias = gamma * params.w_theta[h] +
                                         Eigen::VectorXd::Constant(agg.k, params.b_theta(h));
            Eigen::MatrixXd scores = q * k.transpose() * inv_sqrt_dh;
            scores.rowwise() += bias.transpose();

            const Eigen::MatrixXd weights = detail::row_softmax(scores);
            heads_out.middleCols(h * dh, dh) = weights * v;
        }

        const Eigen::MatrixXd y = heads_out * params.w_o;  // k x D
        out.values.row(i) = y.colwise().mean();
    }
    return out;
}

struct AttentionGradients {
    Eigen::MatrixXd w_in;
    std::vector<Eigen::MatrixXd> w_q;
    std::vector<Eigen::MatrixXd> w_k;
    std::vector<Eigen::MatrixXd> w_v;
    Eigen::MatrixXd w_o;
    std::vector<Eigen::VectorXd> w_theta;
    Eigen::VectorXd b_theta;
    AggregatedFeatures agg;  // gradient w.r.t. the input feature tensor
};

// Gradients of sum(upstream .* f_g) with respect to every parameter tensor
// and the input features.
inline AttentionGradients attention_backward(const AggregatedFeatures& agg, const EncodedAngles& enc,
                                             const AttentionParams& params,
                                             const Eigen::MatrixXd& upstream) {
    detail::require_attention_shapes(agg, enc, params);
    detail::require_finite_inputs(agg, enc);
    if (upstream.rows() != agg.m || upstream.cols() != params.model_dim()) {
        throw Error(ErrorCode::contract_violation,
                    "upstream gradient must be " + std::to_string(agg.m) + "x" +
                        std::to_string(params.model_dim()));
    }

    const int d = params.model_dim();
    const int heads = params.heads();
    const int dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionGradients grads;
    grads.w_in = Eigen::MatrixXd::Zero(params.w_in.rows(), params.w_in.cols());
    grads.w_o = Eigen::MatrixXd::Zero(d, d);
    grads.b_theta = Eigen::VectorXd::Zero(heads);
    grads.w_q.assign(heads, Eigen::MatrixXd::Zero(dh, dh));
    grads.w_k.assign(heads, Eigen::MatrixXd::Zero(dh, dh));
    grads.w_v.assign(heads, Eigen::MatrixXd::Zero(dh, dh));
    grads.w_theta.assign(heads, Eigen::VectorXd::Zero(params.encoding_dim()));
    grads.agg.m = agg.m;
    grads.agg.k = agg.k;
    grads.agg.feature_dim = agg.feature_dim;
    grads.agg.values.assign(agg.values.size(), 0.0);

    for (int i = 0; i < agg.m; ++i) {
        const Eigen::MatrixXd tokens = detail::token_matrix(agg, i);
        const Eigen::MatrixXd gamma = detail::encoding_matrix(enc, i);
        const Eigen::MatrixXd x = tokens * params.w_in;

        // Recompute the forward intermediates for this anchor.
        Eigen::MatrixXd heads_out(agg.k, d);
        std::vector<Eigen::MatrixXd> q_h(heads), k_h(heads), v_h(heads), a_h(heads);
        for (int h = 0; h < heads; ++h) {
            const Eigen::MatrixXd xh = x.middleCols(h * dh, dh);
            q_h[h] = xh * params.w_q[h];
            k_h[h] = xh * params.w_k[h];
            v_h[h] = xh * params.w_v[h];
            const Eigen::VectorXd bias = gamma * params.w_theta[h] +
                                         Eigen::VectorXd::Constant(agg.k, params.b_theta(h));
            Eigen::MatrixXd scores = q_h[h] * k_h[h].transpose() * inv_sqrt_dh;
            scores.rowwise() += bias.transpose();
            a_h[h] = detail::row_softmax(scores);
            heads_out.middleCols(h * dh, dh) = a_h[h] * v_h[h];
        }

        // Mean pool: every token row receives upstream / k.
        const Eigen::MatrixXd dy =
            (upstream.row(i) / static_cast<double>(agg.k)).replicate(agg.k, 1);

        grads.w_o.noalias() += heads_out.transpose() * dy;
        const Eigen::MatrixXd d_heads_out = dy * params.w_o.transpose();

        Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(agg.k, d);
        for (int h = 0; h < heads; ++h) {
            const Eigen::MatrixXd xh = x.middleCols(h * dh, dh);
            const Eigen::MatrixXd d_oh = d_heads_out.middleCols(h * dh, dh);

            const Eigen::MatrixXd d_a = d_oh * v_h[h].transpose();        // k x k
            const Eigen::MatrixXd d_v = a_h[h].transpose() * d_oh;        // k x Dh

            // Softmax backward per row: dS = A .* (dA - rowdot(dA, A)).
            Eigen::MatrixXd d_s(agg.k, agg.k);
            for (int r = 0; r < agg.k; ++r) {
                const double pulled = d_a.row(r).dot(a_h[h].row(r));
                d_s.row(r) = a_h[h].row(r).cwiseProduct(d_a.row(r) -
                                                        Eigen::RowVectorXd::Constant(agg.k, pulled));
            }

            const Eigen::MatrixXd d_q = d_s * k_h[h] * inv_sqrt_dh;
            const Eigen::MatrixXd d_k = d_s.transpose() * q_h[h] * inv_sqrt_dh;

            // Column sums of dS hit the per-key bias terms.
            const Eigen::VectorXd d_bias = d_s.colwise().sum().transpose();
            grads.w_theta[h].noalias() += gamma.transpose() * d_bias;
            grads.b_theta(h) += d_bias.sum();

            grads.w_q[h].noalias() += xh.transpose() * d_q;
            grads.w_k[h].noalias() += xh.transpose() * d_k;
            grads.w_v[h].noalias() += xh.transpose() * d_v;
            dx.middleCols(h * dh, dh) += d_q * params.w_q[h].transpose() +
                                         d_k * params.w_k[h].transpose() +
                                         d_v * params.w_v[h].transpose();
        }

        grads.w_in.noalias() += tokens.transpose() * dx;
        const Eigen::MatrixXd d_tokens = dx * params.w_in.transpose();
        for (int j = 0; j < agg.k; ++j) {
            for (int c = 0; c < agg.token_dim(); ++c) {
                grads.agg.at(i, j, c) = d_tokens(j, c);
            }
        }
    }
    return grads;
}

// Central-difference check of the analytic gradients on the given instance;
// returns the maximum relative error over all parameter tensors and the input
// features. Used by the CLI's --check-grads reporting.
inline double gradient_check_max_rel_error(const AggregatedFeatures& agg, const EncodedAngles& enc,
                                           const AttentionParams& params,
                                           const Eigen::MatrixXd& upstream, double step = 1e-5) {
    const auto loss = [&](const AttentionParams& p) {
        const RefinedFeatures f = attention_forward(agg, enc, p);
        return (upstream.array() * f.values.array()).sum();
    };
    const AttentionGradients analytic = attention_backward(agg, enc, params, upstream);

    double worst = 0.0;
    const auto update_worst = [&worst, step](double a, double plus, double minus) {
        const double fd = (plus - minus) / (2.0 * step);
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(a - fd) / denom);
    };

    AttentionParams p = params;
    const auto sweep_matrix = [&](Eigen::MatrixXd& w, const Eigen::MatrixXd& dw) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                const double saved = w(r, c);
                w(r, c) = saved + step;
                const double plus = loss(p);
                w(r, c) = saved - step;
                const double minus = loss(p);
                w(r, c) = saved;
                update_worst(dw(r, c), plus, minus);
            }
        }
    };

    sweep_matrix(p.w_in, analytic.w_in);
    sweep_matrix(p.w_o, analytic.w_o);
    for (int h = 0; h < params.heads(); ++h) {
        sweep_matrix(p.w_q[h], analytic.w_q[h]);
        sweep_matrix(p.w_k[h], analytic.w_k[h]);
        sweep_matrix(p.w_v[h], analytic.w_v[h]);
        for (Eigen::Index c = 0; c < p.w_theta[h].size(); ++c) {
            const double saved = p.w_theta[h](c);
            p.w_theta[h](c) = saved + step;
            const double plus = loss(p);
            p.w_theta[h](c) = saved - step;
            const double minus = loss(p);
            p.w_theta[h](c) = saved;
            update_worst(analytic.w_theta[h](c), plus, minus);
        }
        const double saved = p.b_theta(h);
        p.b_theta(h) = saved + step;
        const double plus = loss(p);
        p.b_theta(h) = saved - step;
        const double minus = loss(p);
        p.b_theta(h) = saved;
        update_worst(analytic.b_theta(h), plus, minus);
    }

    AggregatedFeatures shifted = agg;
    for (std::size_t idx = 0; idx < shifted.values.size(); ++idx) {
        const double saved = shifted.values[idx];
        shifted.values[idx] = saved + step;
        const double plus = [&] {
            const RefinedFeatures f = attention_forward(shifted, enc, params);
            return (upstream.array() * f.values.array()).sum();
        }();
        shifted.values[idx] = saved - step;
        const double minus = [&] {
            const RefinedFeatures f = attention_forward(shifted, enc, params);
            return (upstream.array() * f.values.array()).sum();
        }();
        shifted.values[idx] = saved;
        update_worst(analytic.agg.values[idx], plus, minus);
    }
    return worst;
}

}  // namespace epigraph
