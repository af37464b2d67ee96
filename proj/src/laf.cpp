#include "latformer/laf.hpp"

#include <stdexcept>

namespace latformer::laf {

LafOutput laf_forward(const ad::Array& x, const ad::Array& y, const LafConfig& cfg,
                      ad::ParamStore& params, const std::string& prefix) {
    ad::check(cfg.heads >= 1 && cfg.d % cfg.heads == 0,
              "laf: width " + std::to_string(cfg.d) +
                  " must be a multiple of the head count " +
                  std::to_string(cfg.heads));
    ad::check(x.rank() == 2 && y.rank() == 2 && x.cols() == cfg.d && y.cols() == cfg.d,
              "laf: token width mismatch, x " + ad::shape_str(x.shape()) + ", y " +
                  ad::shape_str(y.shape()) + ", d=" + std::to_string(cfg.d));
    ad::check(cfg.beta >= 0.0 && cfg.beta < 1.0, "laf: beta must be in [0,1)");
    ad::check(cfg.eps > 0.0, "laf: eps must be positive");

    const std::size_t d = cfg.d, dh = cfg.d / cfg.heads;
    const auto proj = [&](const char* name, const ad::Array& in) {
        ad::Array w = params.get(prefix + "." + name + ".weight", {d, d}, d);
        ad::Array b = params.get(prefix + "." + name + ".bias", {d}, d);
        return ad::linear(in, w, b);
    };
    ad::Array q = proj("q_proj", x);
    ad::Array k = proj("k_proj", y);
    ad::Array v = proj("v_proj", y);

    LafOutput out;
    std::vector<ad::Array> head_outputs;
    head_outputs.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        ad::Array qh = ad::slice_cols(q, h * dh, dh);
        ad::Array kh = ad::slice_cols(k, h * dh, dh);
        ad::Array vh = ad::slice_cols(v, h * dh, dh);
        // Raw dot-product co-occurrence scores, no 1/sqrt(d) scaling.
        ad::Array omega = ad::matmul_nt(qh, kh);

        ad::Array alpha;
        HeadGate gate;
        gate.n_x = x.rows();
        gate.n_y = y.rows();
        if (cfg.attention == Attention::thresholded_sigmoid) {
            ad::GateResult gr = ad::threshold_gate(omega, cfg.beta);
            alpha = gr.alpha;
            gate.mask = std::move(gr.mask);
        } else {
            alpha = ad::row_softmax(omega);
            gate.mask.assign(alpha.size(), 1);
        }
        gate.alpha = alpha.value();
        out.gates.push_back(std::move(gate));

        head_outputs.push_back(ad::weighted_average_rows(alpha, vh, cfg.eps));
    }

    ad::Array g = ad::concat(head_outputs, 1);  // N_X x d
    ad::Array wo = params.get(prefix + ".out_proj.weight", {d, d}, d);
    ad::Array bo = params.get(prefix + ".out_proj.bias", {d}, d);
    ad::Array g_out = ad::add(ad::linear(g, wo, bo), q);  // residual: + [Q_1..Q_H]

    ad::Array w1 = params.get(prefix + ".fc1.weight", {d, d}, d);
    ad::Array b1 = params.get(prefix + ".fc1.bias", {d}, d);
    ad::Array w2 = params.get(prefix + ".fc2.weight", {d, d}, d);
    ad::Array b2 = params.get(prefix + ".fc2.bias", {d}, d);
    ad::Array t = ad::relu(ad::linear(g_out, w1, b1));
    t = ad::relu(ad::linear(t, w2, b2));

    if (cfg.pool == Pool::max) {
        out.pooled = ad::reshape(ad::reduce(t, 0, ad::Reduce::max), {1, d});
    } else {
        out.pooled = ad::reshape(ad::concat({ad::reduce(t, 0, ad::Reduce::max),
                                             ad::reduce(t, 0, ad::Reduce::mean)},
                                            0),
                                 {1, 2 * d});
    }
    return out;
}

} // namespace latformer::laf
