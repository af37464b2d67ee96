#pragma once

#include "latformer/ops.hpp"
#include "latformer/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Locality-Aware Fusion: multi-head cross-attention from query modality X
// into key/value modality Y. Per head, raw dot-product co-occurrence scores
// are squashed by a sigmoid and cut at a threshold beta; retained scores drive
// an eps-regularized weighted average of the values. A residual link adds the
// head-concatenated query, and two fc+relu layers feed the pooling stage.

namespace latformer::laf {

enum class Attention { thresholded_sigmoid, softmax };
enum class Pool { max, max_concat_mean };

struct LafConfig {
    std::size_t d = 64;        // model width; per-head width is d/heads
    std::size_t heads = 4;
    double beta = 0.3;         // gate threshold in [0,1)
    double eps = 1e-5;
    Attention attention = Attention::thresholded_sigmoid;
    Pool pool = Pool::max;
};

struct HeadGate {
    std::size_t n_x = 0, n_y = 0;
    std::vector<double> alpha;        // n_x * n_y scores, 0 or in (beta, 1)
    std::vector<std::uint8_t> mask;   // 1 where retained (all 1 in softmax mode)
};

struct LafOutput {
    ad::Array pooled;                 // {1, d} for max, {1, 2d} for max|mean
    std::vector<HeadGate> gates;      // one per head
};

// x: N_X x d query tokens, y: N_Y x d key/value tokens. Weights live under
// `prefix` (q_proj, k_proj, v_proj, out_proj, fc1, fc2).
LafOutput laf_forward(const ad::Array& x, const ad::Array& y, const LafConfig& cfg,
                      ad::ParamStore& params, const std::string& prefix);

} // namespace latformer::laf
