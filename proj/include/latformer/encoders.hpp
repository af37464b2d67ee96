#pragma once

#include "latformer/ops.hpp"
#include "latformer/params.hpp"
#include "latformer/synthdata.hpp"

#include <string>
#include <utility>
#include <vector>

// Multi-scale local-feature extraction for both modalities: patch embedding +
// pooled reductions + view-pooling on the view side, EdgeConv + stacked
// sample-and-group pooling on the point side.

namespace latformer::enc {

struct HierarchyConfig {
    std::size_t L = 3;
    std::size_t D = 64;
    std::size_t patch = 2;
    std::vector<std::size_t> n_q = {64, 32, 16};
    std::size_t k = 20;
    std::size_t n_views = 6;
};

// Per-sample selection structure; depends only on the coordinates, so it can
// be computed once and reused across forwards.
struct PointGraph {
    std::vector<std::size_t> edge_knn;  // N_p * k neighbor rows
    struct Stage {
        std::vector<std::size_t> fps;      // m center indices into the stage input
        std::vector<std::size_t> knn;      // m * k neighbor rows into the stage input
        std::vector<double> coords;        // m x 3 center coordinates
    };
    std::vector<Stage> stages;
};

PointGraph build_point_graph(const std::vector<double>& coords,
                             const HierarchyConfig& cfg);

struct ViewHierarchy {
    ad::Array g_v;                                     // {1, D}
    std::vector<ad::Array> scales;                     // scale l: {h_l*w_l, D}
    std::vector<std::pair<std::size_t, std::size_t>> grid;  // (h_l, w_l)
};

struct PointHierarchy {
    ad::Array g_p;                     // {1, 2D} (max pool | mean pool)
    std::vector<ad::Array> scales;     // scale l: {n_q[l], D}
};

// One shared-weight EdgeConv layer: max over neighbors of
// relu(linear([f_i | f_j - f_i])).
ad::Array edge_conv(const ad::Array& feats, const std::vector<std::size_t>& knn,
                    std::size_t k, std::size_t d_out, ad::ParamStore& params,
                    const std::string& prefix);

// Neighbor max pooling onto FPS centers, then a linear+relu embedding.
ad::Array sgp_forward(const ad::Array& feats, const PointGraph::Stage& stage,
                      std::size_t k, ad::ParamStore& params,
                      const std::string& prefix);

// Non-overlapping patch flatten -> linear + relu; returns (R/patch)^2 tokens.
ad::Array patch_embed(const double* image, std::size_t resolution, std::size_t patch,
                      std::size_t d, ad::ParamStore& params,
                      const std::string& prefix);

// 2x2 stride-2 spatial max pool (ceil) followed by linear + relu.
ad::Array view_scale_reduce(const ad::Array& tokens, std::size_t h, std::size_t w,
                            ad::ParamStore& params, const std::string& prefix);

ad::Array view_pool(const std::vector<ad::Array>& per_view);

ViewHierarchy build_view_hierarchy(const synth::DepthViewSet& views,
                                   const HierarchyConfig& cfg,
                                   ad::ParamStore& params);

PointHierarchy build_point_hierarchy(const synth::PointCloud& pc,
                                     const HierarchyConfig& cfg,
                                     ad::ParamStore& params,
                                     const PointGraph& graph);

} // namespace latformer::enc
