#include "latformer/encoders.hpp"

#include "latformer/geometry.hpp"

#include <stdexcept>

namespace latformer::enc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::vector<std::size_t> uniform_offsets(std::size_t groups, std::size_t k) {
    std::vector<std::size_t> off(groups + 1);
    for (std::size_t g = 0; g <= groups; ++g) off[g] = g * k;
    return off;
}

} // namespace

PointGraph build_point_graph(const std::vector<double>& coords,
                             const HierarchyConfig& cfg) {
    PointGraph graph;
    graph.edge_knn = geom::knn_indices(coords, coords, cfg.k);
    std::vector<double> cur = coords;
    for (std::size_t l = 0; l < cfg.L; ++l) {
        require(l < cfg.n_q.size(), "point hierarchy: n_q shorter than L");
        const std::size_t m = cfg.n_q[l];
        require(m <= cur.size() / 3,
                "point hierarchy: n_q[" + std::to_string(l) + "]=" +
                    std::to_string(m) + " exceeds available points");
        PointGraph::Stage stage;
        stage.fps = geom::farthest_point_sample(cur, m, geom::canonical_fps_start(cur));
        stage.coords.reserve(m * 3);
        for (std::size_t idx : stage.fps)
            for (int c = 0; c < 3; ++c) stage.coords.push_back(cur[3 * idx + c]);
        stage.knn = geom::knn_indices(cur, stage.coords, cfg.k);
        graph.stages.push_back(std::move(stage));
        cur = graph.stages.back().coords;
    }
    return graph;
}

ad::Array edge_conv(const ad::Array& feats, const std::vector<std::size_t>& knn,
                    std::size_t k, std::size_t d_out, ad::ParamStore& params,
                    const std::string& prefix) {
    const std::size_t n = feats.rows(), f = feats.cols();
    require(knn.size() == n * k, "edge_conv: neighbor table size mismatch");
    std::vector<std::size_t> centers(n * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) centers[i * k + j] = i;

    ad::Array f_i = ad::gather_rows(feats, centers);
    ad::Array f_j = ad::gather_rows(feats, knn);
    ad::Array edge = ad::concat({f_i, ad::sub(f_j, f_i)}, 1);  // (n*k) x 2f

    ad::Array w = params.get(prefix + ".weight", {2 * f, d_out}, 2 * f);
    ad::Array b = params.get(prefix + ".bias", {d_out}, 2 * f);
    ad::Array h = ad::relu(ad::linear(edge, w, b));

    std::vector<std::size_t> rows(n * k);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return ad::group_max(h, std::move(rows), uniform_offsets(n, k));
}

ad::Array sgp_forward(const ad::Array& feats, const PointGraph::Stage& stage,
                      std::size_t k, ad::ParamStore& params,
                      const std::string& prefix) {
    const std::size_t m = stage.fps.size();
    const std::size_t d = feats.cols();
    require(stage.knn.size() == m * k, "sgp_forward: neighbor table size mismatch");
    ad::Array pooled = ad::group_max(feats, stage.knn, uniform_offsets(m, k));
    ad::Array w = params.get(prefix + ".embed.weight", {d, d}, d);
    ad::Array b = params.get(prefix + ".embed.bias", {d}, d);
    return ad::relu(ad::linear(pooled, w, b));
}

ad::Array patch_embed(const double* image, std::size_t resolution, std::size_t patch,
                      std::size_t d, ad::ParamStore& params,
                      const std::string& prefix) {
    require(patch >= 1 && resolution % patch == 0,
            "patch_embed: patch size must divide the resolution");
    const std::size_t g = resolution / patch;           // token grid side
    const std::size_t pp = patch * patch;
    std::vector<double> flat(g * g * pp);
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx) {
            double* dst = flat.data() + (gy * g + gx) * pp;
            for (std::size_t py = 0; py < patch; ++py)
                for (std::size_t px = 0; px < patch; ++px)
                    dst[py * patch + px] =
                        image[(gy * patch + py) * resolution + (gx * patch + px)];
        }
    ad::Array patches = ad::Array::from({g * g, pp}, std::move(flat));
    ad::Array w = params.get(prefix + ".weight", {pp, d}, pp);
    ad::Array b = params.get(prefix + ".bias", {d}, pp);
    return ad::relu(ad::linear(patches, w, b));
}

ad::Array view_scale_reduce(const ad::Array& tokens, std::size_t h, std::size_t w,
                            ad::ParamStore& params, const std::string& prefix) {
    require(tokens.rows() == h * w, "view_scale_reduce: grid does not match tokens");
    require(h >= 2 && w >= 2, "view_scale_reduce: degenerate grid " +
                                  std::to_string(h) + "x" + std::to_string(w));
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    std::vector<std::size_t> rows;
    std::vector<std::size_t> offsets{0};
    rows.reserve(h * w);
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                    const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
                    if (y < h && x < w) rows.push_back(y * w + x);
                }
            offsets.push_back(rows.size());
        }
    ad::Array pooled = ad::group_max(tokens, std::move(rows), std::move(offsets));
    const std::size_t d = tokens.cols();
    ad::Array wm = params.get(prefix + ".weight", {d, d}, d);
    ad::Array bm = params.get(prefix + ".bias", {d}, d);
    return ad::relu(ad::linear(pooled, wm, bm));
}

ad::Array view_pool(const std::vector<ad::Array>& per_view) {
    require(!per_view.empty(), "view_pool: no views");
    return ad::max_list(per_view);
}

ViewHierarchy build_view_hierarchy(const synth::DepthViewSet& views,
                                   const HierarchyConfig& cfg,
                                   ad::ParamStore& params) {
    require(views.n_views >= 1, "view hierarchy: no views");
    ViewHierarchy out;

    // Per view: patch embedding then L reductions with shared weights.
    std::vector<std::vector<ad::Array>> per_scale(cfg.L);
    for (std::size_t j = 0; j < views.n_views; ++j) {
        ad::Array tokens = patch_embed(views.view(j), views.resolution, cfg.patch,
                                       cfg.D, params, "enc.view.patch");
        std::size_t h = views.resolution / cfg.patch;
        std::size_t w = h;
        for (std::size_t l = 0; l < cfg.L; ++l) {
            tokens = view_scale_reduce(tokens, h, w, params,
                                       "enc.view.reduce" + std::to_string(l));
            h = (h + 1) / 2;
            w = (w + 1) / 2;
            per_scale[l].push_back(tokens);
            if (j == 0) out.grid.emplace_back(h, w);
        }
    }
    out.scales.reserve(cfg.L);
    for (std::size_t l = 0; l < cfg.L; ++l) out.scales.push_back(view_pool(per_scale[l]));
    out.g_v = ad::reshape(ad::reduce(out.scales[0], 0, ad::Reduce::max), {1, cfg.D});
    return out;
}

PointHierarchy build_point_hierarchy(const synth::PointCloud& pc,
                                     const HierarchyConfig& cfg,
                                     ad::ParamStore& params,
                                     const PointGraph& graph) {
    require(graph.stages.size() == cfg.L, "point hierarchy: graph/config mismatch");
    PointHierarchy out;
    ad::Array coords = ad::Array::from({pc.size(), 3}, pc.coords);
    ad::Array base = edge_conv(coords, graph.edge_knn, cfg.k, cfg.D, params,
                               "enc.point.edgeconv");
    out.g_p = ad::reshape(ad::concat({ad::reduce(base, 0, ad::Reduce::max),
                                      ad::reduce(base, 0, ad::Reduce::mean)},
                                     0),
                          {1, 2 * cfg.D});
    ad::Array feats = base;
    for (std::size_t l = 0; l < cfg.L; ++l) {
        feats = sgp_forward(feats, graph.stages[l], cfg.k, params,
                            "enc.point.sgp" + std::to_string(l));
        out.scales.push_back(feats);
    }
    return out;
}

} // namespace latformer::enc
