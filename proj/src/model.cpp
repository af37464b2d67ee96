#include "latformer/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace latformer::net {

const char* strategy_name(Strategy s) {
    switch (s) {
    case Strategy::latformer: return "latformer";
    case Strategy::late_fusion: return "late_fusion";
    case Strategy::deep_concat: return "deep_concat";
    case Strategy::point_view_only: return "point_view_only";
    case Strategy::view_point_only: return "view_point_only";
    case Strategy::latformer_softmax: return "latformer_softmax";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    for (Strategy s : all_strategies())
        if (name == strategy_name(s)) return s;
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> v{
        Strategy::latformer,       Strategy::late_fusion,
        Strategy::deep_concat,     Strategy::point_view_only,
        Strategy::view_point_only, Strategy::latformer_softmax,
    };
    return v;
}

std::size_t ModelConfig::head_parts() const {
    switch (strategy) {
    case Strategy::late_fusion: return 2;
    case Strategy::point_view_only:
    case Strategy::view_point_only: return 3;
    default: return 4;
    }
}

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), params_(init_seed) {
    ad::check(!cfg_.scale_pairs.empty() || cfg_.strategy == Strategy::late_fusion,
              "model: scale_pairs must be nonempty for this strategy");
    for (auto [m, k] : cfg_.scale_pairs)
        ad::check(m >= 1 && m <= cfg_.hier.L && k >= 1 && k <= cfg_.hier.L,
                  "model: scale pair (" + std::to_string(m) + "," +
                      std::to_string(k) + ") outside [1," +
                      std::to_string(cfg_.hier.L) + "]");
    ad::check(cfg_.hier.D % cfg_.heads == 0, "model: D must be divisible by H");
    materialize_params();
}

laf::Attention Model::effective_attention() const {
    return cfg_.strategy == Strategy::latformer_softmax ? laf::Attention::softmax
                                                        : cfg_.attention;
}

enc::PointGraph Model::make_graph(const synth::PointCloud& pc) const {
    return enc::build_point_graph(pc.coords, cfg_.hier);
}

void Model::materialize_params() {
    const std::size_t d = cfg_.hier.D;
    const std::size_t pp = cfg_.hier.patch * cfg_.hier.patch;
    params_.get("enc.view.patch.weight", {pp, d}, pp);
    params_.get("enc.view.patch.bias", {d}, pp);
    for (std::size_t l = 0; l < cfg_.hier.L; ++l) {
        const std::string r = "enc.view.reduce" + std::to_string(l);
        params_.get(r + ".weight", {d, d}, d);
        params_.get(r + ".bias", {d}, d);
        const std::string s = "enc.point.sgp" + std::to_string(l);
        params_.get(s + ".embed.weight", {d, d}, d);
        params_.get(s + ".embed.bias", {d}, d);
    }
    params_.get("enc.point.edgeconv.weight", {6, d}, 6);
    params_.get("enc.point.edgeconv.bias", {d}, 6);

    // LAF weights exist for every pair regardless of strategy; strategies that
    // skip fusion simply never touch them.
    for (std::size_t i = 0; i < cfg_.scale_pairs.size(); ++i)
        for (const char* dir : {"pv", "vp"}) {
            const std::string p = "laf.l" + std::to_string(i) + "." + dir;
            for (const char* name : {"q_proj", "k_proj", "v_proj", "out_proj", "fc1", "fc2"}) {
                params_.get(p + "." + name + ".weight", {d, d}, d);
                params_.get(p + "." + name + ".bias", {d}, d);
            }
        }

    const std::size_t pairs = cfg_.scale_pairs.size();
    const auto head_proj = [&](const char* name, std::size_t in) {
        params_.get(std::string("head.") + name + ".weight", {in, cfg_.proj_width}, in);
        params_.get(std::string("head.") + name + ".bias", {cfg_.proj_width}, in);
    };
    head_proj("gv_proj", d);
    head_proj("gp_proj", 2 * d);
    switch (cfg_.strategy) {
    case Strategy::late_fusion: break;
    case Strategy::point_view_only: head_proj("gvp_proj", 2 * d * pairs); break;
    case Strategy::view_point_only: head_proj("gpv_proj", d * pairs); break;
    default:
        head_proj("gvp_proj", 2 * d * pairs);
        head_proj("gpv_proj", d * pairs);
        break;
    }
    const std::size_t gw = cfg_.g_final_width();
    params_.get("head.cls1.weight", {gw, cfg_.hidden}, gw);
    params_.get("head.cls1.bias", {cfg_.hidden}, gw);
    params_.get("head.cls2.weight", {cfg_.hidden, cfg_.penultimate}, cfg_.hidden);
    params_.get("head.cls2.bias", {cfg_.penultimate}, cfg_.hidden);
    params_.get("head.cls3.weight", {cfg_.penultimate, cfg_.classes}, cfg_.penultimate);
    params_.get("head.cls3.bias", {cfg_.classes}, cfg_.penultimate);
}

ForwardResult Model::forward(const synth::Sample& sample,
                             const enc::PointGraph& graph,
                             std::vector<GateExport>* gates) {
    const std::size_t d = cfg_.hier.D;
    enc::ViewHierarchy vh = enc::build_view_hierarchy(sample.views, cfg_.hier, params_);
    enc::PointHierarchy ph =
        enc::build_point_hierarchy(sample.cloud, cfg_.hier, params_, graph);

    const bool wants_pv = cfg_.strategy == Strategy::latformer ||
                          cfg_.strategy == Strategy::latformer_softmax ||
                          cfg_.strategy == Strategy::point_view_only;
    const bool wants_vp = cfg_.strategy == Strategy::latformer ||
                          cfg_.strategy == Strategy::latformer_softmax ||
                          cfg_.strategy == Strategy::view_point_only;

    std::vector<ad::Array> g_vp_parts, g_pv_parts;
    laf::LafConfig laf_cfg;
    laf_cfg.d = d;
    laf_cfg.heads = cfg_.heads;
    laf_cfg.beta = cfg_.beta;
    laf_cfg.eps = cfg_.eps;
    laf_cfg.attention = effective_attention();

    for (std::size_t i = 0; i < cfg_.scale_pairs.size(); ++i) {
        const auto [vm, pk] = cfg_.scale_pairs[i];
        const ad::Array& vtok = vh.scales[vm - 1];
        const ad::Array& ptok = ph.scales[pk - 1];
        if (cfg_.strategy == Strategy::deep_concat) {
            // Pooled per-pair tokens, same pool modes, no attention.
            g_vp_parts.push_back(ad::reshape(
                ad::concat({ad::reduce(ptok, 0, ad::Reduce::max),
                            ad::reduce(ptok, 0, ad::Reduce::mean)},
                           0),
                {1, 2 * d}));
            g_pv_parts.push_back(
                ad::reshape(ad::reduce(vtok, 0, ad::Reduce::max), {1, d}));
            continue;
        }
        if (wants_pv) {
            laf_cfg.pool = laf::Pool::max_concat_mean;
            laf::LafOutput pv = laf::laf_forward(
                ptok, vtok, laf_cfg, params_, "laf.l" + std::to_string(i) + ".pv");
            g_vp_parts.push_back(pv.pooled);
            if (gates)
                for (std::size_t h = 0; h < pv.gates.size(); ++h)
                    gates->push_back({i, vm, pk, h, true, std::move(pv.gates[h])});
        }
        if (wants_vp) {
            laf_cfg.pool = laf::Pool::max;
            laf::LafOutput vp = laf::laf_forward(
                vtok, ptok, laf_cfg, params_, "laf.l" + std::to_string(i) + ".vp");
            g_pv_parts.push_back(vp.pooled);
            if (gates)
                for (std::size_t h = 0; h < vp.gates.size(); ++h)
                    gates->push_back({i, vm, pk, h, false, std::move(vp.gates[h])});
        }
    }

    const auto head_proj = [&](const char* name, const ad::Array& in) {
        ad::Array w = params_.get(std::string("head.") + name + ".weight",
                                  {in.cols(), cfg_.proj_width}, in.cols());
        ad::Array b = params_.get(std::string("head.") + name + ".bias",
                                  {cfg_.proj_width}, in.cols());
        return ad::linear(in, w, b);
    };

    std::vector<ad::Array> parts;
    parts.push_back(head_proj("gv_proj", vh.g_v));
    if (!g_vp_parts.empty())
        parts.push_back(head_proj("gvp_proj", ad::concat(g_vp_parts, 1)));
    if (!g_pv_parts.empty())
        parts.push_back(head_proj("gpv_proj", ad::concat(g_pv_parts, 1)));
    parts.push_back(head_proj("gp_proj", ph.g_p));
    ad::Array g_final = ad::concat(parts, 1);

    const auto fc = [&](const char* name, const ad::Array& in, std::size_t out_w) {
        ad::Array w = params_.get(std::string("head.") + name + ".weight",
                                  {in.cols(), out_w}, in.cols());
        ad::Array b =
            params_.get(std::string("head.") + name + ".bias", {out_w}, in.cols());
        return ad::linear(in, w, b);
    };
    ad::Array h1 = ad::relu(fc("cls1", g_final, cfg_.hidden));
    ad::Array h2 = ad::relu(fc("cls2", h1, cfg_.penultimate));
    ad::Array logits = fc("cls3", h2, cfg_.classes);

    return {logits, h2, g_final};
}

Descriptor Model::predict(const synth::Sample& sample, const enc::PointGraph& graph) {
    ad::InferenceMode guard;
    ForwardResult r = forward(sample, graph);
    Descriptor d;
    d.g_final = r.g_final.value();
    d.retrieval_code = r.penultimate.value();
    d.logits = r.logits.value();
    d.predicted = 0;
    for (std::size_t c = 1; c < d.logits.size(); ++c)
        if (d.logits[c] > d.logits[d.predicted]) d.predicted = static_cast<int>(c);
    return d;
}

} // namespace latformer::net
