#pragma once

#include "latformer/encoders.hpp"
#include "latformer/laf.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Full network: both hierarchies, per-scale bidirectional LAF fusion,
// hierarchical concatenation, four projected parts, and a three-layer
// classifier whose 256-wide penultimate activation doubles as the retrieval
// descriptor.

namespace latformer::net {

enum class Strategy {
    latformer,
    late_fusion,
    deep_concat,
    point_view_only,
    view_point_only,
    latformer_softmax,
};

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);
const std::vector<Strategy>& all_strategies();

struct ModelConfig {
    enc::HierarchyConfig hier;
    std::size_t heads = 4;
    double beta = 0.3;
    double eps = 1e-5;
    laf::Attention attention = laf::Attention::thresholded_sigmoid;
    Strategy strategy = Strategy::latformer;
    std::vector<std::pair<std::size_t, std::size_t>> scale_pairs;  // 1-based (V_m, P_k)
    std::size_t classes = 8;
    std::size_t proj_width = 256;   // width of each projected part of g_final
    std::size_t hidden = 512;       // first classifier layer
    std::size_t penultimate = 256;  // retrieval descriptor width

    std::size_t head_parts() const;             // 2, 3 or 4
    std::size_t g_final_width() const { return head_parts() * proj_width; }
};

struct GateExport {
    std::size_t pair_index = 0;
    std::size_t view_scale = 0;   // 1-based
    std::size_t point_scale = 0;  // 1-based
    std::size_t head = 0;
    bool point_query = false;     // true: Point-View LAF (rows are point tokens)
    laf::HeadGate gate;
};

struct ForwardResult {
    ad::Array logits;       // {1, classes}
    ad::Array penultimate;  // {1, penultimate}
    ad::Array g_final;
};

struct Descriptor {
    std::vector<double> g_final;
    std::vector<double> retrieval_code;
    std::vector<double> logits;
    int predicted = 0;  // argmax, lowest index on ties
};

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }
    laf::Attention effective_attention() const;

    enc::PointGraph make_graph(const synth::PointCloud& pc) const;

    ForwardResult forward(const synth::Sample& sample, const enc::PointGraph& graph,
                          std::vector<GateExport>* gates = nullptr);
    Descriptor predict(const synth::Sample& sample, const enc::PointGraph& graph);

private:
    void materialize_params();

    ModelConfig cfg_;
    ad::ParamStore params_;
};

} // namespace latformer::net
