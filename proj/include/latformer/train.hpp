#pragma once

#include "latformer/model.hpp"

#include <cstdint>
#include <vector>

namespace latformer::net {

struct TrainConfig {
    std::size_t epochs = 30;
    double lr = 0.005;
    double momentum = 0.9;
    std::size_t decay_every = 12;  // lr halves every this many epochs
    std::size_t batch = 16;
};

struct EpochRow {
    std::size_t epoch = 0;
    double loss = 0.0;      // mean cross-entropy over the epoch's samples
    double train_oa = 0.0;  // running accuracy of the training forwards
    double test_oa = 0.0;
};

struct TrainLog {
    std::vector<EpochRow> rows;
};

// Point-graph cache: structure depends only on coordinates, so it is shared
// across epochs and model instances with the same hierarchy config.
class GraphCache {
public:
    GraphCache(const ModelConfig& cfg, const std::vector<synth::Sample>& samples);
    const enc::PointGraph& at(std::size_t i) const { return graphs_.at(i); }
    std::size_t size() const { return graphs_.size(); }

private:
    std::vector<enc::PointGraph> graphs_;
};

// Mini-batch SGD with momentum on cross-entropy; deterministic shuffling from
// the run seed; per-epoch test accuracy recorded.
TrainLog train_model(Model& model, const synth::Dataset& data, const TrainConfig& cfg,
                     std::uint64_t run_seed, const GraphCache& train_graphs,
                     const GraphCache& test_graphs);

std::vector<Descriptor> predict_batch(Model& model,
                                      const std::vector<synth::Sample>& samples,
                                      const GraphCache& graphs);

} // namespace latformer::net
