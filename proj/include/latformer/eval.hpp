#pragma once

#include "latformer/model.hpp"
#include "latformer/train.hpp"

#include <string>
#include <vector>

namespace latformer::ev {

double overall_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Unweighted mean of per-class recall over classes present in truth.
double mean_class_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                           std::size_t classes);

// relevance flags in ranked order; throws when nothing is relevant.
double average_precision(const std::vector<char>& relevance);

struct RetrievalRun {
    double map = 0.0;
    std::size_t skipped = 0;                     // queries with no relevant item
    std::vector<double> per_query_ap;            // NaN for skipped queries
    std::vector<std::vector<std::size_t>> rankings;  // gallery indices, self excluded
};

// Leave-one-out retrieval over one descriptor set: cosine similarity ranking
// (ties to the lowest gallery index), relevance = label equality. Throws when
// every query ends up skipped.
RetrievalRun retrieval_map(const std::vector<std::vector<double>>& descriptors,
                           const std::vector<int>& labels);

struct Metrics {
    double oa = 0.0;
    double macc = 0.0;
    double map = 0.0;
};

Metrics evaluate_model(net::Model& model, const std::vector<synth::Sample>& samples,
                       const net::GraphCache& graphs);

// Per (scale pair, direction, head): the alpha matrix as CSV plus companion
// index files mapping view-token columns to grid positions and point-token
// rows to 3D coordinates. Returns the file names written.
std::vector<std::string> export_gates(net::Model& model, const synth::Sample& sample,
                                      const enc::PointGraph& graph,
                                      const std::string& out_dir);

// Test views re-rendered after a rotation; the cloud is untouched (the
// arbitrary-view protocol misaligns the modalities on purpose).
synth::Sample with_rotated_views(const synth::Sample& sample, double azimuth);
synth::Sample with_rotated_views(const synth::Sample& sample,
                                 const std::vector<double>& rot3x3);

} // namespace latformer::ev
