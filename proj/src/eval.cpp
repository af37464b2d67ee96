#include "latformer/eval.hpp"

#include "latformer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace latformer::ev {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// 17 significant digits: re-export is byte-identical and values round-trip.
void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

} // namespace

double overall_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    require(!truth.empty() && pred.size() == truth.size(),
            "overall_accuracy: need equal nonempty label vectors");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (pred[i] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double mean_class_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                           std::size_t classes) {
    require(!truth.empty() && pred.size() == truth.size(),
            "mean_class_accuracy: need equal nonempty label vectors");
    std::vector<std::size_t> total(classes, 0), correct(classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i] >= 0 && static_cast<std::size_t>(truth[i]) < classes,
                "mean_class_accuracy: label out of range");
        ++total[truth[i]];
        if (pred[i] == truth[i]) ++correct[truth[i]];
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (total[c] == 0) continue;  // classes absent from truth are excluded
        sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
        ++present;
    }
    return sum / static_cast<double>(present);
}

double average_precision(const std::vector<char>& relevance) {
    std::size_t relevant = 0;
    long double sum = 0.0L;  // extended precision so small cases round exactly
    for (std::size_t r = 0; r < relevance.size(); ++r) {
        if (!relevance[r]) continue;
        ++relevant;
        sum += static_cast<long double>(relevant) / static_cast<long double>(r + 1);
    }
    require(relevant > 0, "average_precision: no relevant item in the ranking");
    return static_cast<double>(sum / static_cast<long double>(relevant));
}

RetrievalRun retrieval_map(const std::vector<std::vector<double>>& descriptors,
                           const std::vector<int>& labels) {
    require(!descriptors.empty() && descriptors.size() == labels.size(),
            "retrieval_map: need matching nonempty descriptors and labels");
    const std::size_t n = descriptors.size();
    std::vector<double> norm(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = descriptors[i];
        norm[i] = std::sqrt(kern::active().dot(d.data(), d.data(), d.size()));
    }

    RetrievalRun run;
    run.per_query_ap.assign(n, std::numeric_limits<double>::quiet_NaN());
    run.rankings.resize(n);
    double ap_sum = 0.0;
    std::size_t counted = 0;
    std::vector<double> sim(n);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t i = 0; i < n; ++i) {
            const double denom = norm[q] * norm[i];
            sim[i] = denom > 0.0
                         ? kern::active().dot(descriptors[q].data(),
                                              descriptors[i].data(),
                                              descriptors[q].size()) /
                               denom
                         : 0.0;
        }
        auto& ranking = run.rankings[q];
        ranking.clear();
        ranking.reserve(n - 1);
        for (std::size_t i = 0; i < n; ++i)
            if (i != q) ranking.push_back(i);  // self-match excluded
        std::sort(ranking.begin(), ranking.end(), [&sim](std::size_t a, std::size_t b) {
            return sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
        });

        std::vector<char> rel(ranking.size());
        bool any = false;
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            rel[r] = labels[ranking[r]] == labels[q] ? 1 : 0;
            any = any || rel[r];
        }
        if (!any) {
            ++run.skipped;
            continue;
        }
        const double ap = average_precision(rel);
        run.per_query_ap[q] = ap;
        ap_sum += ap;
        ++counted;
    }
    if (counted == 0)
        throw std::runtime_error("retrieval_map: every query was skipped (no "
                                 "relevant gallery items); " +
                                 std::to_string(run.skipped) + " skipped");
    run.map = ap_sum / static_cast<double>(counted);
    return run;
}

Metrics evaluate_model(net::Model& model, const std::vector<synth::Sample>& samples,
                       const net::GraphCache& graphs) {
    const auto descriptors = net::predict_batch(model, samples, graphs);
    std::vector<int> pred, truth;
    std::vector<std::vector<double>> codes;
    pred.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        pred.push_back(descriptors[i].predicted);
        truth.push_back(samples[i].label);
        codes.push_back(descriptors[i].retrieval_code);
    }
    Metrics m;
    m.oa = overall_accuracy(pred, truth);
    m.macc = mean_class_accuracy(pred, truth, model.config().classes);
    m.map = retrieval_map(codes, truth).map;
    return m;
}

std::vector<std::string> export_gates(net::Model& model, const synth::Sample& sample,
                                      const enc::PointGraph& graph,
                                      const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<net::GateExport> gates;
    {
        ad::InferenceMode guard;
        (void)model.forward(sample, graph, &gates);
    }

    std::vector<std::string> written;
    const auto write_file = [&](const std::string& name, const std::string& body) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
        out << body;
        written.push_back(path);
    };

    for (const auto& g : gates) {
        std::string body;
        for (std::size_t r = 0; r < g.gate.n_x; ++r) {
            for (std::size_t c = 0; c < g.gate.n_y; ++c) {
                if (c) body += ',';
                append_double(body, g.gate.alpha[r * g.gate.n_y + c]);
            }
            body += '\n';
        }
        const std::string name = "gates_pair" + std::to_string(g.pair_index) + "_V" +
                                 std::to_string(g.view_scale) + "_P" +
                                 std::to_string(g.point_scale) + "_" +
                                 (g.point_query ? "pv" : "vp") + "_h" +
                                 std::to_string(g.head) + ".csv";
        write_file(name, body);
    }

    // Companion indices per pair: view tokens to grid cells, point tokens to
    // coordinates at that scale.
    const auto& cfg = model.config();
    for (std::size_t i = 0; i < cfg.scale_pairs.size(); ++i) {
        const auto [vm, pk] = cfg.scale_pairs[i];
        std::size_t side = sample.views.resolution / cfg.hier.patch;
        for (std::size_t l = 0; l < vm; ++l) side = (side + 1) / 2;
        std::string vbody = "token,grid_row,grid_col\n";
        for (std::size_t t = 0; t < side * side; ++t)
            vbody += std::to_string(t) + "," + std::to_string(t / side) + "," +
                     std::to_string(t % side) + "\n";
        write_file("view_tokens_pair" + std::to_string(i) + ".csv", vbody);

        const auto& coords = graph.stages[pk - 1].coords;
        std::string pbody = "token,x,y,z\n";
        for (std::size_t t = 0; t < coords.size() / 3; ++t) {
            pbody += std::to_string(t);
            for (int c = 0; c < 3; ++c) {
                pbody += ',';
                append_double(pbody, coords[3 * t + c]);
            }
            pbody += '\n';
        }
        write_file("point_tokens_pair" + std::to_string(i) + ".csv", pbody);
    }
    return written;
}

synth::Sample with_rotated_views(const synth::Sample& sample, double azimuth) {
    return with_rotated_views(sample, synth::rotation_z(azimuth));
}

synth::Sample with_rotated_views(const synth::Sample& sample,
                                 const std::vector<double>& rot3x3) {
    synth::Sample out = sample;
    out.views = synth::render_depth_views(sample.cloud, sample.views.n_views,
                                          sample.views.resolution, rot3x3.data());
    return out;
}

} // namespace latformer::ev
