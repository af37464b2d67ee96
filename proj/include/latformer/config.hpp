#pragma once

#include "latformer/eval.hpp"
#include "latformer/model.hpp"
#include "latformer/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace latformer::cli {

// One experiment = dataset block + model block + training block + run seed.
// JSON loading is strict: unknown keys are rejected, violations are reported
// with their field path, and every cross-field constraint is revalidated.
struct ExperimentConfig {
    synth::DatasetConfig dataset;
    net::ModelConfig model;
    net::TrainConfig training;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
};

ExperimentConfig default_config();
void validate(const ExperimentConfig& cfg);  // throws with field paths
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

struct RunResult {
    ev::Metrics metrics;
    net::TrainLog log;
    double seconds = 0.0;
};

// Train a fresh model under (cfg, run_seed) and evaluate on the test split.
// Prebuilt dataset/caches may be shared across runs with the same dataset and
// hierarchy blocks.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t run_seed,
                         const synth::Dataset* dataset = nullptr,
                         const net::GraphCache* train_graphs = nullptr,
                         const net::GraphCache* test_graphs = nullptr);

// CLI entry point; args exclude the program name. Returns the exit status.
int run_command(const std::vector<std::string>& args);

} // namespace latformer::cli
