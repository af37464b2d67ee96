#include "latformer/config.hpp"

#include "latformer/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <memory>
#include <set>
#include <stdexcept>

namespace latformer::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::invalid_argument("config: " + path + ": " + msg);
}

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& known) {
    for (const auto& [key, _] : obj.items())
        if (!known.count(key))
            fail(path.empty() ? key : path + "." + key, "unknown key");
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(path + "." + key, e.what());
    }
}

} // namespace

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.model.hier = enc::HierarchyConfig{};  // L=3, D=64, patch=2, n_q 64/32/16, k=20
    cfg.model.scale_pairs = {{1, 1}, {2, 2}, {3, 3}};
    cfg.model.classes = cfg.dataset.classes;
    cfg.model.hier.n_views = cfg.dataset.n_views;
    return cfg;
}

void validate(const ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.classes < 2 || d.classes > synth::kShapeKinds)
        fail("dataset.classes", "must be in [2, " +
                                    std::to_string(synth::kShapeKinds) + "]");
    if (d.per_class_train < 1) fail("dataset.per_class_train", "must be >= 1");
    if (d.per_class_test < 1) fail("dataset.per_class_test", "must be >= 1");
    if (d.n_points < 4) fail("dataset.n_points", "must be >= 4");
    if (d.n_views < 1) fail("dataset.n_views", "must be >= 1");
    if (d.resolution < 8) fail("dataset.resolution", "must be >= 8");
    if (d.noise_sigma < 0.0) fail("dataset.noise_sigma", "must be >= 0");

    const auto& m = cfg.model;
    const auto& h = m.hier;
    if (h.D < 1) fail("model.D", "must be >= 1");
    if (m.heads < 1) fail("model.H", "must be >= 1");
    if (h.D % m.heads != 0)
        fail("model.H", "must divide D=" + std::to_string(h.D) + " (got " +
                            std::to_string(m.heads) + ")");
    if (m.beta < 0.0 || m.beta >= 1.0) fail("model.beta", "must be in [0, 1)");
    if (m.eps <= 0.0) fail("model.eps", "must be > 0");
    if (h.L < 1) fail("model.L", "must be >= 1");
    if (h.patch < 1 || d.resolution % h.patch != 0)
        fail("model.patch", "must divide dataset.resolution=" +
                                std::to_string(d.resolution));
    if (h.n_q.size() != h.L)
        fail("model.n_q", "must list exactly L=" + std::to_string(h.L) + " counts");
    for (std::size_t i = 0; i < h.n_q.size(); ++i) {
        if (h.n_q[i] < 1) fail("model.n_q", "counts must be >= 1");
        if (i && h.n_q[i] >= h.n_q[i - 1])
            fail("model.n_q", "counts must be strictly decreasing");
    }
    if (h.n_q[0] > d.n_points)
        fail("model.n_q", "n_q[0]=" + std::to_string(h.n_q[0]) +
                              " exceeds dataset.n_points=" +
                              std::to_string(d.n_points));
    if (h.k < 1) fail("model.k", "must be >= 1");
    std::size_t smallest_input = d.n_points;
    for (std::size_t i = 0; i + 1 < h.n_q.size(); ++i)
        smallest_input = std::min(smallest_input, h.n_q[i]);
    if (h.k > smallest_input)
        fail("model.k", "k=" + std::to_string(h.k) +
                            " exceeds the smallest neighbor pool (" +
                            std::to_string(smallest_input) + ")");
    std::size_t grid = d.resolution / h.patch;
    for (std::size_t l = 0; l < h.L; ++l) {
        if (grid < 2)
            fail("model.L", "view grid degenerates to 1x1 before scale " +
                                std::to_string(l + 1));
        grid = (grid + 1) / 2;
    }
    if (m.strategy != net::Strategy::late_fusion && m.scale_pairs.empty())
        fail("model.scale_pairs", "must be nonempty for strategy " +
                                      std::string(net::strategy_name(m.strategy)));
    for (auto [vm, pk] : m.scale_pairs)
        if (vm < 1 || vm > h.L || pk < 1 || pk > h.L)
            fail("model.scale_pairs", "pair (" + std::to_string(vm) + "," +
                                          std::to_string(pk) + ") outside [1," +
                                          std::to_string(h.L) + "]");
    if (m.proj_width < 1) fail("model.proj_width", "must be >= 1");
    if (m.penultimate < 1) fail("model.penultimate", "must be >= 1");
    if (m.classes != d.classes)
        fail("model.classes", "must match dataset.classes");
    if (h.n_views != d.n_views)
        fail("model.n_views", "must match dataset.n_views");

    const auto& t = cfg.training;
    if (t.epochs < 1) fail("training.epochs", "must be >= 1");
    if (t.lr < 0.0) fail("training.lr", "must be >= 0");
    if (t.momentum < 0.0 || t.momentum >= 1.0)
        fail("training.momentum", "must be in [0, 1)");
    if (t.batch < 1) fail("training.batch", "must be >= 1");
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

    ExperimentConfig cfg = default_config();
    reject_unknown(j, "", {"seed", "out_dir", "dataset", "model", "training"});
    read_field(j, "", "seed", cfg.seed);
    read_field(j, "", "out_dir", cfg.out_dir);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (!d.is_object()) fail("dataset", "must be an object");
        reject_unknown(d, "dataset",
                       {"classes", "per_class_train", "per_class_test", "n_points",
                        "n_views", "resolution", "seed", "noise_sigma"});
        read_field(d, "dataset", "classes", cfg.dataset.classes);
        read_field(d, "dataset", "per_class_train", cfg.dataset.per_class_train);
        read_field(d, "dataset", "per_class_test", cfg.dataset.per_class_test);
        read_field(d, "dataset", "n_points", cfg.dataset.n_points);
        read_field(d, "dataset", "n_views", cfg.dataset.n_views);
        read_field(d, "dataset", "resolution", cfg.dataset.resolution);
        read_field(d, "dataset", "seed", cfg.dataset.seed);
        read_field(d, "dataset", "noise_sigma", cfg.dataset.noise_sigma);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        if (!m.is_object()) fail("model", "must be an object");
        reject_unknown(m, "model",
                       {"D", "H", "beta", "eps", "L", "patch", "n_q", "k", "strategy",
                        "scale_pairs", "attention_mode", "proj_width", "penultimate",
                        "hidden"});
        read_field(m, "model", "D", cfg.model.hier.D);
        read_field(m, "model", "H", cfg.model.heads);
        read_field(m, "model", "beta", cfg.model.beta);
        read_field(m, "model", "eps", cfg.model.eps);
        read_field(m, "model", "L", cfg.model.hier.L);
        read_field(m, "model", "patch", cfg.model.hier.patch);
        read_field(m, "model", "n_q", cfg.model.hier.n_q);
        read_field(m, "model", "k", cfg.model.hier.k);
        read_field(m, "model", "proj_width", cfg.model.proj_width);
        read_field(m, "model", "penultimate", cfg.model.penultimate);
        read_field(m, "model", "hidden", cfg.model.hidden);
        if (m.contains("strategy")) {
            try {
                cfg.model.strategy =
                    net::strategy_from_name(m.at("strategy").get<std::string>());
            } catch (const std::exception& e) {
                fail("model.strategy", e.what());
            }
        }
        if (m.contains("attention_mode")) {
            const std::string v = m.at("attention_mode").get<std::string>();
            if (v == "thresholded_sigmoid")
                cfg.model.attention = laf::Attention::thresholded_sigmoid;
            else if (v == "softmax")
                cfg.model.attention = laf::Attention::softmax;
            else
                fail("model.attention_mode",
                     "must be 'thresholded_sigmoid' or 'softmax'");
        }
        if (m.contains("scale_pairs")) {
            cfg.model.scale_pairs.clear();
            const json& sp = m.at("scale_pairs");
            if (!sp.is_array()) fail("model.scale_pairs", "must be a list of pairs");
            for (const auto& pair : sp) {
                if (!pair.is_array() || pair.size() != 2)
                    fail("model.scale_pairs", "each entry must be [view_scale, point_scale]");
                cfg.model.scale_pairs.emplace_back(pair.at(0).get<std::size_t>(),
                                                   pair.at(1).get<std::size_t>());
            }
        } else if (m.contains("L")) {
            cfg.model.scale_pairs.clear();
            for (std::size_t l = 1; l <= cfg.model.hier.L; ++l)
                cfg.model.scale_pairs.emplace_back(l, l);
        }
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        if (!t.is_object()) fail("training", "must be an object");
        reject_unknown(t, "training",
                       {"epochs", "lr", "momentum", "decay_every", "batch"});
        read_field(t, "training", "epochs", cfg.training.epochs);
        read_field(t, "training", "lr", cfg.training.lr);
        read_field(t, "training", "momentum", cfg.training.momentum);
        read_field(t, "training", "decay_every", cfg.training.decay_every);
        read_field(t, "training", "batch", cfg.training.batch);
    }

    cfg.model.classes = cfg.dataset.classes;
    cfg.model.hier.n_views = cfg.dataset.n_views;
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["dataset"] = {{"classes", cfg.dataset.classes},
                    {"per_class_train", cfg.dataset.per_class_train},
                    {"per_class_test", cfg.dataset.per_class_test},
                    {"n_points", cfg.dataset.n_points},
                    {"n_views", cfg.dataset.n_views},
                    {"resolution", cfg.dataset.resolution},
                    {"seed", cfg.dataset.seed},
                    {"noise_sigma", cfg.dataset.noise_sigma}};
    json pairs = json::array();
    for (auto [vm, pk] : cfg.model.scale_pairs) pairs.push_back({vm, pk});
    j["model"] = {{"D", cfg.model.hier.D},
                  {"H", cfg.model.heads},
                  {"beta", cfg.model.beta},
                  {"eps", cfg.model.eps},
                  {"L", cfg.model.hier.L},
                  {"patch", cfg.model.hier.patch},
                  {"n_q", cfg.model.hier.n_q},
                  {"k", cfg.model.hier.k},
                  {"strategy", net::strategy_name(cfg.model.strategy)},
                  {"scale_pairs", pairs},
                  {"attention_mode",
                   cfg.model.attention == laf::Attention::softmax
                       ? "softmax"
                       : "thresholded_sigmoid"},
                  {"proj_width", cfg.model.proj_width},
                  {"penultimate", cfg.model.penultimate},
                  {"hidden", cfg.model.hidden}};
    j["training"] = {{"epochs", cfg.training.epochs},
                     {"lr", cfg.training.lr},
                     {"momentum", cfg.training.momentum},
                     {"decay_every", cfg.training.decay_every},
                     {"batch", cfg.training.batch}};
    return j.dump(2);
}

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t run_seed,
                         const synth::Dataset* dataset,
                         const net::GraphCache* train_graphs,
                         const net::GraphCache* test_graphs) {
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    synth::Dataset local_ds;
    if (!dataset) {
        local_ds = synth::make_dataset(cfg.dataset);
        dataset = &local_ds;
    }
    std::unique_ptr<net::GraphCache> local_train, local_test;
    if (!train_graphs) {
        local_train = std::make_unique<net::GraphCache>(cfg.model, dataset->train);
        train_graphs = local_train.get();
    }
    if (!test_graphs) {
        local_test = std::make_unique<net::GraphCache>(cfg.model, dataset->test);
        test_graphs = local_test.get();
    }

    net::Model model(cfg.model, rng::derive(run_seed, "init"));
    RunResult result;
    result.log = net::train_model(model, *dataset, cfg.training,
                                  rng::derive(run_seed, "train"), *train_graphs,
                                  *test_graphs);
    result.metrics = ev::evaluate_model(model, dataset->test, *test_graphs);
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace latformer::cli
