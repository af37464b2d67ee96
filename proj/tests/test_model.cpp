#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latformer/eval.hpp"
#include "latformer/gradcheck.hpp"
#include "latformer/rng.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>

using namespace latformer;

namespace {

// Tiny configuration: D=8, H=2, L=2, N_p=32, N_v=2, R=8.
synth::DatasetConfig tiny_dataset() {
    synth::DatasetConfig d;
    d.classes = 4;
    d.per_class_train = 2;
    d.per_class_test = 1;
    d.n_points = 32;
    d.n_views = 2;
    d.resolution = 8;
    d.seed = 77;
    d.noise_sigma = 0.01;
    return d;
}

net::ModelConfig tiny_model(net::Strategy strategy = net::Strategy::latformer) {
    net::ModelConfig m;
    m.hier.L = 2;
    m.hier.D = 8;
    m.hier.patch = 2;
    m.hier.n_q = {16, 8};
    m.hier.k = 8;
    m.hier.n_views = 2;
    m.heads = 2;
    m.strategy = strategy;
    m.scale_pairs = {{1, 1}, {2, 2}};
    m.classes = 4;
    return m;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("g_final widths per strategy, independent of scale pairs") {
    for (auto pairs : {std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}},
                       std::vector<std::pair<std::size_t, std::size_t>>{
                           {1, 1}, {2, 2}, {2, 1}}}) {
        auto cfg = tiny_model();
        cfg.scale_pairs = pairs;
        CHECK(cfg.g_final_width() == 4 * 256);
        cfg.strategy = net::Strategy::late_fusion;
        CHECK(cfg.g_final_width() == 2 * 256);
        cfg.strategy = net::Strategy::point_view_only;
        CHECK(cfg.g_final_width() == 3 * 256);
        cfg.strategy = net::Strategy::deep_concat;
        CHECK(cfg.g_final_width() == 4 * 256);

        const auto ds = synth::make_dataset(tiny_dataset());
        cfg.strategy = net::Strategy::latformer;
        net::Model model(cfg, 5);
        const auto graph = model.make_graph(ds.train[0].cloud);
        const auto fr = model.forward(ds.train[0], graph);
        CHECK(fr.g_final.cols() == 4 * 256);
        CHECK(fr.penultimate.cols() == 256);
        CHECK(fr.logits.cols() == 4);
    }
}

TEST_CASE("late_fusion ignores LAF weights entirely") {
    const auto ds = synth::make_dataset(tiny_dataset());
    net::Model model(tiny_model(net::Strategy::late_fusion), 6);
    const auto graph = model.make_graph(ds.train[0].cloud);
    const auto before = model.forward(ds.train[0], graph).logits.value();

    // gradients of LAF parameters are exactly zero
    {
        model.params().zero_grads();
        auto fr = model.forward(ds.train[0], graph);
        ad::backward(ad::cross_entropy(fr.logits, {ds.train[0].label}));
        for (const auto& [name, p] : model.params().all()) {
            if (name.rfind("laf.", 0) != 0) continue;
            for (double g : p.grad()) REQUIRE(g == 0.0);
        }
    }

    // perturbing any LAF parameter leaves the logits bitwise unchanged
    for (const auto& [name, p] : model.params().all()) {
        if (name.rfind("laf.", 0) != 0) continue;
        auto& v = const_cast<ad::Array&>(p).leaf_value();
        for (double& x : v) x += 3.7;
    }
    const auto after = model.forward(ds.train[0], graph).logits.value();
    REQUIRE(same_bits(before, after));
}

TEST_CASE("unidirectional strategies consume the matching LAF direction only") {
    const auto ds = synth::make_dataset(tiny_dataset());
    for (auto [strategy, dead_dir] :
         {std::pair{net::Strategy::point_view_only, std::string(".vp.")},
          std::pair{net::Strategy::view_point_only, std::string(".pv.")}}) {
        net::Model model(tiny_model(strategy), 7);
        const auto graph = model.make_graph(ds.train[0].cloud);
        model.params().zero_grads();
        auto fr = model.forward(ds.train[0], graph);
        CHECK(fr.g_final.cols() == 3 * 256);
        ad::backward(ad::cross_entropy(fr.logits, {ds.train[0].label}));
        for (const auto& [name, p] : model.params().all()) {
            if (name.rfind("laf.", 0) != 0) continue;
            const bool dead = name.find(dead_dir) != std::string::npos;
            if (!dead) continue;
            for (double g : p.grad()) REQUIRE(g == 0.0);
        }
    }
}

TEST_CASE("view and point permutations leave logits unchanged") {
    const auto ds = synth::make_dataset(tiny_dataset());
    rng::SplitMix64 g(12);
    for (net::Strategy strategy :
         {net::Strategy::latformer, net::Strategy::late_fusion,
          net::Strategy::deep_concat, net::Strategy::latformer_softmax}) {
        net::Model model(tiny_model(strategy), 8);
        for (int trial = 0; trial < 3; ++trial) {
            const auto& sample = ds.train[g.bounded(ds.train.size())];
            const auto graph = model.make_graph(sample.cloud);
            const auto base = model.forward(sample, graph).logits.value();

            synth::Sample view_perm = sample;
            const std::size_t r2 =
                sample.views.resolution * sample.views.resolution;
            std::memcpy(view_perm.views.images.data(),
                        sample.views.images.data() + r2, r2 * sizeof(double));
            std::memcpy(view_perm.views.images.data() + r2,
                        sample.views.images.data(), r2 * sizeof(double));
            REQUIRE(same_bits(base,
                              model.forward(view_perm, graph).logits.value()));

            synth::Sample point_perm = sample;
            std::vector<std::size_t> perm(sample.cloud.size());
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            g.shuffle(perm);
            for (std::size_t i = 0; i < perm.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    point_perm.cloud.coords[3 * i + c] =
                        sample.cloud.coords[3 * perm[i] + c];
            const auto graph2 = model.make_graph(point_perm.cloud);
            REQUIRE(same_bits(base,
                              model.forward(point_perm, graph2).logits.value()));
        }
    }
}

TEST_CASE("end-to-end gradients match finite differences on the tiny config") {
    const auto ds = synth::make_dataset(tiny_dataset());
    net::Model model(tiny_model(), 9);
    const auto graph = model.make_graph(ds.train[0].cloud);
    std::vector<ad::Array> leaves;
    for (const auto& [_, p] : model.params().all()) leaves.push_back(p);
    const auto rep = ad::grad_check_leaves(
        [&] {
            auto fr = model.forward(ds.train[0], graph);
            return ad::cross_entropy(fr.logits, {ds.train[0].label});
        },
        leaves, 1e-5, 10.0, 250, 13);
    CHECK(rep.checked > 150);
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("lr=0 leaves parameters bitwise unchanged over an epoch") {
    const auto data = synth::make_dataset(tiny_dataset());
    net::Model model(tiny_model(), 10);
    net::GraphCache train_graphs(model.config(), data.train);
    net::GraphCache test_graphs(model.config(), data.test);

    std::map<std::string, std::vector<double>> before;
    for (const auto& [name, p] : model.params().all()) before[name] = p.value();

    net::TrainConfig tc;
    tc.epochs = 1;
    tc.lr = 0.0;
    tc.batch = 4;
    (void)net::train_model(model, data, tc, 17, train_graphs, test_graphs);
    for (const auto& [name, p] : model.params().all())
        REQUIRE(same_bits(before[name], p.value()));
}

TEST_CASE("single-sample overfit drives the loss under 0.01") {
    auto dcfg = tiny_dataset();
    dcfg.classes = 2;
    dcfg.per_class_train = 1;
    dcfg.per_class_test = 1;
    auto data = synth::make_dataset(dcfg);
    data.train.resize(1);  // one sample, 200 steps

    auto mcfg = tiny_model();
    mcfg.classes = 2;
    net::Model model(mcfg, 11);
    net::GraphCache train_graphs(model.config(), data.train);
    net::GraphCache test_graphs(model.config(), data.test);

    net::TrainConfig tc;
    tc.epochs = 200;
    tc.lr = 0.05;
    tc.batch = 1;
    tc.decay_every = 1000;
    const auto log = net::train_model(model, data, tc, 19, train_graphs, test_graphs);
    CHECK(log.rows.back().loss < 0.01);
}

TEST_CASE("same seed twice reproduces the training log bitwise") {
    const auto data = synth::make_dataset(tiny_dataset());
    net::TrainConfig tc;
    tc.epochs = 3;
    tc.lr = 0.03;
    tc.batch = 4;
    net::TrainLog logs[2];
    for (int run = 0; run < 2; ++run) {
        net::Model model(tiny_model(), 12);
        net::GraphCache train_graphs(model.config(), data.train);
        net::GraphCache test_graphs(model.config(), data.test);
        logs[run] = net::train_model(model, data, tc, 23, train_graphs, test_graphs);
    }
    REQUIRE(logs[0].rows.size() == logs[1].rows.size());
    for (std::size_t i = 0; i < logs[0].rows.size(); ++i) {
        REQUIRE(std::memcmp(&logs[0].rows[i].loss, &logs[1].rows[i].loss,
                            sizeof(double)) == 0);
        REQUIRE(logs[0].rows[i].test_oa == logs[1].rows[i].test_oa);
    }
}

TEST_CASE("prediction ties resolve to the lowest class index") {
    const auto ds = synth::make_dataset(tiny_dataset());
    net::Model model(tiny_model(), 13);
    // zero the final layer: all logits identical
    const_cast<ad::Array&>(model.params().all().at("head.cls3.weight")).leaf_value() =
        std::vector<double>(256 * 4, 0.0);
    const_cast<ad::Array&>(model.params().all().at("head.cls3.bias")).leaf_value() =
        std::vector<double>(4, 0.0);
    const auto graph = model.make_graph(ds.test[0].cloud);
    CHECK(model.predict(ds.test[0], graph).predicted == 0);
}

TEST_CASE("checkpoint round trip reproduces predictions bitwise") {
    const auto ds = synth::make_dataset(tiny_dataset());
    net::Model model(tiny_model(), 14);
    const auto graph = model.make_graph(ds.test[1].cloud);
    const auto before = model.predict(ds.test[1], graph);

    const auto tmp = std::filesystem::temp_directory_path() / "lf_model_ckpt.json";
    model.params().save_file(tmp.string());
    net::Model fresh(tiny_model(), 999);  // different init seed
    fresh.params().load_file(tmp.string());
    const auto after = fresh.predict(ds.test[1], graph);
    REQUIRE(same_bits(before.logits, after.logits));
    REQUIRE(same_bits(before.retrieval_code, after.retrieval_code));
    std::filesystem::remove(tmp);
}

TEST_CASE("predict_batch keeps order and is idempotent") {
    const auto ds = synth::make_dataset(tiny_dataset());
    net::Model model(tiny_model(), 15);
    net::GraphCache graphs(model.config(), ds.test);
    const auto a = net::predict_batch(model, ds.test, graphs);
    const auto b = net::predict_batch(model, ds.test, graphs);
    REQUIRE(a.size() == ds.test.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].predicted == b[i].predicted);
        REQUIRE(same_bits(a[i].retrieval_code, b[i].retrieval_code));
    }
}
