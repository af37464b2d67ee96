#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latformer/encoders.hpp"
#include "latformer/geometry.hpp"
#include "latformer/rng.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

using namespace latformer;
using ad::Array;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void set_values(ad::ParamStore& params, const std::string& name,
                const std::vector<double>& v) {
    auto& value = const_cast<Array&>(params.all().at(name)).leaf_value();
    REQUIRE(value.size() == v.size());
    value = v;
}

std::vector<double> identity_matrix(std::size_t d) {
    std::vector<double> m(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
    return m;
}

synth::PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
    rng::SplitMix64 g(seed);
    synth::PointCloud pc;
    pc.coords.resize(3 * n);
    for (double& v : pc.coords) v = g.uniform(-1.0, 1.0);
    return pc;
}

} // namespace

TEST_CASE("edge_conv: identical points collapse the edge term") {
    const std::size_t n = 5, k = 3, d = 4;
    std::vector<double> feats(n * 2, 1.25);  // all rows equal, f=2
    Array f = Array::from({n, 2}, feats);
    std::vector<double> coords(n * 3, 0.0);
    const auto knn = geom::knn_indices(coords, coords, k);

    ad::ParamStore params(5);
    Array out = enc::edge_conv(f, knn, k, d, params, "ec");
    // every point sees edge features [f, 0] -> one shared output row
    const auto w = params.all().at("ec.weight").value();
    const auto b = params.all().at("ec.bias").value();
    std::vector<double> expect(d);
    for (std::size_t j = 0; j < d; ++j) {
        double s = b[j];
        s += 1.25 * w[0 * d + j];
        s += 1.25 * w[1 * d + j];
        expect[j] = s > 0 ? s : 0;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(out.value()[i * d + j] == doctest::Approx(expect[j]).epsilon(1e-14));
}

TEST_CASE("edge_conv with k=1 self-inclusion uses [f_i, 0]") {
    const std::size_t d = 3;
    synth::PointCloud pc = random_cloud(4, 77);
    Array feats = Array::from({4, 3}, pc.coords);
    const auto knn = geom::knn_indices(pc.coords, pc.coords, 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(knn[i] == i);  // self first

    ad::ParamStore params(6);
    Array out = enc::edge_conv(feats, knn, 1, d, params, "ec");
    const auto w = params.all().at("ec.weight").value();
    const auto b = params.all().at("ec.bias").value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = b[j];
            for (std::size_t c = 0; c < 3; ++c)
                s += pc.coords[3 * i + c] * w[c * d + j];  // difference part is zero
            const double expect = s > 0 ? s : 0;
            CHECK(out.value()[i * d + j] == doctest::Approx(expect).epsilon(1e-14));
        }
}

TEST_CASE("edge_conv is permutation equivariant on tie-free clouds") {
    const std::size_t n = 24, k = 4, d = 6;
    synth::PointCloud pc = random_cloud(n, 123);
    Array feats = Array::from({n, 3}, pc.coords);
    ad::ParamStore params(7);
    Array out =
        enc::edge_conv(feats, geom::knn_indices(pc.coords, pc.coords, k), k, d,
                       params, "ec");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng::SplitMix64 g(9);
    g.shuffle(perm);
    synth::PointCloud shuffled;
    shuffled.coords.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            shuffled.coords[3 * i + c] = pc.coords[3 * perm[i] + c];
    Array feats2 = Array::from({n, 3}, shuffled.coords);
    Array out2 =
        enc::edge_conv(feats2, geom::knn_indices(shuffled.coords, shuffled.coords, k),
                       k, d, params, "ec");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            REQUIRE(out2.value()[i * d + j] == out.value()[perm[i] * d + j]);
}

TEST_CASE("sgp: m=N, k=1 with identity embedding returns the features (FPS order)") {
    const std::size_t n = 6, d = 4;
    synth::PointCloud pc = random_cloud(n, 31);
    rng::SplitMix64 g(32);
    std::vector<double> fv(n * d);
    for (double& v : fv) v = g.uniform(0.1, 2.0);  // positive so relu is identity
    Array feats = Array::from({n, d}, fv);

    enc::HierarchyConfig cfg;
    cfg.L = 1;
    cfg.D = d;
    cfg.n_q = {n};
    cfg.k = 1;
    const auto graph = enc::build_point_graph(pc.coords, cfg);

    ad::ParamStore params(8);
    params.get("sgp.embed.weight", {d, d}, d);
    params.get("sgp.embed.bias", {d}, d);
    set_values(params, "sgp.embed.weight", identity_matrix(d));
    set_values(params, "sgp.embed.bias", std::vector<double>(d, 0.0));
    Array out = enc::sgp_forward(feats, graph.stages[0], 1, params, "sgp");
    REQUIRE(out.rows() == n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            REQUIRE(out.value()[i * d + j] == fv[graph.stages[0].fps[i] * d + j]);
}

TEST_CASE("sgp: constant features give one shared embedded row") {
    const std::size_t n = 12, d = 3;
    synth::PointCloud pc = random_cloud(n, 41);
    Array feats = Array::from({n, d}, std::vector<double>(n * d, 0.6));
    enc::HierarchyConfig cfg;
    cfg.L = 1;
    cfg.D = d;
    cfg.n_q = {5};
    cfg.k = 4;
    const auto graph = enc::build_point_graph(pc.coords, cfg);
    ad::ParamStore params(9);
    Array out = enc::sgp_forward(feats, graph.stages[0], 4, params, "sgp");
    const auto w = params.all().at("sgp.embed.weight").value();
    const auto b = params.all().at("sgp.embed.bias").value();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = b[j];
            for (std::size_t c = 0; c < d; ++c) s += 0.6 * w[c * d + j];
            CHECK(out.value()[i * d + j] ==
                  doctest::Approx(s > 0 ? s : 0).epsilon(1e-14));
        }
}

TEST_CASE("patch_embed: zero image with zero bias, grid size, locality") {
    ad::ParamStore params(10);
    std::vector<double> img(16 * 16, 0.0);
    Array t = enc::patch_embed(img.data(), 16, 4, 5, params, "pe");
    CHECK(t.rows() == 16);  // 4x4 grid
    set_values(params, "pe.bias", std::vector<double>(5, 0.0));
    Array t0 = enc::patch_embed(img.data(), 16, 4, 5, params, "pe");
    for (double v : t0.value()) CHECK(v == 0.0);

    // two images differing inside one patch differ only at that token
    rng::SplitMix64 g(1);
    for (double& v : img) v = g.uniform01();
    auto img2 = img;
    img2[5 * 16 + 9] += 0.5;  // patch row 1, col 2 -> token 6
    Array a = enc::patch_embed(img.data(), 16, 4, 5, params, "pe");
    Array b = enc::patch_embed(img2.data(), 16, 4, 5, params, "pe");
    for (std::size_t tok = 0; tok < 16; ++tok) {
        const bool differs =
            std::memcmp(a.value().data() + tok * 5, b.value().data() + tok * 5,
                        5 * sizeof(double)) != 0;
        CHECK(differs == (tok == 6));
    }

    CHECK_THROWS_AS(enc::patch_embed(img.data(), 16, 3, 5, params, "pe"),
                    std::invalid_argument);
}

TEST_CASE("view_scale_reduce: constant map, 6x6 -> 3x3, spike survives") {
    const std::size_t d = 4;
    ad::ParamStore params(11);
    Array constant = Array::from({36, d}, std::vector<double>(36 * d, 0.8));
    Array r = enc::view_scale_reduce(constant, 6, 6, params, "vr");
    REQUIRE(r.rows() == 9);
    const auto w = params.all().at("vr.weight").value();
    const auto b = params.all().at("vr.bias").value();
    for (std::size_t j = 0; j < d; ++j) {
        double s = b[j];
        for (std::size_t c = 0; c < d; ++c) s += 0.8 * w[c * d + j];
        const double expect = s > 0 ? s : 0;
        for (std::size_t i = 0; i < 9; ++i)
            CHECK(r.value()[i * d + j] == doctest::Approx(expect).epsilon(1e-14));
    }

    // spike pixel max-pools into its quadrant
    set_values(params, "vr.weight", identity_matrix(d));
    set_values(params, "vr.bias", std::vector<double>(d, 0.0));
    std::vector<double> spiky(16 * d, 0.0);
    spiky[(2 * 4 + 3) * d + 1] = 7.0;  // grid (2,3) in a 4x4 map
    Array sp = enc::view_scale_reduce(Array::from({16, d}, spiky), 4, 4, params, "vr");
    REQUIRE(sp.rows() == 4);
    CHECK(sp.value()[(1 * 2 + 1) * d + 1] == 7.0);

    CHECK_THROWS_AS(enc::view_scale_reduce(Array::from({1, d}, std::vector<double>(d, 0.0)),
                                           1, 1, params, "vr"),
                    std::invalid_argument);
}

TEST_CASE("view_pool: identity for one view, elementwise max, permutation invariant") {
    Array a = Array::from({2, 2}, {1, 5, 2, -3});
    Array b = Array::from({2, 2}, {4, 0, 2, -1});
    CHECK(same_bits(enc::view_pool({a}).value(), a.value()));
    const auto m = enc::view_pool({a, b}).value();
    // scalar max oracle per cell
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(m[i] == std::max(a.value()[i], b.value()[i]));
    CHECK(same_bits(enc::view_pool({b, a}).value(), m));
}

TEST_CASE("view hierarchy: token counts, g_v, view-permutation invariance") {
    synth::ShapeSpec spec;
    spec.class_id = static_cast<int>(synth::ShapeKind::torus);
    const auto pc =
        synth::sample_surface_points(synth::generate_shape(spec), 128, 3, 0.0);
    const auto views = synth::render_depth_views(pc, 4, 16);

    enc::HierarchyConfig cfg;
    cfg.L = 3;
    cfg.D = 8;
    cfg.patch = 2;
    cfg.n_views = 4;
    ad::ParamStore params(12);
    const auto vh = enc::build_view_hierarchy(views, cfg, params);
    REQUIRE(vh.scales.size() == 3);
    CHECK(vh.scales[0].rows() == 16);
    CHECK(vh.scales[1].rows() == 4);
    CHECK(vh.scales[2].rows() == 1);
    CHECK(vh.g_v.shape() == std::vector<std::size_t>{1, 8});

    // permute the views
    synth::DepthViewSet shuffled = views;
    const std::size_t R2 = 16 * 16;
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    for (std::size_t j = 0; j < 4; ++j)
        std::memcpy(shuffled.images.data() + j * R2,
                    views.images.data() + perm[j] * R2, R2 * sizeof(double));
    const auto vh2 = enc::build_view_hierarchy(shuffled, cfg, params);
    for (std::size_t l = 0; l < 3; ++l)
        REQUIRE(same_bits(vh.scales[l].value(), vh2.scales[l].value()));
    REQUIRE(same_bits(vh.g_v.value(), vh2.g_v.value()));
}

TEST_CASE("point hierarchy: token counts, g_p width, point-permutation invariance") {
    synth::ShapeSpec spec;
    spec.class_id = static_cast<int>(synth::ShapeKind::capsule);
    auto pc = synth::sample_surface_points(synth::generate_shape(spec), 64, 5, 0.0);

    enc::HierarchyConfig cfg;
    cfg.L = 3;
    cfg.D = 8;
    cfg.n_q = {16, 8, 4};
    cfg.k = 6;
    ad::ParamStore params(13);
    const auto graph = enc::build_point_graph(pc.coords, cfg);
    const auto ph = enc::build_point_hierarchy(pc, cfg, params, graph);
    REQUIRE(ph.scales.size() == 3);
    CHECK(ph.scales[0].rows() == 16);
    CHECK(ph.scales[1].rows() == 8);
    CHECK(ph.scales[2].rows() == 4);
    CHECK(ph.g_p.shape() == std::vector<std::size_t>{1, 16});  // 2*D

    std::vector<std::size_t> perm(64);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng::SplitMix64 g(19);
    g.shuffle(perm);
    synth::PointCloud shuffled;
    shuffled.coords.resize(pc.coords.size());
    for (std::size_t i = 0; i < 64; ++i)
        for (int c = 0; c < 3; ++c)
            shuffled.coords[3 * i + c] = pc.coords[3 * perm[i] + c];
    const auto graph2 = enc::build_point_graph(shuffled.coords, cfg);
    const auto ph2 = enc::build_point_hierarchy(shuffled, cfg, params, graph2);
    REQUIRE(same_bits(ph.g_p.value(), ph2.g_p.value()));
    for (std::size_t l = 0; l < 3; ++l)
        REQUIRE(same_bits(ph.scales[l].value(), ph2.scales[l].value()));
}

TEST_CASE("point graph stages chain: sizes halve and knn stays in range") {
    auto pc = random_cloud(64, 99);
    enc::HierarchyConfig cfg;
    cfg.L = 3;
    cfg.D = 8;
    cfg.n_q = {32, 16, 8};
    cfg.k = 5;
    const auto graph = enc::build_point_graph(pc.coords, cfg);
    std::size_t prev = 64;
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(graph.stages[l].fps.size() == cfg.n_q[l]);
        CHECK(graph.stages[l].knn.size() == cfg.n_q[l] * cfg.k);
        for (std::size_t idx : graph.stages[l].knn) CHECK(idx < prev);
        prev = cfg.n_q[l];
    }
}
