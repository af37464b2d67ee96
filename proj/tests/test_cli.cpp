#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latformer/config.hpp"
#include "latformer/kernels.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace latformer;
namespace fs = std::filesystem;

namespace {

const char* kMicroConfig = R"json({
  "seed": 3,
  "out_dir": "%OUT%",
  "dataset": {"classes": 3, "per_class_train": 3, "per_class_test": 2,
              "n_points": 32, "n_views": 2, "resolution": 8, "seed": 5,
              "noise_sigma": 0.01},
  "model": {"D": 8, "H": 2, "L": 2, "patch": 2, "n_q": [16, 8], "k": 8},
  "training": {"epochs": 2, "lr": 0.05, "batch": 4}
})json";

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_micro_config(const fs::path& dir, const std::string& out_dir) {
    std::string text = kMicroConfig;
    text.replace(text.find("%OUT%"), 5, out_dir);
    const auto p = dir / "config.json";
    std::ofstream out(p);
    out << text;
    return p.string();
}

} // namespace

TEST_CASE("minimal config fills the documented defaults") {
    const auto cfg = cli::config_from_json_text("{}");
    CHECK(cfg.model.hier.D == 64);
    CHECK(cfg.model.heads == 4);
    CHECK(cfg.model.beta == 0.3);
    CHECK(cfg.model.eps == 1e-5);
    CHECK(cfg.model.hier.k == 20);
    CHECK(cfg.model.hier.L == 3);
    CHECK(cfg.model.hier.n_q == std::vector<std::size_t>{64, 32, 16});
    CHECK(cfg.model.strategy == net::Strategy::latformer);
    CHECK(cfg.model.scale_pairs ==
          std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 2}, {3, 3}});
    CHECK(cfg.dataset.classes == 8);
    CHECK(cfg.training.momentum == 0.9);
    CHECK(cfg.training.batch == 16);
}

TEST_CASE("config validation names the offending field") {
    CHECK_THROWS_WITH_AS(
        cli::config_from_json_text(R"({"model": {"beta": 1.5}})"),
        doctest::Contains("model.beta"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        cli::config_from_json_text(R"({"modle": {}})"),
        doctest::Contains("modle"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        cli::config_from_json_text(R"({"model": {"n_q": [64, 64, 16]}})"),
        doctest::Contains("model.n_q"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        cli::config_from_json_text(R"({"dataset": {"classes": 20}})"),
        doctest::Contains("dataset.classes"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        cli::config_from_json_text(R"({"model": {"H": 3}})"),
        doctest::Contains("model.H"), std::invalid_argument);
    // parse errors carry position info from the json parser
    CHECK_THROWS_AS(cli::config_from_json_text("{oops"), std::invalid_argument);
    // config round trip through its own serializer
    const auto cfg = cli::config_from_json_text("{}");
    const auto again = cli::config_from_json_text(cli::config_to_json(cfg));
    CHECK(again.model.hier.n_q == cfg.model.hier.n_q);
}

TEST_CASE("unknown subcommand exits 2, help exits 0") {
    CHECK(cli::run_command({"frobnicate"}) == 2);
    CHECK(cli::run_command({"--help"}) == 0);
    CHECK(cli::run_command({"train"}) == 2);  // missing required -c
}

TEST_CASE("train/eval/retrieve/export-gates/make-data round trip") {
    TempDir tmp("lf_cli_roundtrip");
    const auto out = (tmp.path / "run").string();
    const auto cfgp = write_micro_config(tmp.path, out);

    REQUIRE(cli::run_command({"train", "-c", cfgp}) == 0);
    REQUIRE(fs::exists(out + "/checkpoint.json"));
    REQUIRE(fs::exists(out + "/training_log.csv"));
    REQUIRE(fs::exists(out + "/metrics.csv"));

    const std::string log = slurp(out + "/training_log.csv");
    CHECK(log.rfind("epoch,loss,train_oa,test_oa\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 3);  // header + 2 epochs

    REQUIRE(cli::run_command({"eval", "-c", cfgp}) == 0);
    const std::string metrics = slurp(out + "/metrics.csv");
    CHECK(metrics.rfind("strategy,seed,oa,macc,map\n", 0) == 0);
    CHECK(metrics.find("latformer,3,") != std::string::npos);

    REQUIRE(cli::run_command({"retrieve", "-c", cfgp}) == 0);
    REQUIRE(fs::exists(out + "/retrieval.csv"));
    REQUIRE(fs::exists(out + "/rankings.csv"));

    REQUIRE(cli::run_command({"export-gates", "-c", cfgp, "--sample", "1"}) == 0);
    REQUIRE(fs::exists(out + "/gates"));

    REQUIRE(cli::run_command({"make-data", "-c", cfgp}) == 0);
    REQUIRE(fs::exists(out + "/train.split"));
    REQUIRE(fs::exists(out + "/test.split"));
    const auto split = synth::load_split(out + "/test.split");
    CHECK(split.size() == 6);
}

TEST_CASE("identical config and seed give bitwise-identical outputs") {
    TempDir tmp("lf_cli_determinism");
    const auto out_a = (tmp.path / "a").string();
    const auto out_b = (tmp.path / "b").string();
    const auto cfgp = write_micro_config(tmp.path, "unused");

    REQUIRE(cli::run_command({"train", "-c", cfgp, "--out", out_a}) == 0);
    REQUIRE(cli::run_command({"train", "-c", cfgp, "--out", out_b}) == 0);
    for (const char* f : {"/checkpoint.json", "/training_log.csv", "/metrics.csv"})
        REQUIRE(slurp(out_a + f) == slurp(out_b + f));

    // a different seed changes the results
    const auto out_c = (tmp.path / "c").string();
    REQUIRE(cli::run_command({"train", "-c", cfgp, "--out", out_c, "--seed", "4"}) ==
            0);
    CHECK(slurp(out_a + "/checkpoint.json") != slurp(out_c + "/checkpoint.json"));

    // make-data twice: identical split files
    REQUIRE(cli::run_command({"make-data", "-c", cfgp, "--out", out_a}) == 0);
    REQUIRE(cli::run_command({"make-data", "-c", cfgp, "--out", out_b}) == 0);
    REQUIRE(slurp(out_a + "/train.split") == slurp(out_b + "/train.split"));
}

TEST_CASE("gradcheck subcommand passes on the micro config") {
    TempDir tmp("lf_cli_gradcheck");
    const auto cfgp = write_micro_config(tmp.path, (tmp.path / "out").string());
    CHECK(cli::run_command({"gradcheck", "-c", cfgp}) == 0);
}

TEST_CASE("ablate writes one row per cell and seed") {
    TempDir tmp("lf_cli_ablate");
    const auto out = (tmp.path / "run").string();
    const auto cfgp = write_micro_config(tmp.path, out);
    REQUIRE(cli::run_command({"ablate", "-c", cfgp, "--grid", "beta", "--seeds",
                              "2"}) == 0);
    const std::string csv = slurp(out + "/ablation.csv");
    CHECK(csv.rfind("axis,value,seed,oa,macc,map\n", 0) == 0);
    // 6 beta values x 2 seeds
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 * 2);
    CHECK(csv.find("beta,0.29999999999999999,3,") != std::string::npos);
}

TEST_CASE("scalar kernel override reproduces the default backend bitwise") {
    TempDir tmp("lf_cli_kernels");
    const auto out_a = (tmp.path / "a").string();
    const auto out_b = (tmp.path / "b").string();
    const auto cfgp = write_micro_config(tmp.path, "unused");
    REQUIRE(cli::run_command({"train", "-c", cfgp, "--out", out_a}) == 0);
    REQUIRE(cli::run_command({"train", "-c", cfgp, "--out", out_b, "--kernels",
                              "scalar"}) == 0);
    REQUIRE(slurp(out_a + "/checkpoint.json") == slurp(out_b + "/checkpoint.json"));
    REQUIRE(slurp(out_a + "/training_log.csv") == slurp(out_b + "/training_log.csv"));
    kern::set_backend(kern::Backend::scalar);
    kern::set_backend(kern::avx2_available() ? kern::Backend::avx2
                                             : kern::Backend::scalar);
}
