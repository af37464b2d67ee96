#include "latformer/config.hpp"

#include "latformer/gradcheck.hpp"
#include "latformer/kernels.hpp"
#include "latformer/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace latformer::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& body) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << body;
}

std::string log_csv(const net::TrainLog& log) {
    std::string body = "epoch,loss,train_oa,test_oa\n";
    for (const auto& r : log.rows)
        body += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.train_oa) +
                "," + fmt(r.test_oa) + "\n";
    return body;
}

std::string metrics_csv_header() { return "strategy,seed,oa,macc,map\n"; }

std::string metrics_csv_row(const ExperimentConfig& cfg, std::uint64_t seed,
                            const ev::Metrics& m) {
    return std::string(net::strategy_name(cfg.model.strategy)) + "," +
           std::to_string(seed) + "," + fmt(m.oa) + "," + fmt(m.macc) + "," +
           fmt(m.map) + "\n";
}

struct LoadedRun {
    ExperimentConfig cfg;
    synth::Dataset dataset;
    net::Model model;
    net::GraphCache train_graphs;
    net::GraphCache test_graphs;
};

LoadedRun load_run(const ExperimentConfig& cfg, const std::string& checkpoint) {
    synth::Dataset ds = synth::make_dataset(cfg.dataset);
    net::Model model(cfg.model, rng::derive(cfg.seed, "init"));
    model.params().load_file(checkpoint);
    net::GraphCache train_graphs(cfg.model, ds.train);
    net::GraphCache test_graphs(cfg.model, ds.test);
    return {cfg, std::move(ds), std::move(model), std::move(train_graphs),
            std::move(test_graphs)};
}

int cmd_train(const ExperimentConfig& cfg) {
    synth::Dataset ds = synth::make_dataset(cfg.dataset);
    net::GraphCache train_graphs(cfg.model, ds.train);
    net::GraphCache test_graphs(cfg.model, ds.test);

    net::Model model(cfg.model, rng::derive(cfg.seed, "init"));
    net::TrainLog log = net::train_model(model, ds, cfg.training,
                                         rng::derive(cfg.seed, "train"),
                                         train_graphs, test_graphs);
    ev::Metrics m = ev::evaluate_model(model, ds.test, test_graphs);

    fs::create_directories(cfg.out_dir);
    model.params().save_file((fs::path(cfg.out_dir) / "checkpoint.json").string());
    write_text((fs::path(cfg.out_dir) / "training_log.csv").string(), log_csv(log));
    write_text((fs::path(cfg.out_dir) / "metrics.csv").string(),
               metrics_csv_header() + metrics_csv_row(cfg, cfg.seed, m));
    std::cout << "trained " << net::strategy_name(cfg.model.strategy) << " seed "
              << cfg.seed << ": oa=" << fmt(m.oa) << " macc=" << fmt(m.macc)
              << " map=" << fmt(m.map) << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
    LoadedRun run = load_run(cfg, checkpoint);
    ev::Metrics m = ev::evaluate_model(run.model, run.dataset.test, run.test_graphs);
    write_text((fs::path(cfg.out_dir) / "metrics.csv").string(),
               metrics_csv_header() + metrics_csv_row(cfg, cfg.seed, m));
    std::cout << "oa=" << fmt(m.oa) << " macc=" << fmt(m.macc) << " map=" << fmt(m.map)
              << "\n";
    return 0;
}

int cmd_retrieve(const ExperimentConfig& cfg, const std::string& checkpoint) {
    LoadedRun run = load_run(cfg, checkpoint);
    const auto descriptors =
        net::predict_batch(run.model, run.dataset.test, run.test_graphs);
    std::vector<std::vector<double>> codes;
    std::vector<int> labels;
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
        codes.push_back(descriptors[i].retrieval_code);
        labels.push_back(run.dataset.test[i].label);
    }
    ev::RetrievalRun rr = ev::retrieval_map(codes, labels);

    std::string per_query = "query,label,ap\n";
    for (std::size_t q = 0; q < codes.size(); ++q)
        per_query += std::to_string(q) + "," + std::to_string(labels[q]) + "," +
                     fmt(rr.per_query_ap[q]) + "\n";
    write_text((fs::path(cfg.out_dir) / "retrieval.csv").string(), per_query);

    std::string rankings = "query,ranked_gallery_indices\n";
    for (std::size_t q = 0; q < rr.rankings.size(); ++q) {
        rankings += std::to_string(q) + ",";
        for (std::size_t r = 0; r < rr.rankings[q].size(); ++r) {
            if (r) rankings += ' ';
            rankings += std::to_string(rr.rankings[q][r]);
        }
        rankings += '\n';
    }
    write_text((fs::path(cfg.out_dir) / "rankings.csv").string(), rankings);
    std::cout << "map=" << fmt(rr.map) << " skipped=" << rr.skipped << "\n";
    return 0;
}

int cmd_make_data(const ExperimentConfig& cfg) {
    synth::Dataset ds = synth::make_dataset(cfg.dataset);
    fs::create_directories(cfg.out_dir);
    synth::save_split(ds.train, cfg.dataset.n_views, cfg.dataset.resolution,
                      (fs::path(cfg.out_dir) / "train.split").string());
    synth::save_split(ds.test, cfg.dataset.n_views, cfg.dataset.resolution,
                      (fs::path(cfg.out_dir) / "test.split").string());
    std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size()
              << " test samples\n";
    return 0;
}

int cmd_export_gates(const ExperimentConfig& cfg, const std::string& checkpoint,
                     std::size_t sample_index) {
    LoadedRun run = load_run(cfg, checkpoint);
    if (sample_index >= run.dataset.test.size())
        throw std::runtime_error("--sample out of range (test split has " +
                                 std::to_string(run.dataset.test.size()) +
                                 " samples)");
    const auto files =
        ev::export_gates(run.model, run.dataset.test[sample_index],
                         run.test_graphs.at(sample_index),
                         (fs::path(cfg.out_dir) / "gates").string());
    std::cout << "wrote " << files.size() << " gate files\n";
    return 0;
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();

    // End-to-end loss on one generated sample, checked against central
    // differences over a deterministic subset of parameter coordinates.
    synth::DatasetConfig dcfg = cfg.dataset;
    dcfg.per_class_train = 1;
    dcfg.per_class_test = 1;
    synth::Dataset ds = synth::make_dataset(dcfg);
    const synth::Sample& sample = ds.train[0];

    net::Model model(cfg.model, rng::derive(cfg.seed, "init"));
    const enc::PointGraph graph = model.make_graph(sample.cloud);
    std::vector<ad::Array> leaves;
    for (const auto& [_, p] : model.params().all()) leaves.push_back(p);
    const auto loss_fn = [&] {
        net::ForwardResult fr = model.forward(sample, graph);
        return ad::cross_entropy(fr.logits, {sample.label});
    };
    const ad::GradCheckReport end2end =
        ad::grad_check_leaves(loss_fn, leaves, 1e-5, 10.0, 1000, cfg.seed);

    // Isolated fusion block on random token matrices; x and y are checked too.
    laf::LafConfig lcfg;
    lcfg.d = cfg.model.hier.D;
    lcfg.heads = cfg.model.heads;
    lcfg.beta = cfg.model.beta;
    lcfg.eps = cfg.model.eps;
    lcfg.attention = cfg.model.attention;
    lcfg.pool = laf::Pool::max_concat_mean;
    rng::SplitMix64 g(rng::derive(cfg.seed, "laf-check"));
    const auto rand_tokens = [&](std::size_t rows) {
        std::vector<double> v(rows * lcfg.d);
        for (double& x : v) x = g.uniform(-1.0, 1.0);
        return ad::Array::from({rows, lcfg.d}, std::move(v), true);
    };
    ad::Array x = rand_tokens(12);
    ad::Array y = rand_tokens(10);
    ad::ParamStore laf_params(rng::derive(cfg.seed, "laf-params"));
    (void)laf::laf_forward(x, y, lcfg, laf_params, "laf.check");  // materialize
    std::vector<ad::Array> laf_leaves{x, y};
    for (const auto& [_, p] : laf_params.all()) laf_leaves.push_back(p);
    const auto laf_fn = [&] {
        return ad::sum_all(laf::laf_forward(x, y, lcfg, laf_params, "laf.check").pooled);
    };
    const ad::GradCheckReport laf_rep =
        ad::grad_check_leaves(laf_fn, laf_leaves, 1e-5, 10.0, 1200, cfg.seed + 1);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "gradcheck end_to_end: max_rel_err=" << fmt(end2end.max_rel_err)
              << " checked=" << end2end.checked << " skipped=" << end2end.skipped
              << "\n";
    std::cout << "gradcheck laf_forward: max_rel_err=" << fmt(laf_rep.max_rel_err)
              << " checked=" << laf_rep.checked << " skipped=" << laf_rep.skipped
              << "\n";
    std::cout << "gradcheck runtime_seconds=" << fmt(seconds) << "\n";
    return (end2end.max_rel_err <= 1e-4 && laf_rep.max_rel_err <= 1e-4) ? 0 : 1;
}

struct AblationCell {
    std::string value;
    ExperimentConfig cfg;
    bool new_dataset = false;  // dataset block differs from the base config
};

std::vector<AblationCell> build_axis(const ExperimentConfig& base,
                                     const std::string& axis) {
    std::vector<AblationCell> cells;
    const auto push = [&](const std::string& value, ExperimentConfig cfg,
                          bool new_dataset = false) {
        try {
            validate(cfg);
        } catch (const std::exception&) {
            return;  // grid values incompatible with the base config are dropped
        }
        cells.push_back({value, std::move(cfg), new_dataset});
    };
    if (axis == "strategy") {
        for (net::Strategy s : net::all_strategies()) {
            ExperimentConfig c = base;
            c.model.strategy = s;
            push(net::strategy_name(s), std::move(c));
        }
    } else if (axis == "beta") {
        for (double b : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9}) {
            ExperimentConfig c = base;
            c.model.beta = b;
            push(fmt(b), std::move(c));
        }
    } else if (axis == "H") {
        for (std::size_t h : {1, 2, 4, 8, 16}) {
            ExperimentConfig c = base;
            c.model.heads = h;
            push(std::to_string(h), std::move(c));
        }
    } else if (axis == "k") {
        for (std::size_t k : {5, 10, 15, 20, 25, 30}) {
            ExperimentConfig c = base;
            c.model.hier.k = k;
            push(std::to_string(k), std::move(c));
        }
    } else if (axis == "n_q") {
        for (double factor : {0.5, 1.0, 2.0}) {
            ExperimentConfig c = base;
            std::string label;
            for (std::size_t i = 0; i < c.model.hier.n_q.size(); ++i) {
                c.model.hier.n_q[i] = static_cast<std::size_t>(
                    static_cast<double>(c.model.hier.n_q[i]) * factor);
                if (i) label += "/";
                label += std::to_string(c.model.hier.n_q[i]);
            }
            push(label, std::move(c), false);
        }
    } else if (axis == "n_views") {
        for (std::size_t v : {3, 6, 12}) {
            ExperimentConfig c = base;
            c.dataset.n_views = v;
            c.model.hier.n_views = v;
            push(std::to_string(v), std::move(c), true);
        }
    } else if (axis == "scale_pairs") {
        using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;
        std::vector<Pairs> combos;
        if (base.model.hier.L == 3) {
            combos = {{{1, 1}},
                      {{1, 1}, {2, 2}},
                      {{1, 1}, {2, 2}, {3, 3}},
                      {{1, 2}, {2, 3}, {3, 1}},
                      {{1, 1}, {2, 3}, {3, 2}},
                      {{1, 3}, {2, 2}, {3, 1}}};
        } else {
            for (std::size_t l = 1; l <= base.model.hier.L; ++l) {
                Pairs p;
                for (std::size_t i = 1; i <= l; ++i) p.emplace_back(i, i);
                combos.push_back(std::move(p));
            }
        }
        for (const auto& combo : combos) {
            ExperimentConfig c = base;
            c.model.scale_pairs = combo;
            std::string label;  // comma-free so the CSV stays parseable
            for (auto [vm, pk] : combo) {
                if (!label.empty()) label += "+";
                label += "V" + std::to_string(vm) + "P" + std::to_string(pk);
            }
            push(label, std::move(c));
        }
    } else {
        throw std::invalid_argument(
            "unknown grid axis '" + axis +
            "' (expected strategy, beta, H, k, n_q, n_views or scale_pairs)");
    }
    return cells;
}

int cmd_ablate(const ExperimentConfig& base, const std::string& grid,
               std::size_t seeds) {
    std::vector<std::string> axes;
    std::string cur;
    for (char ch : grid + ",") {
        if (ch == ',') {
            if (!cur.empty()) axes.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (axes.empty()) throw std::invalid_argument("--grid needs at least one axis");

    synth::Dataset base_ds = synth::make_dataset(base.dataset);
    std::string body = "axis,value,seed,oa,macc,map\n";
    for (const auto& axis : axes) {
        for (const AblationCell& cell : build_axis(base, axis)) {
            synth::Dataset cell_ds;
            const synth::Dataset* ds = &base_ds;
            if (cell.new_dataset) {
                cell_ds = synth::make_dataset(cell.cfg.dataset);
                ds = &cell_ds;
            }
            net::GraphCache train_graphs(cell.cfg.model, ds->train);
            net::GraphCache test_graphs(cell.cfg.model, ds->test);
            for (std::size_t rep = 0; rep < seeds; ++rep) {
                const std::uint64_t run_seed = cell.cfg.seed + rep;
                RunResult r = run_experiment(cell.cfg, run_seed, ds, &train_graphs,
                                             &test_graphs);
                body += axis + "," + cell.value + "," + std::to_string(run_seed) +
                        "," + fmt(r.metrics.oa) + "," + fmt(r.metrics.macc) + "," +
                        fmt(r.metrics.map) + "\n";
                std::cout << axis << "=" << cell.value << " seed=" << run_seed
                          << " oa=" << fmt(r.metrics.oa) << " macc="
                          << fmt(r.metrics.macc) << " map=" << fmt(r.metrics.map)
                          << " (" << fmt(r.seconds) << "s)\n";
            }
        }
    }
    write_text((fs::path(base.out_dir) / "ablation.csv").string(), body);
    return 0;
}

} // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"point-cloud x multi-view fusion harness"};
    app.require_subcommand(1);

    std::string config_path, out_override, checkpoint, grid = "strategy",
                             kernels = "auto";
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    std::size_t seeds = 1, sample_index = 0;

    const auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* copt = sub->add_option("-c,--config", config_path, "experiment config (JSON)");
        if (needs_config) copt->required();
        sub->add_option("--seed", seed_override, "override the run seed")
            ->each([&](const std::string&) { have_seed = true; });
        sub->add_option("--out", out_override, "override the output directory");
        sub->add_option("--kernels", kernels, "kernel backend: auto, scalar or avx2")
            ->check(CLI::IsMember({"auto", "scalar", "avx2"}));
    };

    auto* train = app.add_subcommand("train", "train a model, write checkpoint + logs");
    add_common(train);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint path");
    auto* retrieve = app.add_subcommand("retrieve", "rank the test set by descriptor");
    add_common(retrieve);
    retrieve->add_option("--checkpoint", checkpoint, "checkpoint path");
    auto* ablate = app.add_subcommand("ablate", "grid runs, one CSV row per cell/seed");
    add_common(ablate);
    ablate->add_option("--grid", grid, "comma list of axes");
    ablate->add_option("--seeds", seeds, "replicates per cell");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(gradcheck);
    auto* gates = app.add_subcommand("export-gates", "dump gate matrices as CSV");
    add_common(gates);
    gates->add_option("--checkpoint", checkpoint, "checkpoint path");
    gates->add_option("--sample", sample_index, "test sample index");
    auto* makedata = app.add_subcommand("make-data", "write the corpus cache files");
    add_common(makedata);

    std::vector<std::string> argv_strings = {"latformer"};
    argv_strings.insert(argv_strings.end(), args.begin(), args.end());
    std::vector<char*> argv;
    argv.reserve(argv_strings.size());
    for (auto& s : argv_strings) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (kernels == "scalar") {
            kern::set_backend(kern::Backend::scalar);
        } else if (kernels == "avx2" && !kern::set_backend(kern::Backend::avx2)) {
            throw std::runtime_error("avx2 kernels are unavailable on this machine");
        }

        ExperimentConfig cfg = load_config(config_path);
        if (have_seed) cfg.seed = seed_override;
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (checkpoint.empty())
            checkpoint = (fs::path(cfg.out_dir) / "checkpoint.json").string();

        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg, checkpoint);
        if (retrieve->parsed()) return cmd_retrieve(cfg, checkpoint);
        if (ablate->parsed()) return cmd_ablate(cfg, grid, seeds);
        if (gradcheck->parsed()) return cmd_gradcheck(cfg);
        if (gates->parsed()) return cmd_export_gates(cfg, checkpoint, sample_index);
        if (makedata->parsed()) return cmd_make_data(cfg);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace latformer::cli
