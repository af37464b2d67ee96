#include "latformer/train.hpp"

#include "latformer/kernels.hpp"
#include "latformer/rng.hpp"

#include <cmath>
#include <map>
#include <numeric>

namespace latformer::net {

GraphCache::GraphCache(const ModelConfig& cfg,
                       const std::vector<synth::Sample>& samples) {
    graphs_.reserve(samples.size());
    for (const auto& s : samples)
        graphs_.push_back(enc::build_point_graph(s.cloud.coords, cfg.hier));
}

std::vector<Descriptor> predict_batch(Model& model,
                                      const std::vector<synth::Sample>& samples,
                                      const GraphCache& graphs) {
    std::vector<Descriptor> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        out.push_back(model.predict(samples[i], graphs.at(i)));
    return out;
}

namespace {

double test_accuracy(Model& model, const std::vector<synth::Sample>& samples,
                     const GraphCache& graphs) {
    if (samples.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (model.predict(samples[i], graphs.at(i)).predicted == samples[i].label)
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

} // namespace

TrainLog train_model(Model& model, const synth::Dataset& data, const TrainConfig& cfg,
                     std::uint64_t run_seed, const GraphCache& train_graphs,
                     const GraphCache& test_graphs) {
    ad::check(!data.train.empty(), "train: empty training split");
    ad::check(cfg.batch >= 1, "train: batch must be >= 1");

    auto& params = model.params();
    std::map<std::string, std::vector<double>> velocity;
    for (const auto& [name, p] : params.all())
        velocity.emplace(name, std::vector<double>(p.size(), 0.0));

    const std::uint64_t shuffle_seed = rng::derive(run_seed, "train-shuffle");
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainLog log;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            cfg.lr * std::pow(0.5, static_cast<double>(
                                       cfg.decay_every ? epoch / cfg.decay_every : 0));
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng::SplitMix64 shuffler(rng::derive(shuffle_seed, epoch));
        shuffler.shuffle(order);

        double loss_sum = 0.0;
        std::size_t train_correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            const double inv = 1.0 / static_cast<double>(stop - start);
            params.zero_grads();
            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t si = order[bi];
                const synth::Sample& sample = data.train[si];
                ForwardResult fr = model.forward(sample, train_graphs.at(si));
                ad::Array loss = ad::cross_entropy(fr.logits, {sample.label});
                loss_sum += loss.item();
                const auto& lv = fr.logits.value();
                std::size_t arg = 0;
                for (std::size_t c = 1; c < lv.size(); ++c)
                    if (lv[c] > lv[arg]) arg = c;
                if (static_cast<int>(arg) == sample.label) ++train_correct;
                ad::backward(ad::mul_scalar(loss, inv));
            }
            for (auto& [name, p] : params.all()) {
                auto& v = velocity[name];
                auto& value = const_cast<ad::Array&>(p).leaf_value();
                const auto& g = p.grad();
                kern::active().scale(cfg.momentum, v.data(), v.data(), v.size());
                kern::active().axpy(1.0, g.data(), v.data(), v.size());
                kern::active().axpy(-lr, v.data(), value.data(), value.size());
            }
        }

        EpochRow row;
        row.epoch = epoch;
        row.loss = loss_sum / static_cast<double>(order.size());
        row.train_oa =
            static_cast<double>(train_correct) / static_cast<double>(order.size());
        row.test_oa = test_accuracy(model, data.test, test_graphs);
        log.rows.push_back(row);
    }
    return log;
}

} // namespace latformer::net
