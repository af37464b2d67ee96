#include "latformer/params.hpp"

#include "latformer/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace latformer::ad {

Array ParamStore::get(const std::string& name, std::vector<std::size_t> shape,
                      std::size_t fan_in) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        check(it->second.shape() == shape,
              "parameter '" + name + "' requested with shape " + shape_str(shape) +
                  " but exists with " + shape_str(it->second.shape()));
        return it->second;
    }
    check(fan_in > 0, "parameter '" + name + "': fan_in must be positive");
    std::size_t count = 1;
    for (std::size_t e : shape) count *= e;
    // He-scaled uniform for weights keeps relu activations at unit variance
    // through the stack; biases use the plain 1/fan_in bound.
    const bool is_weight = shape.size() >= 2;
    const double bound =
        std::sqrt((is_weight ? 6.0 : 1.0) / static_cast<double>(fan_in));
    rng::SplitMix64 g(rng::derive(seed_, name));
    std::vector<double> data(count);
    for (double& v : data) v = g.uniform(-bound, bound);
    Array a = Array::from(std::move(shape), std::move(data), /*requires_grad=*/true);
    a.zero_grad();
    params_.emplace(name, a);
    return a;
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& [_, a] : params_) n += a.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [_, a] : params_) a.zero_grad();
}

std::string ParamStore::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, a] : params_) {
        nlohmann::json entry;
        entry["shape"] = a.shape();
        entry["data"] = a.value();
        j[name] = std::move(entry);
    }
    return j.dump();
}

void ParamStore::load_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object()) throw std::runtime_error("checkpoint: top level must be an object");
    for (const auto& [name, _] : params_)
        if (!j.contains(name))
            throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    for (const auto& [name, entry] : j.items()) {
        auto it = params_.find(name);
        if (it == params_.end())
            throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != it->second.shape())
            throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " +
                                     shape_str(shape) + ", expected " +
                                     shape_str(it->second.shape()));
        auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != it->second.size())
            throw std::runtime_error("checkpoint: parameter '" + name + "' has wrong length");
        it->second.leaf_value() = std::move(data);
    }
}

void ParamStore::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << to_json() << "\n";
}

void ParamStore::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    load_json_text(text);
}

} // namespace latformer::ad
