#pragma once

#include "latformer/array.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace latformer::ad {

// Named parameter registry. A parameter is created on first get() with a
// uniform init in +-sqrt(1/fan_in) drawn from a stream keyed by (seed, name),
// so values do not depend on creation order. Names are unique; reusing a name
// with a different shape is an error.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    Array get(const std::string& name, std::vector<std::size_t> shape,
              std::size_t fan_in);

    bool has(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, Array>& all() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t total_values() const;

    void zero_grads();

    // Checkpoint: JSON map name -> {shape, row-major values}. Values survive a
    // round trip bit-exactly. Loading demands the exact name set.
    std::string to_json() const;
    void load_json_text(const std::string& text);
    void save_file(const std::string& path) const;
    void load_file(const std::string& path);

private:
    std::uint64_t seed_;
    std::map<std::string, Array> params_;
};

} // namespace latformer::ad
