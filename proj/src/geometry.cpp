#include "latformer/geometry.hpp"

#include "latformer/kernels.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace latformer::geom {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double sorted_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return kern::active().sum(v.data(), v.size()) / static_cast<double>(v.size());
}

// Lowest index wins ties; `taken` entries are skipped when provided.
std::size_t argmax_untaken(const std::vector<double>& v,
                           const std::vector<char>* taken) {
    std::size_t best = v.size();
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (taken && (*taken)[i]) continue;
        if (best == v.size() || v[i] > best_v) {
            best = i;
            best_v = v[i];
        }
    }
    return best;
}

} // namespace

Soa3::Soa3(const std::vector<double>& coords) {
    require(coords.size() % 3 == 0, "coords length must be a multiple of 3");
    const std::size_t n = coords.size() / 3;
    x.resize(n);
    y.resize(n);
    z.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = coords[3 * i];
        y[i] = coords[3 * i + 1];
        z[i] = coords[3 * i + 2];
    }
}

std::vector<std::size_t> farthest_point_sample(const std::vector<double>& coords,
                                               std::size_t m, std::size_t start) {
    const Soa3 p(coords);
    const std::size_t n = p.size();
    require(n > 0, "farthest_point_sample: empty point set");
    require(m >= 1 && m <= n, "farthest_point_sample: need 1 <= m <= " +
                                  std::to_string(n) + ", got m=" + std::to_string(m));
    require(start < n, "farthest_point_sample: start index out of range");

    std::vector<std::size_t> picked;
    picked.reserve(m);
    std::vector<char> taken(n, 0);
    std::vector<double> mind(n), tmp(n);

    picked.push_back(start);
    taken[start] = 1;
    kern::active().sqdist3(p.x.data(), p.y.data(), p.z.data(), n, p.x[start],
                           p.y[start], p.z[start], mind.data());
    while (picked.size() < m) {
        const std::size_t next = argmax_untaken(mind, &taken);
        picked.push_back(next);
        taken[next] = 1;
        kern::active().sqdist3(p.x.data(), p.y.data(), p.z.data(), n, p.x[next],
                               p.y[next], p.z[next], tmp.data());
        kern::active().min_inplace(mind.data(), tmp.data(), n);
    }
    return picked;
}

std::size_t canonical_fps_start(const std::vector<double>& coords) {
    const Soa3 p(coords);
    require(p.size() > 0, "canonical_fps_start: empty point set");
    const double cx = sorted_mean(p.x);
    const double cy = sorted_mean(p.y);
    const double cz = sorted_mean(p.z);
    std::vector<double> d(p.size());
    kern::active().sqdist3(p.x.data(), p.y.data(), p.z.data(), p.size(), cx, cy, cz,
                           d.data());
    return argmax_untaken(d, nullptr);
}

std::vector<std::size_t> knn_indices(const std::vector<double>& data,
                                     const std::vector<double>& queries,
                                     std::size_t k) {
    const Soa3 d(data);
    const Soa3 q(queries);
    const std::size_t n = d.size();
    require(k >= 1 && k <= n,
            "knn_indices: need 1 <= k <= " + std::to_string(n) + ", got k=" +
                std::to_string(k));

    std::vector<std::size_t> out;
    out.reserve(q.size() * k);
    std::vector<double> dist(n);
    std::vector<std::size_t> idx(n);
    for (std::size_t qi = 0; qi < q.size(); ++qi) {
        kern::active().sqdist3(d.x.data(), d.y.data(), d.z.data(), n, q.x[qi],
                               q.y[qi], q.z[qi], dist.data());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const auto cmp = [&dist](std::size_t a, std::size_t b) {
            return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
        };
        std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), cmp);
        std::sort(idx.begin(), idx.begin() + k, cmp);
        out.insert(out.end(), idx.begin(), idx.begin() + k);
    }
    return out;
}

} // namespace latformer::geom
