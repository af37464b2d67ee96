#pragma once

#include <cstddef>
#include <vector>

// Point-set selection primitives. Coordinates are n x 3 row-major doubles.
// Tie rules are part of the contract: every tie goes to the lowest index.

namespace latformer::geom {

struct Soa3 {
    std::vector<double> x, y, z;
    explicit Soa3(const std::vector<double>& coords_rowmajor);
    std::size_t size() const { return x.size(); }
};

// Greedy max-min selection. The start index is selected first; each following
// pick maximizes the squared distance to the already selected set.
std::vector<std::size_t> farthest_point_sample(const std::vector<double>& coords,
                                               std::size_t m, std::size_t start);

// Start rule used by the encoders: the point farthest from the centroid.
// The centroid is accumulated in sorted order per coordinate, so the result
// does not depend on point order (ties aside).
std::size_t canonical_fps_start(const std::vector<double>& coords);

// Row-major m x k matrix of indices into `data`, per query in ascending
// distance. A query coincident with a data point includes it.
std::vector<std::size_t> knn_indices(const std::vector<double>& data,
                                     const std::vector<double>& queries,
                                     std::size_t k);

} // namespace latformer::geom
