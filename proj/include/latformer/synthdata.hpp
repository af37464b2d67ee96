#pragma once

#include "latformer/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Procedural shape corpus: eight parametric generator kinds, area-uniform
// surface sampling (exact under anisotropic jitter via rejection on the local
// area distortion), orthographic depth splatting, and a binary on-disk cache.

namespace latformer::synth {

enum class ShapeKind : int {
    sphere = 0,
    box,
    cylinder,
    cone,
    torus,
    capsule,
    pyramid,
    cross,
};
inline constexpr std::size_t kShapeKinds = 8;
const char* shape_kind_name(ShapeKind k);

struct ShapeSpec {
    int class_id = 0;            // doubles as the generator kind
    double scale[3] = {1, 1, 1}; // per-axis jitter in [0.7, 1.3]
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct PointCloud {
    std::vector<double> coords;  // N x 3 row-major, unit-ball normalized
    std::size_t size() const { return coords.size() / 3; }
};

struct DepthViewSet {
    std::size_t n_views = 0;
    std::size_t resolution = 0;
    std::vector<double> images;    // n_views * R * R; 0 background, (0,1] depth
    std::vector<double> azimuths;  // radians, one per view
    const double* view(std::size_t j) const {
        return images.data() + j * resolution * resolution;
    }
};

// Area-uniform sampler over one jittered parametric surface. Anisotropic
// scaling distorts local area by |det S| * ||S^-T n||; sampling rejects on
// that factor so the draw stays area-uniform on the scaled surface.
class Surface {
public:
    Surface(ShapeKind kind, const double scale[3]);
    void sample(rng::SplitMix64& gen, double out_point[3]) const;
    ShapeKind kind() const { return kind_; }

private:
    ShapeKind kind_;
    double scale_[3];
    double min_scale_;
};

Surface generate_shape(const ShapeSpec& spec);

PointCloud sample_surface_points(const Surface& surface, std::size_t n,
                                 std::uint64_t seed, double noise_sigma = 0.0);

// Subtract the (order-independent) centroid, then scale the farthest point to
// unit norm.
void normalize_cloud(PointCloud& pc);

// Cameras at n_views equally spaced azimuths, 30 degree elevation,
// orthographic projection, nearest-point z-buffer. Depth is quantized to 1024
// levels mapped into (0,1]; background stays 0. The optional rotation (3x3
// row-major) is applied to each point first.
DepthViewSet render_depth_views(const PointCloud& pc, std::size_t n_views,
                                std::size_t resolution,
                                const double* rotation3x3 = nullptr);

std::vector<double> rotation_z(double angle);
// Uniform over SO(3) (Shoemake quaternion draw).
std::vector<double> random_rotation(rng::SplitMix64& gen);
PointCloud rotate_cloud(const PointCloud& pc, const std::vector<double>& rot3x3);

struct Sample {
    PointCloud cloud;
    DepthViewSet views;
    int label = 0;
};

struct DatasetConfig {
    std::size_t classes = 8;
    std::size_t per_class_train = 25;
    std::size_t per_class_test = 12;
    std::size_t n_points = 256;
    std::size_t n_views = 6;
    std::size_t resolution = 16;
    std::uint64_t seed = 42;
    double noise_sigma = 0.01;
};

struct Dataset {
    DatasetConfig cfg;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

Dataset make_dataset(const DatasetConfig& cfg);

// Binary split cache: header (magic, version, counts, extents), then labels as
// bytes, then float32 point blocks, then float32 depth blocks.
void save_split(const std::vector<Sample>& samples, std::size_t n_views,
                std::size_t resolution, const std::string& path);
std::vector<Sample> load_split(const std::string& path);

} // namespace latformer::synth
