#include "latformer/synthdata.hpp"

#include "latformer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace latformer::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kElevation = kPi / 6.0;  // 30 degrees
constexpr int kDepthLevels = 1024;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

struct BasePoint {
    double p[3];
    double n[3];  // outward unit normal of the unscaled shape
};

void unit_sphere_dir(rng::SplitMix64& g, double out[3]) {
    const double z = 2.0 * g.uniform01() - 1.0;
    const double t = 2.0 * kPi * g.uniform01();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    out[0] = r * std::cos(t);
    out[1] = r * std::sin(t);
    out[2] = z;
}

// Area-weighted face pick + uniform draw on an axis-aligned box surface.
BasePoint sample_box_surface(rng::SplitMix64& g, double hx, double hy, double hz) {
    const double ax = hy * hz, ay = hx * hz, az = hx * hy;  // per-face-pair weight
    const double total = ax + ay + az;
    double u = g.uniform01() * total;
    int axis = 0;
    if (u < ax) {
        axis = 0;
    } else if (u < ax + ay) {
        axis = 1;
    } else {
        axis = 2;
    }
    const double sign = g.uniform01() < 0.5 ? -1.0 : 1.0;
    const double h[3] = {hx, hy, hz};
    BasePoint b{};
    for (int c = 0; c < 3; ++c) {
        if (c == axis) {
            b.p[c] = sign * h[c];
            b.n[c] = sign;
        } else {
            b.p[c] = g.uniform(-h[c], h[c]);
            b.n[c] = 0.0;
        }
    }
    return b;
}

void disk_point(rng::SplitMix64& g, double radius, double& x, double& y) {
    const double r = radius * std::sqrt(g.uniform01());
    const double t = 2.0 * kPi * g.uniform01();
    x = r * std::cos(t);
    y = r * std::sin(t);
}

BasePoint sample_sphere(rng::SplitMix64& g) {
    BasePoint b{};
    unit_sphere_dir(g, b.p);
    std::memcpy(b.n, b.p, sizeof(b.n));
    return b;
}

// Proportions alias the kinds into globally confusable pairs whose
// within-pair difference is local: cylinder/capsule share a bounding aspect
// (flat vs rounded caps), cone/pyramid share base and height (edges), the
// fat torus is a dimpled disk next to a squashed sphere, and the wide cross
// is a box with notched corners.
BasePoint sample_cylinder(rng::SplitMix64& g) {
    const double r = 0.3, hh = 0.5;
    const double lateral = 2.0 * kPi * r * (2.0 * hh);
    const double caps = 2.0 * kPi * r * r;
    BasePoint b{};
    if (g.uniform01() * (lateral + caps) < lateral) {
        const double t = 2.0 * kPi * g.uniform01();
        b.p[0] = r * std::cos(t);
        b.p[1] = r * std::sin(t);
        b.p[2] = g.uniform(-hh, hh);
        b.n[0] = std::cos(t);
        b.n[1] = std::sin(t);
    } else {
        const double sign = g.uniform01() < 0.5 ? -1.0 : 1.0;
        disk_point(g, r, b.p[0], b.p[1]);
        b.p[2] = sign * hh;
        b.n[2] = sign;
    }
    return b;
}

BasePoint sample_cone(rng::SplitMix64& g) {
    const double r = 0.5, h = 1.0;
    const double slant = std::sqrt(r * r + h * h);
    const double lateral = kPi * r * slant;
    const double base = kPi * r * r;
    BasePoint b{};
    if (g.uniform01() * (lateral + base) < lateral) {
        const double s = std::sqrt(g.uniform01());  // fraction of slant from apex
        const double t = 2.0 * kPi * g.uniform01();
        b.p[0] = r * s * std::cos(t);
        b.p[1] = r * s * std::sin(t);
        b.p[2] = 0.5 - s * h;
        b.n[0] = h * std::cos(t) / slant;
        b.n[1] = h * std::sin(t) / slant;
        b.n[2] = r / slant;
    } else {
        disk_point(g, r, b.p[0], b.p[1]);
        b.p[2] = -0.5;
        b.n[2] = -1.0;
    }
    return b;
}

BasePoint sample_torus(rng::SplitMix64& g) {
    const double R = 0.26, r = 0.24;
    const double theta = 2.0 * kPi * g.uniform01();
    double phi;
    // Area element scales with (R + r cos phi); rejection keeps it uniform.
    for (;;) {
        phi = 2.0 * kPi * g.uniform01();
        if (g.uniform01() * (R + r) < R + r * std::cos(phi)) break;
    }
    BasePoint b{};
    const double ring = R + r * std::cos(phi);
    b.p[0] = ring * std::cos(theta);
    b.p[1] = ring * std::sin(theta);
    b.p[2] = r * std::sin(phi);
    b.n[0] = std::cos(phi) * std::cos(theta);
    b.n[1] = std::cos(phi) * std::sin(theta);
    b.n[2] = std::sin(phi);
    return b;
}

BasePoint sample_capsule(rng::SplitMix64& g) {
    const double r = 0.3, hh = 0.2;
    const double lateral = 2.0 * kPi * r * (2.0 * hh);
    const double sphere = 4.0 * kPi * r * r;
    BasePoint b{};
    if (g.uniform01() * (lateral + sphere) < lateral) {
        const double t = 2.0 * kPi * g.uniform01();
        b.p[0] = r * std::cos(t);
        b.p[1] = r * std::sin(t);
        b.p[2] = g.uniform(-hh, hh);
        b.n[0] = std::cos(t);
        b.n[1] = std::sin(t);
    } else {
        double d[3];
        unit_sphere_dir(g, d);
        const double sign = d[2] >= 0.0 ? 1.0 : -1.0;
        b.p[0] = r * d[0];
        b.p[1] = r * d[1];
        b.p[2] = r * d[2] + sign * hh;
        std::memcpy(b.n, d, sizeof(b.n));
    }
    return b;
}

BasePoint sample_pyramid(rng::SplitMix64& g) {
    // Square base side 1 at z=-0.5, apex at (0,0,0.5).
    const double side_area = std::sqrt(1.25) / 2.0;  // each of 4 triangles
    const double base_area = 1.0;
    const double total = base_area + 4.0 * side_area;
    BasePoint b{};
    double u = g.uniform01() * total;
    if (u < base_area) {
        b.p[0] = g.uniform(-0.5, 0.5);
        b.p[1] = g.uniform(-0.5, 0.5);
        b.p[2] = -0.5;
        b.n[2] = -1.0;
        return b;
    }
    const int face = std::min<int>(3, static_cast<int>((u - base_area) / side_area));
    // Face 0 spans the +x edge; the rest are 90-degree rotations in xy.
    const double A[3] = {0.5, -0.5, -0.5};
    const double B[3] = {0.5, 0.5, -0.5};
    const double C[3] = {0.0, 0.0, 0.5};
    const double r1 = std::sqrt(g.uniform01());
    const double r2 = g.uniform01();
    double p[3], n0[3];
    for (int c = 0; c < 3; ++c)
        p[c] = (1.0 - r1) * A[c] + r1 * (1.0 - r2) * B[c] + r1 * r2 * C[c];
    // Outward normal of face 0 is (1, 0, 0.5)/|.|.
    const double inv = 1.0 / std::sqrt(1.25);
    n0[0] = inv;
    n0[1] = 0.0;
    n0[2] = 0.5 * inv;
    // Exact 90-degree xy rotations by coordinate shuffling.
    auto rot90 = [](double v[3], int times) {
        for (int t = 0; t < times; ++t) {
            const double x = v[0];
            v[0] = -v[1];
            v[1] = x;
        }
    };
    rot90(p, face);
    rot90(n0, face);
    std::memcpy(b.p, p, sizeof(b.p));
    std::memcpy(b.n, n0, sizeof(b.n));
    return b;
}

bool inside_bar(const double p[3], const double h[3]) {
    return std::abs(p[0]) < h[0] && std::abs(p[1]) < h[1] && std::abs(p[2]) < h[2];
}

BasePoint sample_cross(rng::SplitMix64& g) {
    const double w = 0.33;
    const double half[3][3] = {{0.5, w, w}, {w, 0.5, w}, {w, w, 0.5}};
    for (;;) {
        const int bar = static_cast<int>(g.bounded(3));
        BasePoint b = sample_box_surface(g, half[bar][0], half[bar][1], half[bar][2]);
        const int o1 = (bar + 1) % 3, o2 = (bar + 2) % 3;
        if (inside_bar(b.p, half[o1]) || inside_bar(b.p, half[o2])) continue;
        return b;
    }
}

BasePoint sample_base(ShapeKind kind, rng::SplitMix64& g) {
    switch (kind) {
    case ShapeKind::sphere: return sample_sphere(g);
    case ShapeKind::box: return sample_box_surface(g, 0.5, 0.5, 0.5);
    case ShapeKind::cylinder: return sample_cylinder(g);
    case ShapeKind::cone: return sample_cone(g);
    case ShapeKind::torus: return sample_torus(g);
    case ShapeKind::capsule: return sample_capsule(g);
    case ShapeKind::pyramid: return sample_pyramid(g);
    case ShapeKind::cross: return sample_cross(g);
    }
    throw std::invalid_argument("unknown shape kind " +
                                std::to_string(static_cast<int>(kind)));
}

} // namespace

const char* shape_kind_name(ShapeKind k) {
    switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::cone: return "cone";
    case ShapeKind::torus: return "torus";
    case ShapeKind::capsule: return "capsule";
    case ShapeKind::pyramid: return "pyramid";
    case ShapeKind::cross: return "cross";
    }
    return "?";
}

Surface::Surface(ShapeKind kind, const double scale[3]) : kind_(kind) {
    require(static_cast<int>(kind) >= 0 &&
                static_cast<int>(kind) < static_cast<int>(kShapeKinds),
            "unknown shape kind " + std::to_string(static_cast<int>(kind)));
    for (int c = 0; c < 3; ++c) {
        require(scale[c] > 0.0, "shape scale must be positive");
        scale_[c] = scale[c];
    }
    min_scale_ = std::min({scale_[0], scale_[1], scale_[2]});
}

void Surface::sample(rng::SplitMix64& g, double out_point[3]) const {
    for (;;) {
        const BasePoint b = sample_base(kind_, g);
        // ||S^-T n|| * min(s) is the acceptance probability (<= 1).
        const double wx = b.n[0] / scale_[0];
        const double wy = b.n[1] / scale_[1];
        const double wz = b.n[2] / scale_[2];
        const double w = std::sqrt(wx * wx + wy * wy + wz * wz);
        if (g.uniform01() >= w * min_scale_) continue;
        for (int c = 0; c < 3; ++c) out_point[c] = b.p[c] * scale_[c];
        return;
    }
}

Surface generate_shape(const ShapeSpec& spec) {
    return Surface(static_cast<ShapeKind>(spec.class_id), spec.scale);
}

PointCloud sample_surface_points(const Surface& surface, std::size_t n,
                                 std::uint64_t seed, double noise_sigma) {
    require(n >= 4, "sample_surface_points: need n >= 4");
    rng::SplitMix64 g(rng::derive(seed, "surface-points"));
    PointCloud pc;
    pc.coords.resize(n * 3);
    double p[3];
    for (std::size_t i = 0; i < n; ++i) {
        surface.sample(g, p);
        for (int c = 0; c < 3; ++c) {
            double v = p[c];
            if (noise_sigma > 0.0) v += noise_sigma * g.gaussian();
            pc.coords[3 * i + c] = v;
        }
    }
    normalize_cloud(pc);
    return pc;
}

void normalize_cloud(PointCloud& pc) {
    const std::size_t n = pc.size();
    require(n > 0, "normalize_cloud: empty cloud");
    // Sorted per-coordinate accumulation keeps the centroid independent of
    // point order.
    std::vector<double> col(n);
    double centroid[3];
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n; ++i) col[i] = pc.coords[3 * i + c];
        std::sort(col.begin(), col.end());
        centroid[c] = kern::active().sum(col.data(), n) / static_cast<double>(n);
    }
    double max_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) {
            pc.coords[3 * i + c] -= centroid[c];
            sq += pc.coords[3 * i + c] * pc.coords[3 * i + c];
        }
        max_sq = std::max(max_sq, sq);
    }
    if (max_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(max_sq);
        for (double& v : pc.coords) v *= inv;
    }
}

DepthViewSet render_depth_views(const PointCloud& pc, std::size_t n_views,
                                std::size_t resolution, const double* rot) {
    require(pc.size() > 0, "render_depth_views: empty cloud");
    require(n_views >= 1, "render_depth_views: need at least one view");
    require(resolution >= 8, "render_depth_views: resolution must be >= 8");
    const std::size_t R = resolution;
    DepthViewSet out;
    out.n_views = n_views;
    out.resolution = R;
    out.images.assign(n_views * R * R, 0.0);
    out.azimuths.resize(n_views);

    const double se = std::sin(kElevation), ce = std::cos(kElevation);
    std::vector<int> level(R * R);
    for (std::size_t j = 0; j < n_views; ++j) {
        const double az = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n_views);
        out.azimuths[j] = az;
        const double ca = std::cos(az), sa = std::sin(az);
        const double dir[3] = {ce * ca, ce * sa, se};
        const double right[3] = {-sa, ca, 0.0};
        const double up[3] = {-se * ca, -se * sa, ce};

        std::fill(level.begin(), level.end(), 0);
        double* img = out.images.data() + j * R * R;
        for (std::size_t i = 0; i < pc.size(); ++i) {
            const double* p0 = pc.coords.data() + 3 * i;
            double q[3];
            if (rot) {
                for (int r = 0; r < 3; ++r)
                    q[r] = rot[3 * r] * p0[0] + rot[3 * r + 1] * p0[1] +
                           rot[3 * r + 2] * p0[2];
            } else {
                q[0] = p0[0];
                q[1] = p0[1];
                q[2] = p0[2];
            }
            const double x = right[0] * q[0] + right[1] * q[1] + right[2] * q[2];
            const double y = up[0] * q[0] + up[1] * q[1] + up[2] * q[2];
            const double depth = dir[0] * q[0] + dir[1] * q[1] + dir[2] * q[2];

            const auto pix = [R](double v) {
                const long idx = static_cast<long>(std::floor((v + 1.0) * 0.5 *
                                                              static_cast<double>(R)));
                return static_cast<std::size_t>(
                    std::clamp<long>(idx, 0, static_cast<long>(R) - 1));
            };
            const std::size_t ix = pix(x), iy = pix(y);
            const double raw = std::clamp((depth + 1.0) * 0.5, 0.0, 1.0);
            const int lvl = 1 + std::min(kDepthLevels - 2,
                                         static_cast<int>(raw * (kDepthLevels - 1)));
            int& cell = level[iy * R + ix];
            if (lvl > cell) {  // nearest wins; the first point keeps ties
                cell = lvl;
                img[iy * R + ix] =
                    static_cast<double>(lvl) / static_cast<double>(kDepthLevels);
            }
        }
    }
    return out;
}

std::vector<double> rotation_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0};
}

std::vector<double> random_rotation(rng::SplitMix64& gen) {
    const double u1 = gen.uniform01(), u2 = gen.uniform01(), u3 = gen.uniform01();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const double qx = a * std::sin(2.0 * kPi * u2);
    const double qy = a * std::cos(2.0 * kPi * u2);
    const double qz = b * std::sin(2.0 * kPi * u3);
    const double qw = b * std::cos(2.0 * kPi * u3);
    return {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw),
            2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw),
            2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)};
}

PointCloud rotate_cloud(const PointCloud& pc, const std::vector<double>& rot) {
    PointCloud out;
    out.coords.resize(pc.coords.size());
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const double* p = pc.coords.data() + 3 * i;
        for (int r = 0; r < 3; ++r)
            out.coords[3 * i + r] =
                rot[3 * r] * p[0] + rot[3 * r + 1] * p[1] + rot[3 * r + 2] * p[2];
    }
    return out;
}

Dataset make_dataset(const DatasetConfig& cfg) {
    require(cfg.classes >= 1 && cfg.classes <= kShapeKinds,
            "make_dataset: classes must be in [1, " + std::to_string(kShapeKinds) +
                "]");
    require(cfg.per_class_train >= 1 && cfg.per_class_test >= 1,
            "make_dataset: per-class counts must be >= 1");
    Dataset ds;
    ds.cfg = cfg;
    const auto build_split = [&cfg](const char* split, std::size_t per_class,
                                    std::vector<Sample>& out) {
        for (std::size_t c = 0; c < cfg.classes; ++c) {
            for (std::size_t i = 0; i < per_class; ++i) {
                const std::string tag = std::string("corpus/") + split + "/c" +
                                        std::to_string(c) + "/i" + std::to_string(i);
                const std::uint64_t sample_seed = rng::derive(cfg.seed, tag);
                ShapeSpec spec;
                spec.class_id = static_cast<int>(c);
                spec.seed = sample_seed;
                spec.noise_sigma = cfg.noise_sigma;
                rng::SplitMix64 jitter(rng::derive(sample_seed, "jitter"));
                for (int a = 0; a < 3; ++a) spec.scale[a] = jitter.uniform(0.7, 1.3);
                const Surface surf = generate_shape(spec);
                Sample s;
                s.label = static_cast<int>(c);
                s.cloud = sample_surface_points(surf, cfg.n_points,
                                                rng::derive(sample_seed, "cloud"),
                                                cfg.noise_sigma);
                s.views = render_depth_views(s.cloud, cfg.n_views, cfg.resolution);
                out.push_back(std::move(s));
            }
        }
    };
    build_split("train", cfg.per_class_train, ds.train);
    build_split("test", cfg.per_class_test, ds.test);
    return ds;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

constexpr std::uint32_t kSplitMagic = 0x4c544653u;  // "LTFS"

} // namespace

void save_split(const std::vector<Sample>& samples, std::size_t n_views,
                std::size_t resolution, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::size_t n_points = samples.empty() ? 0 : samples[0].cloud.size();
    write_pod<std::uint32_t>(out, kSplitMagic);
    write_pod<std::uint32_t>(out, 1);  // version
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(n_points));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(n_views));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(resolution));
    for (const Sample& s : samples)
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(s.label));
    for (const Sample& s : samples)
        for (double v : s.cloud.coords) write_pod<float>(out, static_cast<float>(v));
    for (const Sample& s : samples)
        for (double v : s.views.images) write_pod<float>(out, static_cast<float>(v));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<Sample> load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open split '" + path + "'");
    if (read_pod<std::uint32_t>(in) != kSplitMagic)
        throw std::runtime_error("'" + path + "' is not a corpus split file");
    if (read_pod<std::uint32_t>(in) != 1)
        throw std::runtime_error("'" + path + "' has an unsupported version");
    const std::size_t n = read_pod<std::uint32_t>(in);
    const std::size_t n_points = read_pod<std::uint32_t>(in);
    const std::size_t n_views = read_pod<std::uint32_t>(in);
    const std::size_t resolution = read_pod<std::uint32_t>(in);
    std::vector<Sample> samples(n);
    for (std::size_t i = 0; i < n; ++i)
        samples[i].label = read_pod<std::uint8_t>(in);
    for (std::size_t i = 0; i < n; ++i) {
        samples[i].cloud.coords.resize(n_points * 3);
        for (double& v : samples[i].cloud.coords) v = read_pod<float>(in);
    }
    const double pi = kPi;
    for (std::size_t i = 0; i < n; ++i) {
        auto& vs = samples[i].views;
        vs.n_views = n_views;
        vs.resolution = resolution;
        vs.images.resize(n_views * resolution * resolution);
        for (double& v : vs.images) v = read_pod<float>(in);
        vs.azimuths.resize(n_views);
        for (std::size_t j = 0; j < n_views; ++j)
            vs.azimuths[j] = 2.0 * pi * static_cast<double>(j) /
                             static_cast<double>(n_views);
    }
    if (!in) throw std::runtime_error("truncated split file '" + path + "'");
    return samples;
}

} // namespace latformer::synth
