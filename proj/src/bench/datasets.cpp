#include "cycond/bench/datasets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cycond/rng.hpp"

namespace cycond::bench {

namespace {

constexpr uint64_t kPinwheelStream = 201;
constexpr uint64_t kGaussStream = 202;

// class c gets floor(n/k) points plus one of the first n%k remainders
std::vector<int> class_counts(int n, int k) {
    std::vector<int> c(size_t(k), n / k);
    for (int i = 0; i < n % k; ++i) c[size_t(i)]++;
    return c;
}

} // namespace

Dataset gen_pinwheel(int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
    constexpr int k = 5;
    constexpr double radial_mean = 1.0, radial_std = 0.3;
    constexpr double tangential_std = 0.05;
    constexpr double warp_rate = 0.25, scale = 2.0;

    Dataset d;
    d.n = n;
    d.n_classes = k;
    d.x.reserve(size_t(n) * 2);
    d.label.reserve(size_t(n));
    auto rng = make_rng(seed, kPinwheelStream);
    const auto counts = class_counts(n, k);
    for (int c = 0; c < k; ++c) {
        const double base = 2.0 * std::numbers::pi * c / k;
        for (int i = 0; i < counts[size_t(c)]; ++i) {
            const double r = radial_mean + radial_std * gauss(rng);
            const double t = tangential_std * gauss(rng);
            const double phi = base + warp_rate * r;
            const double cs = std::cos(phi), sn = std::sin(phi);
            d.x.push_back(scale * (cs * r - sn * t));
            d.x.push_back(scale * (sn * r + cs * t));
            d.label.push_back(c);
        }
    }
    return d;
}

Dataset gen_8gaussians(int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
    constexpr int k = 8;
    constexpr double ring_radius = 2.0, blob_std = 0.1;
    const double scale = 1.0 / std::sqrt(2.0);

    Dataset d;
    d.n = n;
    d.n_classes = k;
    d.x.reserve(size_t(n) * 2);
    d.label.reserve(size_t(n));
    auto rng = make_rng(seed, kGaussStream);
    const auto counts = class_counts(n, k);
    for (int c = 0; c < k; ++c) {
        const double ang = 2.0 * std::numbers::pi * c / k;
        const double cx = ring_radius * std::cos(ang);
        const double cy = ring_radius * std::sin(ang);
        for (int i = 0; i < counts[size_t(c)]; ++i) {
            d.x.push_back(scale * (cx + blob_std * gauss(rng)));
            d.x.push_back(scale * (cy + blob_std * gauss(rng)));
            d.label.push_back(c);
        }
    }
    return d;
}

Dataset gen_dataset(const std::string& tag, int n, uint64_t seed) {
    if (tag == "pinwheel") return gen_pinwheel(n, seed);
    if (tag == "8gaussians") return gen_8gaussians(n, seed);
    throw std::invalid_argument("unknown dataset tag: " + tag);
}

ClusterGeometry cluster_geometry(const Dataset& data) {
    ClusterGeometry g;
    g.k = data.n_classes;
    g.d = data.d;
    g.centroid.assign(size_t(g.k) * g.d, 0.0);
    g.radius.assign(size_t(g.k), 0.0);
    std::vector<long> count(size_t(g.k), 0);
    for (int i = 0; i < data.n; ++i) {
        const int c = data.label[size_t(i)];
        if (c < 0 || c >= g.k) throw std::invalid_argument("label out of range");
        const auto r = data.row(i);
        for (int j = 0; j < g.d; ++j) g.centroid[size_t(c) * g.d + j] += r[size_t(j)];
        count[size_t(c)]++;
    }
    for (int c = 0; c < g.k; ++c)
        if (count[size_t(c)] > 0)
            for (int j = 0; j < g.d; ++j)
                g.centroid[size_t(c) * g.d + j] /= double(count[size_t(c)]);
    for (int i = 0; i < data.n; ++i) {
        const int c = data.label[size_t(i)];
        const auto r = data.row(i);
        double s = 0.0;
        for (int j = 0; j < g.d; ++j) {
            const double diff = r[size_t(j)] - g.centroid[size_t(c) * g.d + j];
            s += diff * diff;
        }
        g.radius[size_t(c)] += s;
    }
    for (int c = 0; c < g.k; ++c)
        if (count[size_t(c)] > 0)
            g.radius[size_t(c)] = std::sqrt(g.radius[size_t(c)] / double(count[size_t(c)]));
    return g;
}

ClusterGeometry reference_geometry(const std::string& tag) {
    constexpr int kReferenceN = 20000;
    constexpr uint64_t kReferenceSeed = 9001;
    return cluster_geometry(gen_dataset(tag, kReferenceN, kReferenceSeed));
}

} // namespace cycond::bench
