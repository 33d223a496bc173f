#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// Synthetic 2d benchmark datasets with ground-truth class labels, plus the
// per-class geometry (centroid and spread) the generation metrics score
// against.  Generation is a pure function of (n, seed): same arguments,
// same bytes.

namespace cycond::bench {

struct Dataset {
    int n = 0;
    int d = 2;
    int n_classes = 0;
    std::vector<double> x;  // row-major n x d
    std::vector<int> label; // class index per row, grouped by class

    std::span<const double> row(int i) const {
        return {x.data() + size_t(i) * d, size_t(d)};
    }
};

// Five spiral arms: per-point draw (r, t) with r ~ N(1, 0.3^2) radial and
// t ~ N(0, 0.05^2) tangential, rotated to angle 2 pi k / 5 + 0.25 r (the
// warp grows with the drawn radius, bending each arm), then scaled by 2.
// Class counts differ by at most one when n is not a multiple of 5.
Dataset gen_pinwheel(int n, uint64_t seed);

// Eight Gaussian blobs (std 0.1 before scaling) centered on a circle of
// radius 2 at angles 2 pi k / 8, with everything scaled by 1/sqrt(2).
Dataset gen_8gaussians(int n, uint64_t seed);

// dispatch on "pinwheel" | "8gaussians"; throws std::invalid_argument
Dataset gen_dataset(const std::string& tag, int n, uint64_t seed);

struct ClusterGeometry {
    int k = 0;
    int d = 2;
    std::vector<double> centroid; // row-major k x d
    std::vector<double> radius;   // per-class rms distance to the centroid

    std::span<const double> centroid_of(int c) const {
        return {centroid.data() + size_t(c) * d, size_t(d)};
    }
};

// label-conditioned centroids and rms spreads of a dataset
ClusterGeometry cluster_geometry(const Dataset& d);

// geometry of the named distribution itself, estimated from one large
// fixed-seed draw so every run is scored against the same reference
ClusterGeometry reference_geometry(const std::string& tag);

} // namespace cycond::bench
