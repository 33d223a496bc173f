#pragma once
#include <span>
#include <vector>

#include "cycond/bench/datasets.hpp"

// Scores for generated samples against a reference cluster geometry, a
// separation score for labeled latent embeddings, and fixed-grid 2d
// histograms of sample clouds.

namespace cycond::bench {

struct GenScores {
    double coverage = 0.0; // fraction of classes holding >= 5% of the mass
    double spill = 0.0;    // fraction farther than 3 spreads from every centroid
    double bridge = 0.0;   // fraction farther than 1.5 spreads from every
                           // centroid: mass smeared between or past clusters
    std::vector<double> assignment; // per-class mass by nearest centroid
    std::vector<double> rms; // rms distance of assigned samples to the centroid
    int n = 0;
};

// samples row-major n x geo.d; assignment by nearest centroid (ties to the
// lowest index), spill when the distance to class c exceeds 3 * radius[c]
// for every c
GenScores score_generation(std::span<const double> samples, int n,
                           const ClusterGeometry& geo);

// min inter-class centroid distance / max within-class rms distance, over
// the nonempty classes of a labeled embedding (row-major n x d).  Returns 0
// with fewer than two nonempty classes, and caps at 1e9 when every class is
// a single point.
double separation_ratio(std::span<const double> emb, int n, int d,
                        std::span<const int> labels, int n_classes);

struct Hist2d {
    int bins = 0;
    double lo = 0.0, hi = 0.0; // same bounds on both axes
    std::vector<double> count; // row-major bins x bins, rows follow axis 0
    double sum() const;
};

// Counts of 2d samples on a bins x bins grid over [lo, hi)^2.  Out-of-range
// coordinates are clamped to the edge bins and non-finite ones land in bin
// 0, so the total always equals the sample count.
Hist2d histogram2d(std::span<const double> samples, int n, int bins = 100,
                   double lo = -5.0, double hi = 5.0);

} // namespace cycond::bench
