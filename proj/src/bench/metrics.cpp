#include "cycond/bench/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace cycond::bench {

namespace {
constexpr double kCoverageShare = 0.05; // class counts as covered at this mass
constexpr double kSpillFactor = 3.0;    // spread multiplier defining "near"
constexpr double kBridgeFactor = 1.5;   // tighter band catching smeared mass
} // namespace

GenScores score_generation(std::span<const double> samples, int n,
                           const ClusterGeometry& geo) {
    if (n < 1) throw std::invalid_argument("need at least one sample");
    if (samples.size() != size_t(n) * geo.d)
        throw std::invalid_argument("sample buffer size mismatch");
    if (geo.k < 1) throw std::invalid_argument("geometry has no classes");

    GenScores s;
    s.n = n;
    s.assignment.assign(size_t(geo.k), 0.0);
    s.rms.assign(size_t(geo.k), 0.0);
    long spilled = 0, bridged = 0;
    for (int i = 0; i < n; ++i) {
        const double* p = samples.data() + size_t(i) * geo.d;
        int best = 0;
        double best_d2 = 0.0;
        bool near_any = false, tight_any = false;
        for (int c = 0; c < geo.k; ++c) {
            double d2 = 0.0;
            for (int j = 0; j < geo.d; ++j) {
                const double diff = p[j] - geo.centroid[size_t(c) * geo.d + j];
                d2 += diff * diff;
            }
            if (c == 0 || d2 < best_d2) { best = c; best_d2 = d2; }
            const double lim = kSpillFactor * geo.radius[size_t(c)];
            if (d2 <= lim * lim) near_any = true;
            const double tight = kBridgeFactor * geo.radius[size_t(c)];
            if (d2 <= tight * tight) tight_any = true;
        }
        s.assignment[size_t(best)] += 1.0;
        s.rms[size_t(best)] += best_d2;
        if (!near_any) spilled++;
        if (!tight_any) bridged++;
    }
    int covered = 0;
    for (int c = 0; c < geo.k; ++c) {
        if (s.assignment[size_t(c)] > 0)
            s.rms[size_t(c)] = std::sqrt(s.rms[size_t(c)] / s.assignment[size_t(c)]);
        s.assignment[size_t(c)] /= double(n);
        if (s.assignment[size_t(c)] >= kCoverageShare) covered++;
    }
    s.coverage = double(covered) / geo.k;
    s.spill = double(spilled) / n;
    s.bridge = double(bridged) / n;
    return s;
}

double separation_ratio(std::span<const double> emb, int n, int d,
                        std::span<const int> labels, int n_classes) {
    if (n < 1 || d < 1 || n_classes < 1)
        throw std::invalid_argument("empty embedding");
    if (emb.size() != size_t(n) * d || labels.size() != size_t(n))
        throw std::invalid_argument("embedding buffer size mismatch");

    std::vector<double> mean(size_t(n_classes) * d, 0.0);
    std::vector<long> count(size_t(n_classes), 0);
    for (int i = 0; i < n; ++i) {
        const int c = labels[size_t(i)];
        if (c < 0 || c >= n_classes)
            throw std::invalid_argument("label out of range");
        for (int j = 0; j < d; ++j)
            mean[size_t(c) * d + j] += emb[size_t(i) * d + j];
        count[size_t(c)]++;
    }
    int nonempty = 0;
    for (int c = 0; c < n_classes; ++c)
        if (count[size_t(c)] > 0) {
            for (int j = 0; j < d; ++j) mean[size_t(c) * d + j] /= double(count[size_t(c)]);
            nonempty++;
        }
    if (nonempty < 2) return 0.0;

    std::vector<double> rms(size_t(n_classes), 0.0);
    for (int i = 0; i < n; ++i) {
        const int c = labels[size_t(i)];
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            const double diff = emb[size_t(i) * d + j] - mean[size_t(c) * d + j];
            s += diff * diff;
        }
        rms[size_t(c)] += s;
    }
    double max_rms = 0.0;
    for (int c = 0; c < n_classes; ++c)
        if (count[size_t(c)] > 0)
            max_rms = std::max(max_rms,
                               std::sqrt(rms[size_t(c)] / double(count[size_t(c)])));

    double min_dist = -1.0;
    for (int a = 0; a < n_classes; ++a) {
        if (count[size_t(a)] == 0) continue;
        for (int b = a + 1; b < n_classes; ++b) {
            if (count[size_t(b)] == 0) continue;
            double d2 = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = mean[size_t(a) * d + j] - mean[size_t(b) * d + j];
                d2 += diff * diff;
            }
            const double dist = std::sqrt(d2);
            if (min_dist < 0.0 || dist < min_dist) min_dist = dist;
        }
    }
    constexpr double kCap = 1e9;
    if (max_rms == 0.0) return kCap;
    return std::min(kCap, min_dist / max_rms);
}

double Hist2d::sum() const {
    double s = 0.0;
    for (double c : count) s += c;
    return s;
}

Hist2d histogram2d(std::span<const double> samples, int n, int bins,
                   double lo, double hi) {
    if (n < 0) throw std::invalid_argument("negative sample count");
    if (bins < 1 || !(hi > lo)) throw std::invalid_argument("bad histogram grid");
    if (samples.size() != size_t(n) * 2)
        throw std::invalid_argument("histogram2d expects 2d samples");

    Hist2d h;
    h.bins = bins;
    h.lo = lo;
    h.hi = hi;
    h.count.assign(size_t(bins) * bins, 0.0);
    const double inv_w = bins / (hi - lo);
    auto bin = [&](double v) -> int {
        if (!(v >= lo)) return 0; // below range or non-finite
        if (v >= hi) return bins - 1;
        const int b = int((v - lo) * inv_w);
        return b >= bins ? bins - 1 : b;
    };
    for (int i = 0; i < n; ++i) {
        const int bx = bin(samples[size_t(i) * 2]);
        const int by = bin(samples[size_t(i) * 2 + 1]);
        h.count[size_t(bx) * bins + by] += 1.0;
    }
    return h;
}

} // namespace cycond::bench
