#pragma once
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cycond/bench/config.hpp"
#include "cycond/bench/datasets.hpp"
#include "cycond/bench/io.hpp"
#include "cycond/bench/metrics.hpp"

// Gradient training of decoder/encoder pairs on the benchmark datasets and
// the standard evaluation pass over a checkpoint: generation with the
// method's sampler, cluster scores against the reference geometry, latent
// separation of the data embedding, and a k-draw likelihood bound.
//
// Methods: "cygen" optimizes the compatibility + likelihood objective from
// a cold start; "cygen_pt" first pretrains on the evidence lower bound,
// then switches to that objective with the decoder's learning rate divided
// by dec_lr_drop; "vae" optimizes the evidence lower bound throughout;
// "dae" optimizes the reconstruction term alone.
//
// Every run is a pure function of (config, dataset, seed): reruns produce
// bit-identical parameters, logs, and metrics.

namespace cycond::bench {

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    void init(size_t n);
    // lr is per-parameter so phases can keep parameter groups on
    // different rates
    void step(std::span<double> params, std::span<const double> grad,
              std::span<const double> lr);
};

struct LogRow {
    long step = 0; // 1-based, counted across phases
    int phase = 0; // 0 = pretraining, 1 = main objective
    double total = 0, compat = 0, nll = 0, dae = 0, elbo = 0;
};

struct TrainResult {
    Checkpoint ckpt;
    std::vector<LogRow> log;        // each phase's first + last step, every log_every
    std::vector<double> step_total; // batch-mean objective per step
    long steps = 0;
    bool diverged = false;
    std::string note;
    double wall_seconds = 0.0;
};

TrainResult train_run(const RunConfig& cfg, const Dataset& data);

// columns: step, phase, total, compat, nll, dae, elbo
void write_train_log(std::ostream& os, const std::vector<LogRow>& log);

struct EvalResult {
    json metrics;
    Hist2d hist;               // over the generated samples
    std::vector<double> samples;    // n_samples x 2
    int n_samples = 0;
    std::vector<double> embedding;  // n_emb x d_z, noise-free encodings
    std::vector<int> emb_labels;
    int n_emb = 0;
    double wall_seconds = 0.0;
};

// eval_seed drives generation noise and the likelihood test points; the
// reference geometry and embedding set are tied to the checkpoint's
// training dataset
EvalResult evaluate_run(const Checkpoint& ck, const RunConfig& cfg,
                        uint64_t eval_seed);

} // namespace cycond::bench
