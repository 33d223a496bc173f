#pragma once
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// Benchmark run configuration.  Loadable from a small TOML subset --
// [section] headers, key = value with strings, booleans, integers, floats,
// and integer arrays, # comments -- with command-line overrides applied on
// top.  ConfigError marks usage-class problems (malformed or invalid
// settings) as opposed to I/O failures.

namespace cycond::bench {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using TomlValue = std::variant<bool, long long, double, std::string,
                               std::vector<long long>>;

// flat map keyed "section.key" (bare "key" outside any section)
std::map<std::string, TomlValue> parse_toml(std::istream& is);

struct RunConfig {
    std::string dataset = "pinwheel"; // pinwheel | 8gaussians
    std::string method = "cygen_pt";  // cygen | cygen_pt | dae | vae
    std::string out_dir = "out";
    bool has_seed = false;
    uint64_t seed = 0;
    int n_train = 5000;

    // model
    int d_z = 2;
    int flow_layers = 32;
    int n_reflections = 2;
    std::vector<int> cond_widths = {2, 8, 8, 8};
    std::vector<int> dec_widths = {2, 16, 16, 2};
    double sigma2 = 0.01;

    // loss
    double w_compat = 1e-5;
    double w_nll = 1.0;
    double beta = 1.0;
    int k_nll = 16;
    int k_dae = 1;
    int n_probes = 1;

    // optimizer; n_steps counts the main phase, pretraining (cygen_pt
    // only) adds pretrain_epochs passes over the data before it
    double lr = 1e-3;
    double weight_decay = 1e-5;
    double dec_lr_drop = 10.0; // main-phase decoder rate = lr / this (cygen_pt)
    int batch = 1000;
    long n_steps = 10000;
    int pretrain_epochs = 200;
    int log_every = 100;

    // sampler used for generation
    double sgld_eps = 3e-4;
    int sgld_steps = 100;
    double init_std = 2.0;      // chains start from N(0, init_std^2 I)
    bool clamp_seeds = false;   // clamp encoder noise draws during training
    double clamp_limit = 0.1;

    // evaluation
    int n_eval_samples = 10000;
    int n_nll_points = 500;
    int k_nll_eval = 1024;

    bool valid(std::string* why = nullptr) const;
};

// parse + map keys onto RunConfig; unknown keys or type mismatches throw
// ConfigError
RunConfig config_from_toml(std::istream& is);
RunConfig load_config_file(const std::string& path);

} // namespace cycond::bench
