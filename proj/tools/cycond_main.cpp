#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cycond/bench/config.hpp"
#include "cycond/bench/datasets.hpp"
#include "cycond/bench/io.hpp"
#include "cycond/bench/trainer.hpp"
#include "cycond/finite.hpp"
#include "cycond/models.hpp"
#include "cycond/rng.hpp"
#include "cycond/samplers.hpp"

// Command-line front end.  Exit codes: 0 success, 1 runtime failure
// (unreadable files, invalid tables, sampler breakdown), 2 usage errors
// (bad flags, unknown tags, missing seed, invalid configuration).

namespace {

using namespace cycond;
using namespace cycond::bench;

constexpr uint64_t kSampleStream = 41;

struct SeedFlag {
    CLI::Option* opt = nullptr;
    uint64_t value = 0;
};

// --seed wins over the config file; a run without either is refused
bool resolve_seed(RunConfig& cfg, const SeedFlag& seed, const char* verb) {
    if (seed.opt->count() > 0) {
        cfg.seed = seed.value;
        cfg.has_seed = true;
    }
    if (!cfg.has_seed) {
        std::cerr << "error: " << verb
                  << " requires a seed (--seed or seed= in the config)\n";
        return false;
    }
    return true;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create directory " + dir + ": " +
                                 ec.message());
}

finite::FiniteCond cond_from_table(const Table& t, const char* name) {
    finite::FiniteCond c;
    c.n_rows = t.rows;
    c.n_cols = t.cols;
    c.t = t.v;
    std::string why;
    if (!c.validate(&why))
        throw std::runtime_error(std::string(name) + " is not a conditional table: " + why);
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale lab for training and probing decoder/encoder "
                 "conditional pairs"};
    app.require_subcommand(1);

    // ---- gen-data -----------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "write a labeled synthetic dataset as CSV");
    std::string gen_dataset_tag = "pinwheel", gen_out;
    int gen_n = 5000;
    uint64_t gen_seed = 0;
    gen->add_option("--dataset", gen_dataset_tag, "pinwheel | 8gaussians")
        ->check(CLI::IsMember({"pinwheel", "8gaussians"}));
    gen->add_option("--n", gen_n, "number of points")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed")->required();
    gen->add_option("--out", gen_out, "output CSV path")->required();

    // ---- train ----------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a method and write checkpoint + logs");
    std::string tr_config, tr_dataset, tr_method, tr_out;
    SeedFlag tr_seed;
    int tr_n_train = 0, tr_batch = 0, tr_pre = -1;
    long tr_steps = 0;
    double tr_lr = 0, tr_wc = -1;
    tr->add_option("--config", tr_config, "TOML config file");
    auto* tr_dataset_o = tr->add_option("--dataset", tr_dataset, "override dataset tag");
    auto* tr_method_o = tr->add_option("--method", tr_method,
                                       "override method: cygen | cygen_pt | dae | vae");
    auto* tr_out_o = tr->add_option("--out", tr_out, "override output directory");
    tr_seed.opt = tr->add_option("--seed", tr_seed.value, "training seed (mandatory here or in the config)");
    auto* tr_ntr_o = tr->add_option("--n-train", tr_n_train, "override training set size");
    auto* tr_steps_o = tr->add_option("--n-steps", tr_steps, "override main-phase step count");
    auto* tr_batch_o = tr->add_option("--batch", tr_batch, "override batch size");
    auto* tr_lr_o = tr->add_option("--lr", tr_lr, "override learning rate");
    auto* tr_wc_o = tr->add_option("--w-compat", tr_wc, "override compatibility weight");
    auto* tr_pre_o = tr->add_option("--pretrain-epochs", tr_pre, "override pretraining epochs");

    // ---- eval -----------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "score a checkpoint: generation, latent separation, likelihood");
    std::string ev_ckpt, ev_config, ev_out;
    SeedFlag ev_seed;
    int ev_samples = 0;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint JSON")->required();
    ev->add_option("--config", ev_config, "TOML config (use the one the checkpoint was trained with)");
    auto* ev_out_o = ev->add_option("--out", ev_out, "output directory (default: config out_dir)");
    ev_seed.opt = ev->add_option("--seed", ev_seed.value, "evaluation seed (mandatory here or in the config)");
    auto* ev_samples_o = ev->add_option("--samples", ev_samples, "override generated sample count");

    // ---- analyze-discrete -------------------------------------------------
    auto* an = app.add_subcommand("analyze-discrete",
                                  "compatibility / determinacy report for a finite conditional pair");
    std::string an_p, an_q, an_out;
    an->add_option("p_csv", an_p, "x-given-z table, one column per z state")->required();
    an->add_option("q_csv", an_q, "z-given-x table, one column per x state")->required();
    an->add_option("--out", an_out, "write the JSON report here instead of stdout");

    // ---- sample -----------------------------------------------------------
    auto* sa = app.add_subcommand("sample", "draw from a checkpoint with a chosen sampler");
    std::string sa_ckpt, sa_out, sa_sampler = "auto", sa_traj;
    int sa_n = 1000, sa_steps = 100;
    double sa_eps = 3e-4, sa_init = 2.0;
    uint64_t sa_seed = 0;
    sa->add_option("--checkpoint", sa_ckpt, "checkpoint JSON")->required();
    sa->add_option("--out", sa_out, "output CSV of samples")->required();
    sa->add_option("--sampler", sa_sampler, "auto | sgld | gibbs | ancestral")
        ->check(CLI::IsMember({"auto", "sgld", "gibbs", "ancestral"}));
    sa->add_option("--n", sa_n, "number of samples")->check(CLI::PositiveNumber);
    sa->add_option("--steps", sa_steps, "chain steps per sample")->check(CLI::PositiveNumber);
    sa->add_option("--eps", sa_eps, "Langevin step size");
    sa->add_option("--init-std", sa_init, "chain initialization spread");
    sa->add_option("--seed", sa_seed, "sampling seed");
    sa->add_option("--trajectory", sa_traj, "also record the first chain's path to this CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(gen)) {
            const Dataset d = gen_dataset(gen_dataset_tag, gen_n, gen_seed);
            std::ofstream os(gen_out);
            if (!os) throw std::runtime_error("cannot open " + gen_out);
            write_dataset(os, d);
            std::cout << "wrote " << d.n << " " << gen_dataset_tag
                      << " points to " << gen_out << "\n";
            return 0;
        }

        if (app.got_subcommand(tr)) {
            RunConfig cfg = tr_config.empty() ? RunConfig{} : load_config_file(tr_config);
            if (tr_dataset_o->count()) cfg.dataset = tr_dataset;
            if (tr_method_o->count()) cfg.method = tr_method;
            if (tr_out_o->count()) cfg.out_dir = tr_out;
            if (tr_ntr_o->count()) cfg.n_train = tr_n_train;
            if (tr_steps_o->count()) cfg.n_steps = tr_steps;
            if (tr_batch_o->count()) cfg.batch = tr_batch;
            if (tr_lr_o->count()) cfg.lr = tr_lr;
            if (tr_wc_o->count()) cfg.w_compat = tr_wc;
            if (tr_pre_o->count()) cfg.pretrain_epochs = tr_pre;
            if (!resolve_seed(cfg, tr_seed, "train")) return 2;
            std::string why;
            if (!cfg.valid(&why)) throw ConfigError(why);

            const Dataset data = gen_dataset(cfg.dataset, cfg.n_train, cfg.seed);
            const TrainResult res = train_run(cfg, data);

            ensure_dir(cfg.out_dir);
            save_json(cfg.out_dir + "/checkpoint.json", checkpoint_json(res.ckpt));
            std::ofstream log_os(cfg.out_dir + "/train_log.csv");
            write_train_log(log_os, res.log);
            const json summary = {{"dataset", cfg.dataset},
                                  {"method", cfg.method},
                                  {"seed", cfg.seed},
                                  {"steps", res.steps},
                                  {"diverged", res.diverged},
                                  {"note", res.note},
                                  {"final_total", res.step_total.empty()
                                                      ? 0.0
                                                      : res.step_total.back()},
                                  {"wall_seconds", res.wall_seconds}};
            save_json(cfg.out_dir + "/train_summary.json", summary);
            std::cout << "trained " << cfg.dataset << "/" << cfg.method
                      << " seed " << cfg.seed << ": " << res.steps
                      << " steps in " << res.wall_seconds << " s"
                      << (res.diverged ? " (diverged: " + res.note + ")" : "")
                      << "\nartifacts in " << cfg.out_dir << "\n";
            return 0;
        }

        if (app.got_subcommand(ev)) {
            RunConfig cfg = ev_config.empty() ? RunConfig{} : load_config_file(ev_config);
            if (ev_samples_o->count()) cfg.n_eval_samples = ev_samples;
            if (!resolve_seed(cfg, ev_seed, "eval")) return 2;
            std::string why;
            if (!cfg.valid(&why)) throw ConfigError(why);

            const Checkpoint ck = checkpoint_from_json(load_json(ev_ckpt));
            const EvalResult res = evaluate_run(ck, cfg, cfg.seed);

            const std::string dir = ev_out_o->count() ? ev_out : cfg.out_dir;
            ensure_dir(dir);
            save_json(dir + "/metrics.json", res.metrics);
            write_table_file(dir + "/hist2d.csv", res.hist.bins, res.hist.bins,
                             res.hist.count);
            write_table_file(dir + "/samples.csv", res.n_samples, 2, res.samples);
            Dataset scatter;
            scatter.n = res.n_emb;
            scatter.d = ck.enc.d_z;
            scatter.n_classes = 1;
            for (int l : res.emb_labels)
                scatter.n_classes = std::max(scatter.n_classes, l + 1);
            scatter.x = res.embedding;
            scatter.label = res.emb_labels;
            std::ofstream sc_os(dir + "/latent_scatter.csv");
            write_dataset(sc_os, scatter);
            std::cout << "coverage " << res.metrics["coverage"] << ", spill "
                      << res.metrics["spill_fraction"] << ", separation "
                      << res.metrics["separation_ratio"] << ", nll "
                      << res.metrics["nll_bound"] << "\nartifacts in " << dir
                      << "\n";
            return 0;
        }

        if (app.got_subcommand(an)) {
            const finite::FiniteCond p = cond_from_table(read_table_file(an_p), "p");
            const finite::FiniteCond q = cond_from_table(read_table_file(an_q), "q");
            if (p.n_rows != q.n_cols || p.n_cols != q.n_rows)
                throw std::runtime_error("table shapes disagree: p is " +
                                         std::to_string(p.n_rows) + "x" +
                                         std::to_string(p.n_cols) + ", q is " +
                                         std::to_string(q.n_rows) + "x" +
                                         std::to_string(q.n_cols));
            const json report = compat_report_json(finite::analyze(p, q));
            if (an_out.empty())
                std::cout << report.dump(2) << "\n";
            else
                save_json(an_out, report);
            return 0;
        }

        if (app.got_subcommand(sa)) {
            const Checkpoint ck = checkpoint_from_json(load_json(sa_ckpt));
            std::string mode = sa_sampler;
            if (mode == "auto") mode = ck.method == "vae" ? "ancestral" : "sgld";
            if (mode == "ancestral" && !sa_traj.empty())
                throw ConfigError("--trajectory needs a chain sampler, not ancestral");

            models::GaussRuntime p(ck.dec, ck.dec_params);
            models::FlowRuntime q(ck.enc, ck.enc_params);
            const int d_x = ck.dec.mean_net.d_out();
            auto rng = make_rng(sa_seed, kSampleStream);
            std::normal_distribution<double> normal(0.0, 1.0);

            std::vector<double> samples;
            samples.reserve(size_t(sa_n) * d_x);
            long n_diverged = 0;
            samplers::SgldConfig scfg;
            scfg.eps = sa_eps;
            scfg.n_steps = sa_steps;
            for (int i = 0; i < sa_n; ++i) {
                if (mode == "ancestral") {
                    const auto x = samplers::ancestral(p, rng);
                    samples.insert(samples.end(), x.begin(), x.end());
                    continue;
                }
                std::vector<double> x0(static_cast<size_t>(d_x));
                for (auto& v : x0) v = sa_init * normal(rng);
                const samplers::Trajectory t =
                    mode == "sgld" ? samplers::sgld_x(p, q, x0, scfg, rng)
                                   : samplers::gibbs_chain(p, q, x0, sa_steps, rng);
                if (t.diverged) n_diverged++;
                const auto x = t.x_at(t.steps_done);
                samples.insert(samples.end(), x.begin(), x.end());
                if (i == 0 && !sa_traj.empty()) {
                    std::ofstream ts(sa_traj);
                    if (!ts) throw std::runtime_error("cannot open " + sa_traj);
                    samplers::write_csv(ts, t);
                }
            }
            write_table_file(sa_out, sa_n, d_x, samples);
            std::cout << "wrote " << sa_n << " samples (" << mode << ") to "
                      << sa_out;
            if (n_diverged > 0)
                std::cout << "; " << n_diverged << " chains diverged";
            std::cout << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
