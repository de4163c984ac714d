// daybreak — change-point detection for periodic behavioral sequences.
//
// Pipeline: simulate/preprocess -> fit -> detect -> report, plus an
// oracle-check subcommand that runs the small-instance verification suite.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "daybreak/detector.hpp"
#include "daybreak/ingest.hpp"
#include "daybreak/io.hpp"
#include "daybreak/mixture.hpp"
#include "daybreak/selfcheck.hpp"
#include "daybreak/simulate.hpp"

namespace {

using nlohmann::json;

json load_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) throw daybreak::DataError(std::string("cannot open config file: ") + argv[i + 1]);
            json j;
            in >> j;
            return j;
        }
    }
    return json::object();
}

// Flag > config file > built-in default.
template <typename T>
T with_config(const json& cfg, const std::string& key, T builtin) {
    if (cfg.contains(key)) return cfg.at(key).get<T>();
    return builtin;
}

struct DefaultTable {
    json values = json::object();

    template <typename T>
    T reg(const std::string& section, const std::string& key, T v) {
        values[section][key] = v;
        return v;
    }
};

DefaultTable& defaults_table() {
    static DefaultTable table;
    return table;
}

std::vector<int> true_runlengths(const daybreak::GroundTruth& gt) {
    std::vector<int> rl(gt.labels.size());
    int last_cp = 0;
    std::size_t next = 0;
    for (int t = 1; t <= static_cast<int>(gt.labels.size()); ++t) {
        while (next < gt.cp_times.size() && gt.cp_times[next] <= t) {
            last_cp = gt.cp_times[next];
            ++next;
        }
        rl[static_cast<std::size_t>(t - 1)] = t - last_cp;
    }
    return rl;
}

int run(int argc, char** argv) {
    const json cfg = load_config(argc, argv);
    auto& defs = defaults_table();

    CLI::App app{"change-point detection for periodic behavioral sequences"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags take precedence)");

    // ----- simulate -----------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "generate a synthetic labeled dataset");
    int sim_t = with_config(cfg, "T", defs.reg("simulate", "T", 500));
    int sim_k = with_config(cfg, "K", defs.reg("simulate", "K", 5));
    int sim_ncps = with_config(cfg, "n-cps", defs.reg("simulate", "n-cps", 4));
    double sim_alpha = with_config(cfg, "alpha", defs.reg("simulate", "alpha", 25.0));
    double sim_mintv = with_config(cfg, "min-tv", defs.reg("simulate", "min-tv", 0.4));
    double sim_missing = with_config(cfg, "missing-rate", defs.reg("simulate", "missing-rate", 0.0));
    int sim_gen_order = with_config(cfg, "gen-order", defs.reg("simulate", "gen-order", 2));
    std::uint64_t sim_seed = with_config<std::uint64_t>(cfg, "seed", defs.reg("simulate", "seed", 0));
    std::string sim_out_data = with_config<std::string>(cfg, "out-dataset", "dataset.csv");
    std::string sim_out_truth = with_config<std::string>(cfg, "out-truth", "truth.json");
    std::string sim_out_labels;
    sim->add_option("--T", sim_t, "sequence length");
    sim->add_option("--K", sim_k, "number of latent classes");
    sim->add_option("--n-cps", sim_ncps, "number of planted change points");
    sim->add_option("--alpha", sim_alpha, "Dirichlet concentration for partition distributions");
    sim->add_option("--min-tv", sim_mintv, "minimum total-variation separation between partitions");
    sim->add_option("--missing-rate", sim_missing, "MCAR masking rate for whole days");
    sim->add_option("--gen-order", sim_gen_order, "Fourier order of the generating kernels");
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--out-dataset", sim_out_data, "output dataset CSV");
    sim->add_option("--out-truth", sim_out_truth, "output ground-truth JSON");
    sim->add_option("--out-labels", sim_out_labels, "optional output of true labels (PEO input)");

    // ----- preprocess ----------------------------------------------------
    auto* pre = app.add_subcommand("preprocess", "build a dataset from GPS traces");
    std::string pre_in, pre_out = "dataset.csv";
    daybreak::IngestConfig ing;
    ing.utc_offset_minutes = with_config(cfg, "utc-offset-minutes",
                                         defs.reg("preprocess", "utc-offset-minutes", 0));
    ing.gap_limit_minutes = with_config(cfg, "gap-limit-minutes",
                                        defs.reg("preprocess", "gap-limit-minutes", 30.0));
    ing.home_radius_m = with_config(cfg, "home-radius-m",
                                    defs.reg("preprocess", "home-radius-m", 50.0));
    ing.night_start_hour = with_config(cfg, "night-start-hour",
                                       defs.reg("preprocess", "night-start-hour", 0));
    ing.night_end_hour = with_config(cfg, "night-end-hour",
                                     defs.reg("preprocess", "night-end-hour", 6));
    pre->add_option("--input", pre_in, "trace file: timestamp,lat,lon per line")->required();
    pre->add_option("--output", pre_out, "output dataset CSV");
    pre->add_option("--utc-offset-minutes", ing.utc_offset_minutes, "local time offset");
    pre->add_option("--gap-limit-minutes", ing.gap_limit_minutes, "max gap before an hour is missing");
    pre->add_option("--home-radius-m", ing.home_radius_m, "at-home distance threshold");
    pre->add_option("--night-start-hour", ing.night_start_hour, "nocturnal window start");
    pre->add_option("--night-end-hour", ing.night_end_hour, "nocturnal window end");

    // ----- fit -----------------------------------------------------------
    auto* fitc = app.add_subcommand("fit", "fit the heterogeneous mixture by EM");
    std::string fit_in, fit_out_model = "model.json", fit_out_post = "posterior.csv",
                fit_out_labels = "labels.txt";
    int fit_k = with_config(cfg, "K", defs.reg("fit", "K", 5));
    int fit_c = with_config(cfg, "C", defs.reg("fit", "C", 3));
    daybreak::FitConfig fcfg;
    fcfg.n_init = with_config(cfg, "n-init", defs.reg("fit", "n-init", 5));
    fcfg.max_em_iters = with_config(cfg, "max-em-iters", defs.reg("fit", "max-em-iters", 200));
    fcfg.epsilon_q = with_config(cfg, "epsilon-q", defs.reg("fit", "epsilon-q", 250.0));
    fcfg.max_m_evals = with_config(cfg, "max-m-evals", defs.reg("fit", "max-m-evals", 10));
    fcfg.seed = with_config<std::uint64_t>(cfg, "seed", defs.reg("fit", "seed", 0));
    fitc->add_option("--input", fit_in, "dataset CSV")->required();
    fitc->add_option("--K", fit_k, "number of latent classes");
    fitc->add_option("--C", fit_c, "Fourier order of the fitted kernels");
    fitc->add_option("--n-init", fcfg.n_init, "number of EM restarts");
    fitc->add_option("--max-em-iters", fcfg.max_em_iters, "EM iteration cap");
    fitc->add_option("--epsilon-q", fcfg.epsilon_q, "convergence tolerance on the objective");
    fitc->add_option("--max-m-evals", fcfg.max_m_evals, "objective evaluations per Gaussian M-step");
    fitc->add_option("--seed", fcfg.seed, "random seed");
    fitc->add_option("--out-model", fit_out_model, "output checkpoint JSON");
    fitc->add_option("--out-posterior", fit_out_post, "output posterior matrix CSV (FPO input)");
    fitc->add_option("--out-labels", fit_out_labels, "output MAP label file (PEO input)");

    // ----- detect ----------------------------------------------------------
    auto* det = app.add_subcommand("detect", "run the change-point detector");
    std::string det_mode = with_config<std::string>(cfg, "mode", defs.reg<std::string>("detect", "mode", "peo"));
    std::string det_in, det_out = "report.json", det_out_post;
    int det_k = with_config(cfg, "K", defs.reg("detect", "K", 0));
    double det_tau = with_config(cfg, "tau", defs.reg("detect", "tau", 100.0));
    double det_kappa = with_config(cfg, "kappa", defs.reg("detect", "kappa", 1.0));
    double det_nu = with_config(cfg, "nu", defs.reg("detect", "nu", 1.0));
    int det_samples = with_config(cfg, "samples", defs.reg("detect", "samples", 500));
    int det_burnin = with_config(cfg, "burn-in", defs.reg("detect", "burn-in", 200));
    std::uint64_t det_seed = with_config<std::uint64_t>(cfg, "seed", defs.reg("detect", "seed", 0));
    det->add_option("--mode", det_mode, "peo (label file) or fpo (posterior matrix)")
        ->check(CLI::IsMember({"peo", "fpo"}));
    det->add_option("--input", det_in, "label file (peo) or posterior CSV (fpo)")->required();
    det->add_option("--K", det_k, "class count (peo; inferred from rows for fpo)");
    det->add_option("--tau", det_tau, "hazard timescale");
    det->add_option("--kappa", det_kappa, "Gamma prior shape (fpo)");
    det->add_option("--nu", det_nu, "Gamma prior rate (fpo)");
    det->add_option("--samples", det_samples, "MCMC samples per predictive (fpo)");
    det->add_option("--burn-in", det_burnin, "MCMC burn-in (fpo)");
    det->add_option("--seed", det_seed, "random seed (fpo)");
    det->add_option("--output", det_out, "output report JSON");
    det->add_option("--out-posterior", det_out_post, "optional dense run-length posterior CSV");

    // ----- report ----------------------------------------------------------
    auto* rep = app.add_subcommand("report", "emit plot-ready series files");
    std::string rep_report, rep_truth, rep_model, rep_labels, rep_prefix = "report";
    rep->add_option("--report", rep_report, "detector report JSON");
    rep->add_option("--truth", rep_truth, "ground-truth JSON");
    rep->add_option("--model", rep_model, "model checkpoint JSON");
    rep->add_option("--labels", rep_labels, "label file for the raster");
    rep->add_option("--out-prefix", rep_prefix, "output file prefix");

    // ----- oracle-check ------------------------------------------------------
    auto* oc = app.add_subcommand("oracle-check", "run the small-instance verification suite");
    std::uint64_t oc_seed = with_config<std::uint64_t>(cfg, "seed", defs.reg("oracle-check", "seed", 7));
    oc->add_option("--seed", oc_seed, "random seed");

    // ----- defaults -----------------------------------------------------------
    auto* dv = app.add_subcommand("defaults", "print every built-in default as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (sim->parsed()) {
        daybreak::LabelSimConfig lcfg;
        lcfg.t_len = sim_t;
        lcfg.k = sim_k;
        lcfg.n_cps = sim_ncps;
        lcfg.alpha = sim_alpha;
        lcfg.min_tv = sim_mintv;
        lcfg.missing_rate = sim_missing;
        lcfg.seed = sim_seed;
        const auto sim_out = daybreak::simulate_labels(lcfg);

        daybreak::GeneratorConfig gcfg;
        gcfg.k = sim_k;
        gcfg.d = 24;
        gcfg.fourier_order = sim_gen_order;
        gcfg.seed = sim_seed;
        const auto gen = daybreak::random_generator_params(gcfg);
        std::vector<int> observed_labels = sim_out.labels;
        for (auto& z : observed_labels)
            if (z == daybreak::kMissingLabel) z = 0;  // placeholder, masked below
        auto data = daybreak::sample_synthetic(gen, observed_labels,
                                               daybreak::derive_seed(sim_seed, 0x90));
        daybreak::mask_days_mcar(data, sim_out.labels, lcfg.missing_rate);

        daybreak::write_atomic(sim_out_data, daybreak::dataset_to_csv(data, {}));
        daybreak::GroundTruth gt{sim_out.labels, sim_out.cp_times};
        daybreak::write_atomic(sim_out_truth, daybreak::ground_truth_to_json(gt).dump(2) + "\n");
        if (!sim_out_labels.empty())
            daybreak::write_atomic(sim_out_labels, daybreak::labels_to_text(sim_out.labels));
        std::cout << "simulate: T=" << sim_t << " K=" << sim_k << " cps=";
        for (std::size_t i = 0; i < sim_out.cp_times.size(); ++i)
            std::cout << (i ? "," : "") << sim_out.cp_times[i];
        std::cout << " -> " << sim_out_data << ", " << sim_out_truth << "\n";
        return 0;
    }

    if (pre->parsed()) {
        daybreak::TraceLoadSummary summary;
        const auto traces = daybreak::load_traces_file(pre_in, &summary);
        if (traces.empty()) throw daybreak::EmptyDataset("preprocess: no valid traces in input");
        const auto built = daybreak::build_dataset(traces, ing);
        daybreak::write_atomic(pre_out, daybreak::dataset_to_csv(built.observations, built.dates));
        std::cout << "preprocess: parsed=" << summary.parsed << " skipped=" << summary.skipped
                  << " days=" << built.observations.size() << " home=(" << built.home.latitude
                  << "," << built.home.longitude << ") support=" << built.home.support_count
                  << " -> " << pre_out << "\n";
        return 0;
    }

    if (fitc->parsed()) {
        const auto loaded = daybreak::dataset_from_csv(daybreak::read_file(fit_in));
        const auto result = daybreak::fit(loaded.observations, fit_k, fcfg, fit_c);
        daybreak::FitMetadata meta{result.seed, result.q_trace.back(), result.iterations,
                                   result.best_restart};
        daybreak::write_atomic(fit_out_model,
                               daybreak::checkpoint_to_json(result.params, meta).dump(2) + "\n");
        daybreak::write_atomic(fit_out_post, daybreak::posterior_to_csv(result.posterior));
        daybreak::write_atomic(fit_out_labels,
                               daybreak::labels_to_text(daybreak::map_labels(result.posterior)));
        std::cout << "fit: K=" << fit_k << " C=" << fit_c << " objective=" << result.q_trace.back()
                  << " iterations=" << result.iterations << " restart=" << result.best_restart
                  << " -> " << fit_out_model << "\n";
        return 0;
    }

    if (det->parsed()) {
        daybreak::HazardConfig hz{det_tau};
        daybreak::CpReport report;
        if (det_mode == "peo") {
            const auto labels = daybreak::labels_from_text(daybreak::read_file(det_in));
            int k = det_k;
            if (k <= 0) {
                for (int z : labels) k = std::max(k, z + 1);
            }
            if (k <= 0) throw daybreak::DataError("detect: cannot infer K from an all-missing file");
            report = daybreak::peo_detect(labels, Eigen::VectorXd::Ones(k), hz);
        } else {
            const auto rows = daybreak::posterior_from_csv(daybreak::read_file(det_in));
            int k = 0;
            for (std::size_t i = 0; i < rows.rows.size(); ++i)
                if (!rows.missing[i]) k = static_cast<int>(rows.rows[i].size());
            if (k == 0) throw daybreak::DataError("detect: posterior file has no observed rows");
            daybreak::FpoPriors priors;
            priors.kappa = det_kappa;
            priors.nu = det_nu;
            priors.beta = Eigen::VectorXd::Constant(k, 1.0 / k);
            report = daybreak::fpo_detect(rows.rows, rows.missing, priors, hz, det_samples,
                                          det_seed, det_burnin);
        }
        daybreak::write_atomic(det_out, daybreak::cp_report_to_json(report).dump(2) + "\n");
        if (!det_out_post.empty())
            daybreak::write_atomic(det_out_post, daybreak::runlength_posterior_to_csv(report));
        std::cout << "detect: mode=" << det_mode << " steps=" << report.runlength_map.size()
                  << " cps=" << report.detected_cps.size() << " -> " << det_out << "\n";
        return 0;
    }

    if (rep->parsed()) {
        bool wrote = false;
        if (!rep_report.empty()) {
            const auto report = daybreak::cp_report_from_json(
                nlohmann::json::parse(daybreak::read_file(rep_report)));
            std::optional<std::vector<int>> truth_rl;
            if (!rep_truth.empty()) {
                const auto gt = daybreak::ground_truth_from_json(
                    nlohmann::json::parse(daybreak::read_file(rep_truth)));
                truth_rl = true_runlengths(gt);
            }
            std::ostringstream out;
            out << "t,map_runlength" << (truth_rl ? ",true_runlength" : "") << "\n";
            for (std::size_t t = 0; t < report.runlength_map.size(); ++t) {
                out << (t + 1) << ',' << report.runlength_map[t];
                if (truth_rl) out << ',' << (*truth_rl)[t];
                out << "\n";
            }
            daybreak::write_atomic(rep_prefix + "_trace.csv", out.str());
            std::ostringstream cps;
            cps << "time,estimated_cp_time\n";
            for (const auto& ev : report.detected_cps)
                cps << ev.time << ',' << ev.estimated_cp_time << "\n";
            daybreak::write_atomic(rep_prefix + "_cps.csv", cps.str());
            wrote = true;
        }
        if (!rep_labels.empty()) {
            const auto labels = daybreak::labels_from_text(daybreak::read_file(rep_labels));
            std::ostringstream out;
            out << "t,label\n";
            for (std::size_t t = 0; t < labels.size(); ++t) {
                out << (t + 1) << ',';
                if (labels[t] == daybreak::kMissingLabel)
                    out << "NA";
                else
                    out << labels[t] + 1;
                out << "\n";
            }
            daybreak::write_atomic(rep_prefix + "_labels.csv", out.str());
            wrote = true;
        }
        if (!rep_model.empty()) {
            const auto [params, meta] = daybreak::checkpoint_from_json(
                nlohmann::json::parse(daybreak::read_file(rep_model)));
            std::ostringstream env, bern;
            for (int k = 0; k < params.num_classes(); ++k) {
                for (int j = 0; j < params.dim(); ++j) {
                    if (j) {
                        env << ',';
                        bern << ',';
                    }
                    env << daybreak::format_double(
                        daybreak::fourier_envelope(params.kernels[static_cast<std::size_t>(k)], j + 1.0));
                    bern << daybreak::format_double(params.bern_means(k, j));
                }
                env << "\n";
                bern << "\n";
            }
            daybreak::write_atomic(rep_prefix + "_envelope.csv", env.str());
            daybreak::write_atomic(rep_prefix + "_bern_means.csv", bern.str());
            wrote = true;
        }
        if (!wrote) throw daybreak::DataError("report: no inputs given");
        std::cout << "report: wrote series files with prefix " << rep_prefix << "\n";
        return 0;
    }

    if (oc->parsed()) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto results = daybreak::selfcheck::run_all(oc_seed);
        bool all_pass = true;
        for (const auto& r : results) {
            std::cout << (r.pass ? "PASS" : "FAIL") << '\t' << r.name << '\t' << r.detail << "\n";
            all_pass = all_pass && r.pass;
        }
        const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (all_pass ? "PASS" : "FAIL") << "\toverall\t" << results.size()
                  << " checks in " << secs << "s\n";
        return all_pass ? 0 : 3;
    }

    if (dv->parsed()) {
        std::cout << defaults_table().values.dump(2) << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const daybreak::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const daybreak::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
