#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dbloss/experiment.hpp"
#include "dbloss/version.hpp"

namespace {

using dbloss::ExperimentConfig;

/// One --flag per config key; values go through apply_config_key so flags,
/// config files and JSON configs share a single validation path.
struct ConfigFlags {
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;

    void attach(CLI::App* cmd) {
        static const std::vector<std::pair<const char*, const char*>> keys = {
            {"data", "CSV path (header: date,<c1>,...,<cN>)"},
            {"dataset-name", "dataset name; ETTh1/ETTh2/ETTm1/ETTm2 auto-select split and length"},
            {"split", "train:val:test proportions, e.g. 6:2:2"},
            {"lookback", "input window length"},
            {"horizon", "forecast window length"},
            {"benchmark-length", "truncate the series to its first N rows"},
            {"model", "backbone: linear or dlinear"},
            {"sma-kernel", "odd moving-average kernel of the dlinear backbone"},
            {"loss", "training objective: mse, mae or dbloss"},
            {"alpha", "EMA smoothing factor of the dbloss decomposition"},
            {"beta", "dbloss seasonal/trend mixing weight in [0,1]"},
            {"epsilon", "dbloss alignment stabilizer"},
            {"lr", "learning rate"},
            {"epochs", "maximum training epochs"},
            {"patience", "early-stopping patience in epochs"},
            {"batch", "batch size"},
            {"seed", "run seed"},
        };
        for (const auto& [key, help] : keys) {
            auto& slot = values[key];
            options.emplace_back(key, cmd->add_option("--" + std::string(key), slot, help));
        }
    }

    void apply(ExperimentConfig& cfg) const {
        for (const auto& [key, option] : options) {
            if (option->count() > 0) dbloss::apply_config_key(cfg, key, values.at(key));
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-series forecasting with a decomposition-based training loss"};
    app.set_version_flag("--version", dbloss::kArtifactVersion);
    app.require_subcommand(1);

    auto* decompose = app.add_subcommand(
        "decompose", "split a CSV into <out>.trend.csv and <out>.seasonal.csv");
    std::string dec_input, dec_out;
    double dec_alpha = 0.3;
    decompose->add_option("--input", dec_input, "input CSV")->required();
    decompose->add_option("--alpha", dec_alpha, "EMA smoothing factor");
    decompose->add_option("--out", dec_out, "output path prefix")->required();

    auto* train = app.add_subcommand("train", "train and evaluate one configuration");
    std::string train_config, train_out = "result.json";
    bool train_quiet = false;
    train->add_option("--config", train_config,
                      "key=value config file, or a result JSON to reproduce");
    train->add_option("--out", train_out, "result JSON path");
    train->add_flag("--quiet", train_quiet, "suppress per-epoch log lines");
    ConfigFlags train_flags;
    train_flags.attach(train);

    auto* benchmark = app.add_subcommand(
        "benchmark", "sweep horizons x losses x alphas x betas x seeds");
    std::string bench_config;
    std::string bench_horizons, bench_losses, bench_alphas, bench_betas, bench_seeds;
    std::size_t bench_jobs = 0;
    std::string bench_out_dir;
    benchmark->add_option("--config", bench_config, "config file with sweep lists");
    auto* opt_horizons = benchmark->add_option("--horizons", bench_horizons, "e.g. 96,192,336,720");
    auto* opt_losses = benchmark->add_option("--losses", bench_losses, "e.g. mse,dbloss");
    auto* opt_alphas = benchmark->add_option("--alphas", bench_alphas, "e.g. 0.1,0.3,0.5");
    auto* opt_betas = benchmark->add_option("--betas", bench_betas, "e.g. 0,0.2,0.4,0.6,0.8,1.0");
    auto* opt_seeds = benchmark->add_option("--seeds", bench_seeds, "e.g. 1,2,3");
    auto* opt_jobs = benchmark->add_option("--jobs", bench_jobs, "parallel runs (default 1)");
    auto* opt_out_dir = benchmark->add_option("--out-dir", bench_out_dir,
                                              "output directory (default results)");
    ConfigFlags bench_flags;
    bench_flags.attach(benchmark);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (decompose->parsed()) {
            dbloss::decompose_csv(dec_input, dec_alpha, dec_out, std::cerr);
            std::cout << dec_out << ".trend.csv\n" << dec_out << ".seasonal.csv\n";
            return 0;
        }

        if (train->parsed()) {
            ExperimentConfig cfg;
            if (!train_config.empty()) cfg = dbloss::load_config_file(train_config);
            train_flags.apply(cfg);
            const auto result =
                dbloss::run_and_write(cfg, train_out, train_quiet ? nullptr : &std::cerr);
            char line[128];
            std::snprintf(line, sizeof(line), "mse=%.6f mae=%.6f wall_clock=%.1fs -> %s",
                          result.mse, result.mae, result.wall_clock_seconds, train_out.c_str());
            std::cout << line << "\n";
            return 0;
        }

        dbloss::SweepFile file;
        if (!bench_config.empty()) file = dbloss::load_sweep_file(bench_config);
        bench_flags.apply(file.base);

        dbloss::SweepConfig sweep;
        sweep.base = file.base;
        sweep.horizons = opt_horizons->count()
                             ? dbloss::parse_size_list("horizons", bench_horizons)
                             : file.horizons.value_or(std::vector<std::size_t>{file.base.horizon});
        sweep.losses = opt_losses->count()
                           ? dbloss::parse_string_list(bench_losses)
                           : file.losses.value_or(std::vector<std::string>{file.base.loss});
        sweep.alphas = opt_alphas->count()
                           ? dbloss::parse_double_list("alphas", bench_alphas)
                           : file.alphas.value_or(std::vector<double>{file.base.alpha});
        sweep.betas = opt_betas->count() ? dbloss::parse_double_list("betas", bench_betas)
                                         : file.betas.value_or(std::vector<double>{file.base.beta});
        sweep.seeds = opt_seeds->count()
                          ? dbloss::parse_seed_list("seeds", bench_seeds)
                          : file.seeds.value_or(std::vector<std::uint64_t>{file.base.seed});
        sweep.jobs = opt_jobs->count() ? bench_jobs : file.jobs.value_or(1);
        sweep.out_dir = opt_out_dir->count() ? bench_out_dir : file.out_dir.value_or("results");

        dbloss::run_benchmark(sweep, std::cerr);
        std::cout << sweep.out_dir << "/summary.csv\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
