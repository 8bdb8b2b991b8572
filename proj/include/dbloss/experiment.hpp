#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dbloss/data.hpp"
#include "dbloss/train.hpp"

namespace dbloss {

/// Flat experiment configuration, one field per config key. Every field has
/// a concrete default, so a stored config is reproducible on its own.
/// String-typed choices are validated when keys are applied or the config is
/// resolved.
struct ExperimentConfig {
    std::string data;          // CSV path; located via dataset_name when empty
    std::string dataset_name;  // known names auto-select split and length
    std::string split;         // "a:b:c" proportions; required for unknown datasets
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::string model = "dlinear";
    std::size_t sma_kernel = 25;
    std::string loss = "mse";
    double alpha = 0.3;
    double beta = 0.5;
    double epsilon = 1e-8;
    double lr = 0.005;
    std::size_t epochs = 20;
    std::size_t patience = 5;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    std::optional<std::size_t> benchmark_length;
};

/// Set one key from its text form. Unknown keys and bad values raise
/// ConfigError naming the key.
void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Read a flat key=value config file ('#' starts a comment), or a JSON
/// document — either a bare config object or a result document whose stored
/// "config" is reused verbatim.
ExperimentConfig load_config_file(const std::string& path);

/// Materialize defaults: known dataset names fill split (6:2:2) and the
/// benchmark length; the CSV path is located from the explicit path, then
/// $DBLOSS_DATA_DIR/<name>.csv, then data/<name>.csv.
ExperimentConfig resolve_config(ExperimentConfig cfg);

struct ExperimentResult {
    ExperimentConfig config;  // fully resolved
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    double wall_clock_seconds = 0.0;
    std::string artifact_version;
};

/// Resolve, load, window, train and evaluate one configuration.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log);

std::string result_to_json(const ExperimentResult& result);
ExperimentResult result_from_json(const std::string& text);

/// Run one configuration and write its JSON result document.
ExperimentResult run_and_write(const ExperimentConfig& cfg, const std::string& out_path,
                               std::ostream* log);

/// EMA-decompose a CSV into <out>.trend.csv and <out>.seasonal.csv with the
/// input's header and row count. A clamped alpha is reported on `diag`.
void decompose_csv(const std::string& input, double alpha_raw, const std::string& out_prefix,
                   std::ostream& diag);

struct SweepConfig {
    ExperimentConfig base;
    std::vector<std::size_t> horizons;
    std::vector<std::string> losses;
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 1;
    std::string out_dir = "results";
};

/// Cartesian product of horizons x losses x alphas x betas x seeds. Runs are
/// independent (optionally parallel up to `jobs`); each writes its own JSON
/// document, failures become ERROR rows, and the summary CSV is written
/// atomically after all runs complete.
void run_benchmark(const SweepConfig& sweep, std::ostream& diag);

// Comma-separated sweep lists; an empty string yields an empty list, which
// run_benchmark rejects.
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text);
std::vector<double> parse_double_list(const std::string& key, const std::string& text);
std::vector<std::string> parse_string_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& text);

/// Benchmark config file: ordinary config keys form the base run, plus
/// optional sweep keys `horizons`, `losses`, `alphas`, `betas`, `seeds`,
/// `jobs` and `out-dir`. Absent lists stay unset so the caller can default
/// them from the base config.
struct SweepFile {
    ExperimentConfig base;
    std::optional<std::vector<std::size_t>> horizons;
    std::optional<std::vector<std::string>> losses;
    std::optional<std::vector<double>> alphas;
    std::optional<std::vector<double>> betas;
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::size_t> jobs;
    std::optional<std::string> out_dir;
};

SweepFile load_sweep_file(const std::string& path);

}  // namespace dbloss
