#include "dbloss/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "dbloss/decomp.hpp"
#include "dbloss/version.hpp"

namespace dbloss {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct KnownDataset {
    std::size_t benchmark_length;
};

const std::unordered_map<std::string, KnownDataset>& known_datasets() {
    static const std::unordered_map<std::string, KnownDataset> table = {
        {"ETTh1", {14400}},
        {"ETTh2", {14400}},
        {"ETTm1", {57600}},
        {"ETTm2", {57600}},
    };
    return table;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value +
                          "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
    }
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["data"] = cfg.data;
    j["dataset-name"] = cfg.dataset_name;
    j["split"] = cfg.split;
    j["lookback"] = cfg.lookback;
    j["horizon"] = cfg.horizon;
    j["model"] = cfg.model;
    j["sma-kernel"] = cfg.sma_kernel;
    j["loss"] = cfg.loss;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["epsilon"] = cfg.epsilon;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["patience"] = cfg.patience;
    j["batch"] = cfg.batch;
    j["seed"] = cfg.seed;
    if (cfg.benchmark_length) j["benchmark-length"] = *cfg.benchmark_length;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "data") cfg.data = value.get<std::string>();
        else if (key == "dataset-name") cfg.dataset_name = value.get<std::string>();
        else if (key == "split") cfg.split = value.get<std::string>();
        else if (key == "lookback") cfg.lookback = value.get<std::size_t>();
        else if (key == "horizon") cfg.horizon = value.get<std::size_t>();
        else if (key == "model") cfg.model = value.get<std::string>();
        else if (key == "sma-kernel") cfg.sma_kernel = value.get<std::size_t>();
        else if (key == "loss") cfg.loss = value.get<std::string>();
        else if (key == "alpha") cfg.alpha = value.get<double>();
        else if (key == "beta") cfg.beta = value.get<double>();
        else if (key == "epsilon") cfg.epsilon = value.get<double>();
        else if (key == "lr") cfg.lr = value.get<double>();
        else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
        else if (key == "patience") cfg.patience = value.get<std::size_t>();
        else if (key == "batch") cfg.batch = value.get<std::size_t>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "benchmark-length") cfg.benchmark_length = value.get<std::size_t>();
        else throw ConfigError("unknown config key '" + key + "'");
    }
    parse_model_kind(cfg.model);
    parse_loss_kind(cfg.loss);
    return cfg;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + tmp + "'");
        out << content;
        if (!out) throw ConfigError("failed while writing '" + tmp + "'");
    }
    fs::rename(tmp, path);
}

}  // namespace

void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data") cfg.data = value;
    else if (key == "dataset-name") cfg.dataset_name = value;
    else if (key == "split") cfg.split = value;
    else if (key == "lookback") cfg.lookback = parse_size(key, value);
    else if (key == "horizon") cfg.horizon = parse_size(key, value);
    else if (key == "model") { parse_model_kind(value); cfg.model = value; }
    else if (key == "sma-kernel") cfg.sma_kernel = parse_size(key, value);
    else if (key == "loss") { parse_loss_kind(value); cfg.loss = value; }
    else if (key == "alpha") cfg.alpha = parse_double(key, value);
    else if (key == "beta") cfg.beta = parse_double(key, value);
    else if (key == "epsilon") cfg.epsilon = parse_double(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "epochs") cfg.epochs = parse_size(key, value);
    else if (key == "patience") cfg.patience = parse_size(key, value);
    else if (key == "batch") cfg.batch = parse_size(key, value);
    else if (key == "seed") cfg.seed = parse_size(key, value);
    else if (key == "benchmark-length") cfg.benchmark_length = parse_size(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
        }
        // A result document carries its config under "config".
        return config_from_json(j.contains("config") ? j.at("config") : j);
    }

    ExperimentConfig cfg;
    std::size_t line_no = 0;
    std::string line;
    std::istringstream stream(text);
    while (std::getline(stream, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config '" + path + "' line " + std::to_string(line_no) +
                              ": expected key=value");
        }
        apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig resolve_config(ExperimentConfig cfg) {
    parse_model_kind(cfg.model);
    parse_loss_kind(cfg.loss);
    if (cfg.lookback == 0 || cfg.horizon == 0) {
        throw ConfigError("lookback and horizon must be positive");
    }

    const auto& known = known_datasets();
    const auto it = known.find(cfg.dataset_name);
    if (it != known.end()) {
        if (cfg.split.empty()) cfg.split = "6:2:2";
        if (!cfg.benchmark_length) cfg.benchmark_length = it->second.benchmark_length;
    } else if (cfg.split.empty()) {
        if (cfg.dataset_name.empty()) {
            throw ConfigError("key 'split' is required when no known dataset-name is given");
        }
        throw ConfigError("key 'split' is required for unknown dataset '" + cfg.dataset_name +
                          "'");
    }
    SplitSpec::parse(cfg.split);

    if (cfg.data.empty()) {
        if (cfg.dataset_name.empty()) {
            throw ConfigError("either key 'data' or key 'dataset-name' must be given");
        }
        std::vector<std::string> candidates;
        if (const char* root = std::getenv("DBLOSS_DATA_DIR")) {
            candidates.push_back(std::string(root) + "/" + cfg.dataset_name + ".csv");
        }
        candidates.push_back("data/" + cfg.dataset_name + ".csv");
        for (const auto& candidate : candidates) {
            if (fs::exists(candidate)) {
                cfg.data = candidate;
                break;
            }
        }
        if (cfg.data.empty()) {
            std::string tried;
            for (const auto& c : candidates) tried += " " + c;
            throw ConfigError("no CSV found for dataset '" + cfg.dataset_name + "' (tried:" +
                              tried + "); set --data or DBLOSS_DATA_DIR");
        }
    }
    return cfg;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
    ExperimentResult result;
    result.config = resolve_config(cfg);
    result.artifact_version = kArtifactVersion;

    RawSeries raw = load_csv(result.config.data);
    if (result.config.benchmark_length) {
        raw = truncate_series(std::move(raw), *result.config.benchmark_length);
    }
    const SplitSpec split = SplitSpec::parse(result.config.split);
    const WindowedDataset data =
        WindowedDataset::build(raw, split, result.config.lookback, result.config.horizon);

    ModelSpec model_spec;
    model_spec.kind = parse_model_kind(result.config.model);
    model_spec.sma_kernel = result.config.sma_kernel;

    TrainConfig train_cfg;
    train_cfg.loss = parse_loss_kind(result.config.loss);
    train_cfg.db = DbLossConfig{SmoothingFactor(result.config.alpha), result.config.beta,
                                result.config.epsilon};
    train_cfg.learning_rate = result.config.lr;
    train_cfg.batch_size = result.config.batch;
    train_cfg.max_epochs = result.config.epochs;
    train_cfg.patience = result.config.patience;
    train_cfg.seed = result.config.seed;
    train_cfg.log = log;

    const TrainResult trained = train(model_spec, data, train_cfg);
    result.mse = trained.report.mse;
    result.mae = trained.report.mae;
    result.train_curve = trained.report.train_curve;
    result.val_curve = trained.report.val_curve;
    result.wall_clock_seconds = trained.report.wall_clock_seconds;
    return result;
}

std::string result_to_json(const ExperimentResult& result) {
    json j;
    j["artifact_version"] = result.artifact_version;
    j["config"] = config_to_json(result.config);
    j["mse"] = result.mse;
    j["mae"] = result.mae;
    j["train_curve"] = result.train_curve;
    j["val_curve"] = result.val_curve;
    j["wall_clock_seconds"] = result.wall_clock_seconds;
    return j.dump(2) + "\n";
}

ExperimentResult result_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid result JSON: ") + e.what());
    }
    ExperimentResult result;
    result.artifact_version = j.value("artifact_version", "");
    result.config = config_from_json(j.at("config"));
    result.mse = j.at("mse").get<double>();
    result.mae = j.at("mae").get<double>();
    result.train_curve = j.value("train_curve", std::vector<double>{});
    result.val_curve = j.value("val_curve", std::vector<double>{});
    result.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    return result;
}

ExperimentResult run_and_write(const ExperimentConfig& cfg, const std::string& out_path,
                               std::ostream* log) {
    ExperimentResult result = run_experiment(cfg, log);
    write_file_atomic(out_path, result_to_json(result));
    return result;
}

void decompose_csv(const std::string& input, double alpha_raw, const std::string& out_prefix,
                   std::ostream& diag) {
    const RawSeries raw = load_csv(input);
    const SmoothingFactor alpha(alpha_raw);
    if (alpha.was_clamped()) {
        diag << "warning: alpha " << alpha_raw << " outside [" << SmoothingFactor::kMin << ", "
             << SmoothingFactor::kMax << "], clamped to " << alpha.value() << "\n";
    }

    const Tensor x({1, raw.rows, raw.channels}, raw.values);
    const DecompPair parts = ema_decompose(x, alpha);

    RawSeries component = raw;
    component.values = parts.trend.values();
    write_csv(component, out_prefix + ".trend.csv");
    component.values = parts.seasonal.values();
    write_csv(component, out_prefix + ".seasonal.csv");
}

void run_benchmark(const SweepConfig& sweep, std::ostream& diag) {
    auto require_nonempty = [](bool ok, const char* name) {
        if (!ok) throw ConfigError(std::string("empty sweep list for '") + name + "'");
    };
    require_nonempty(!sweep.horizons.empty(), "horizons");
    require_nonempty(!sweep.losses.empty(), "losses");
    require_nonempty(!sweep.alphas.empty(), "alphas");
    require_nonempty(!sweep.betas.empty(), "betas");
    require_nonempty(!sweep.seeds.empty(), "seeds");
    for (const auto& loss : sweep.losses) parse_loss_kind(loss);

    fs::create_directories(sweep.out_dir);

    std::vector<ExperimentConfig> combos;
    for (const std::size_t horizon : sweep.horizons) {
        for (const auto& loss : sweep.losses) {
            for (const double alpha : sweep.alphas) {
                for (const double beta : sweep.betas) {
                    for (const std::uint64_t seed : sweep.seeds) {
                        ExperimentConfig cfg = sweep.base;
                        cfg.horizon = horizon;
                        cfg.loss = loss;
                        cfg.alpha = alpha;
                        cfg.beta = beta;
                        cfg.seed = seed;
                        combos.push_back(std::move(cfg));
                    }
                }
            }
        }
    }

    std::vector<std::string> rows(combos.size());
    std::mutex diag_mutex;
    std::atomic<std::size_t> cursor{0};

    auto run_one = [&](std::size_t idx) {
        const ExperimentConfig& cfg = combos[idx];
        char tag[160];
        std::snprintf(tag, sizeof(tag), "run_%03zu_%s_h%zu_a%g_b%g_s%llu", idx, cfg.loss.c_str(),
                      cfg.horizon, cfg.alpha, cfg.beta,
                      static_cast<unsigned long long>(cfg.seed));
        const std::string dataset =
            cfg.dataset_name.empty() ? cfg.data : cfg.dataset_name;

        char prefix[256];
        std::snprintf(prefix, sizeof(prefix), "%s,%s,%s,%zu,%g,%g,%llu", dataset.c_str(),
                      cfg.model.c_str(), cfg.loss.c_str(), cfg.horizon, cfg.alpha, cfg.beta,
                      static_cast<unsigned long long>(cfg.seed));
        try {
            const ExperimentResult result =
                run_and_write(cfg, sweep.out_dir + "/" + tag + ".json", nullptr);
            char metrics[80];
            std::snprintf(metrics, sizeof(metrics), ",%.17g,%.17g", result.mse, result.mae);
            rows[idx] = std::string(prefix) + metrics;
            std::lock_guard<std::mutex> lock(diag_mutex);
            diag << tag << " mse=" << result.mse << " mae=" << result.mae << "\n";
        } catch (const std::exception& e) {
            rows[idx] = std::string(prefix) + ",ERROR,ERROR";
            std::lock_guard<std::mutex> lock(diag_mutex);
            diag << tag << " failed: " << e.what() << "\n";
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(sweep.jobs, combos.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < combos.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                while (true) {
                    const std::size_t idx = cursor.fetch_add(1);
                    if (idx >= combos.size()) return;
                    run_one(idx);
                }
            });
        }
        for (auto& worker : workers) worker.join();
    }

    std::string summary = "dataset,model,loss,horizon,alpha,beta,seed,mse,mae\n";
    for (const auto& row : rows) summary += row + "\n";
    write_file_atomic(sweep.out_dir + "/summary.csv", summary);
}

std::vector<std::string> parse_string_list(const std::string& text) {
    std::vector<std::string> items;
    if (trim(text).empty()) return items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(trim(item));
    return items;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> items;
    for (const auto& item : parse_string_list(text)) items.push_back(parse_size(key, item));
    return items;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> items;
    for (const auto& item : parse_string_list(text)) items.push_back(parse_double(key, item));
    return items;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& text) {
    std::vector<std::uint64_t> items;
    for (const auto& item : parse_string_list(text)) {
        items.push_back(static_cast<std::uint64_t>(parse_size(key, item)));
    }
    return items;
}

SweepFile load_sweep_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");

    SweepFile sweep;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config '" + path + "' line " + std::to_string(line_no) +
                              ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "horizons") sweep.horizons = parse_size_list(key, value);
        else if (key == "losses") sweep.losses = parse_string_list(value);
        else if (key == "alphas") sweep.alphas = parse_double_list(key, value);
        else if (key == "betas") sweep.betas = parse_double_list(key, value);
        else if (key == "seeds") sweep.seeds = parse_seed_list(key, value);
        else if (key == "jobs") sweep.jobs = parse_size(key, value);
        else if (key == "out-dir") sweep.out_dir = value;
        else apply_config_key(sweep.base, key, value);
    }
    return sweep;
}

}  // namespace dbloss
