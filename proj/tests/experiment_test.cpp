#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dbloss/experiment.hpp"
#include "dbloss/version.hpp"

using namespace dbloss;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "dbloss_experiment_test";
    fs::create_directories(dir);
    return dir;
}

std::string write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path.string();
}

std::string synthetic_csv(std::uint64_t seed = 101, std::size_t rows = 420) {
    const fs::path path = work_dir() / ("series_" + std::to_string(seed) + ".csv");
    write_csv(synthetic_series(rows, 2, seed), path.string());
    return path.string();
}

ExperimentConfig tiny_config(const std::string& loss = "dbloss") {
    ExperimentConfig cfg;
    cfg.data = synthetic_csv();
    cfg.split = "6:2:2";
    cfg.lookback = 16;
    cfg.horizon = 8;
    cfg.model = "dlinear";
    cfg.sma_kernel = 9;
    cfg.loss = loss;
    cfg.epochs = 3;
    cfg.batch = 64;
    cfg.seed = 5;
    return cfg;
}

nlohmann::json without_wall_clock(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    j.erase("wall_clock_seconds");
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args, const fs::path& stdout_path, const fs::path& stderr_path) {
    const char* cli = std::getenv("DBLOSS_CLI");
    REQUIRE(cli != nullptr);
    const std::string cmd = std::string(cli) + " " + args + " >" + stdout_path.string() + " 2>" +
                            stderr_path.string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config keys validate their values and reject unknown names") {
    ExperimentConfig cfg;
    apply_config_key(cfg, "lookback", "48");
    CHECK(cfg.lookback == 48);
    apply_config_key(cfg, "loss", "mae");
    CHECK(cfg.loss == "mae");
    apply_config_key(cfg, "benchmark-length", "1000");
    CHECK(cfg.benchmark_length == 1000);

    try {
        apply_config_key(cfg, "looback", "48");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("looback") != std::string::npos);
    }
    try {
        apply_config_key(cfg, "loss", "dblos");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dbloss") != std::string::npos);  // names the valid losses
    }
    CHECK_THROWS_AS(apply_config_key(cfg, "lookback", "12.5"), ConfigError);
    CHECK_THROWS_AS(apply_config_key(cfg, "alpha", "abc"), ConfigError);
}

TEST_CASE("flat config files parse with comments") {
    const auto path = write_text(work_dir() / "flat.cfg",
                                 "# demo configuration\n"
                                 "dataset-name=ETTh1\n"
                                 "loss = dbloss\n"
                                 "alpha=0.2  # heavier smoothing\n"
                                 "\n"
                                 "epochs=7\n");
    const ExperimentConfig cfg = load_config_file(path);
    CHECK(cfg.dataset_name == "ETTh1");
    CHECK(cfg.loss == "dbloss");
    CHECK(cfg.alpha == 0.2);
    CHECK(cfg.epochs == 7);
    CHECK(cfg.lookback == 96);  // untouched default

    const auto bad = write_text(work_dir() / "bad.cfg", "lookback\n");
    CHECK_THROWS_AS(load_config_file(bad), ConfigError);
}

TEST_CASE("resolution fills known-dataset defaults") {
    ExperimentConfig cfg;
    cfg.dataset_name = "ETTh1";
    cfg.data = synthetic_csv();  // explicit path wins over lookup
    const ExperimentConfig resolved = resolve_config(cfg);
    CHECK(resolved.split == "6:2:2");
    CHECK(resolved.benchmark_length == 14400);

    ExperimentConfig ettm;
    ettm.dataset_name = "ETTm2";
    ettm.data = cfg.data;
    CHECK(resolve_config(ettm).benchmark_length == 57600);

    ExperimentConfig unknown;
    unknown.dataset_name = "mystery";
    unknown.data = cfg.data;
    try {
        resolve_config(unknown);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("split") != std::string::npos);
    }
}

TEST_CASE("dataset files resolve through DBLOSS_DATA_DIR") {
    const fs::path dir = work_dir() / "datadir";
    fs::create_directories(dir);
    write_csv(synthetic_series(64, 1, 3), (dir / "ETTh1.csv").string());
    setenv("DBLOSS_DATA_DIR", dir.string().c_str(), 1);

    ExperimentConfig cfg;
    cfg.dataset_name = "ETTh1";
    const ExperimentConfig resolved = resolve_config(cfg);
    CHECK(resolved.data == (dir / "ETTh1.csv").string());
    unsetenv("DBLOSS_DATA_DIR");

    ExperimentConfig missing;
    missing.dataset_name = "ETTh2";
    try {
        resolve_config(missing);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("ETTh2") != std::string::npos);
    }
}

TEST_CASE("experiments are deterministic and reproducible from their result") {
    const ExperimentConfig cfg = tiny_config();
    const ExperimentResult first = run_experiment(cfg, nullptr);
    const ExperimentResult second = run_experiment(cfg, nullptr);
    CHECK(first.mse == second.mse);
    CHECK(first.mae == second.mae);
    CHECK(first.train_curve == second.train_curve);
    CHECK(first.artifact_version == kArtifactVersion);

    // byte-identical JSON apart from the wall clock
    CHECK(without_wall_clock(result_to_json(first)) == without_wall_clock(result_to_json(second)));

    // a result document works as a config and reproduces itself bitwise
    const ExperimentResult parsed = result_from_json(result_to_json(first));
    const ExperimentResult replay = run_experiment(parsed.config, nullptr);
    CHECK(replay.mse == first.mse);
    CHECK(replay.mae == first.mae);
}

TEST_CASE("config round trip through a JSON result document") {
    const ExperimentConfig cfg = tiny_config("mse");
    const ExperimentResult result = run_experiment(cfg, nullptr);
    const auto json_path = write_text(work_dir() / "result.json", result_to_json(result));
    const ExperimentConfig loaded = load_config_file(json_path);
    CHECK(loaded.data == result.config.data);
    CHECK(loaded.loss == "mse");
    CHECK(loaded.seed == result.config.seed);
    CHECK(loaded.benchmark_length == result.config.benchmark_length);
}

TEST_CASE("decompose_csv writes reconstructing component files") {
    const auto input = write_text(work_dir() / "tiny.csv",
                                  "date,v\n"
                                  "t1,1\n"
                                  "t2,2\n"
                                  "t3,3\n");
    const std::string prefix = (work_dir() / "tiny_parts").string();
    std::ostringstream diag;
    decompose_csv(input, 0.5, prefix, diag);
    CHECK(diag.str().empty());

    const RawSeries trend = load_csv(prefix + ".trend.csv");
    REQUIRE(trend.rows == 3);
    CHECK(trend.channel_names == std::vector<std::string>{"v"});
    CHECK(trend.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(trend.at(1, 0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(trend.at(2, 0) == doctest::Approx(2.25).epsilon(1e-12));

    const RawSeries seasonal = load_csv(prefix + ".seasonal.csv");
    REQUIRE(seasonal.rows == 3);
    const RawSeries original = load_csv(input);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(std::fabs(trend.at(r, 0) + seasonal.at(r, 0) - original.at(r, 0)) <= 1e-12);
    }
}

TEST_CASE("decompose_csv warns when alpha is clamped") {
    const auto input = write_text(work_dir() / "flat_series.csv",
                                  "date,v\nt1,5\nt2,5\nt3,5\n");
    const std::string prefix = (work_dir() / "flat_parts").string();
    std::ostringstream diag;
    decompose_csv(input, 1.7, prefix, diag);
    const std::string msg = diag.str();
    CHECK(msg.find("0.001") != std::string::npos);
    CHECK(msg.find("0.999") != std::string::npos);

    const RawSeries seasonal = load_csv(prefix + ".seasonal.csv");
    for (std::size_t r = 0; r < seasonal.rows; ++r) CHECK(seasonal.at(r, 0) == 0.0);
}

TEST_CASE("benchmark sweeps emit one row per combination, errors included") {
    SweepConfig sweep;
    sweep.base = tiny_config("mse");
    sweep.base.epochs = 2;
    sweep.horizons = {8, 399};  // 399 cannot be windowed: becomes an ERROR row
    sweep.losses = {"mse", "dbloss"};
    sweep.alphas = {0.3};
    sweep.betas = {0.5};
    sweep.seeds = {1};
    sweep.jobs = 2;
    sweep.out_dir = (work_dir() / "sweep_out").string();

    std::ostringstream diag;
    run_benchmark(sweep, diag);

    const std::string summary = read_file(sweep.out_dir + "/summary.csv");
    std::istringstream lines(summary);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "dataset,model,loss,horizon,alpha,beta,seed,mse,mae");
    std::size_t rows = 0, errors = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.find("ERROR") != std::string::npos) ++errors;
    }
    CHECK(rows == 4);
    CHECK(errors == 2);  // both losses fail at horizon 399

    std::size_t json_files = 0;
    for (const auto& entry : fs::directory_iterator(sweep.out_dir)) {
        if (entry.path().extension() == ".json") ++json_files;
    }
    CHECK(json_files == 2);  // one per successful run
}

TEST_CASE("benchmark rejects empty sweep lists") {
    SweepConfig sweep;
    sweep.base = tiny_config("mse");
    sweep.losses = {"mse"};
    sweep.alphas = {0.3};
    sweep.betas = {0.5};
    sweep.seeds = {1};
    sweep.horizons = {};  // explicitly empty
    std::ostringstream diag;
    CHECK_THROWS_AS(run_benchmark(sweep, diag), ConfigError);
}

TEST_CASE("sweep files combine base keys and sweep lists") {
    const auto path = write_text(work_dir() / "sweep.cfg",
                                 "loss=mse\n"
                                 "horizons=8,16\n"
                                 "losses=mse,dbloss\n"
                                 "betas=0,0.5,1\n"
                                 "jobs=2\n"
                                 "out-dir=somewhere\n");
    const SweepFile file = load_sweep_file(path);
    CHECK(file.base.loss == "mse");
    CHECK(file.horizons == std::vector<std::size_t>{8, 16});
    CHECK(file.losses == std::vector<std::string>{"mse", "dbloss"});
    CHECK(file.betas == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(file.jobs == 2);
    CHECK(file.out_dir == "somewhere");
    CHECK(!file.alphas.has_value());

    const auto empty_list = write_text(work_dir() / "sweep_empty.cfg", "horizons=\n");
    CHECK(load_sweep_file(empty_list).horizons->empty());
}

TEST_CASE("cli: config errors name the offending value and exit nonzero") {
    const fs::path out = work_dir() / "cli_out.txt";
    const fs::path err = work_dir() / "cli_err.txt";
    const int code = run_cli("train --loss dblos --data " + synthetic_csv() + " --split 6:2:2",
                             out, err);
    CHECK(code != 0);
    const std::string message = read_file(err.string());
    CHECK(message.find("dblos") != std::string::npos);
    CHECK(message.find("dbloss") != std::string::npos);
}

TEST_CASE("cli: decompose and train round trip") {
    const fs::path out = work_dir() / "cli_out.txt";
    const fs::path err = work_dir() / "cli_err.txt";
    const std::string csv = synthetic_csv(202, 420);

    const std::string prefix = (work_dir() / "cli_parts").string();
    CHECK(run_cli("decompose --input " + csv + " --alpha 0.4 --out " + prefix, out, err) == 0);
    CHECK(fs::exists(prefix + ".trend.csv"));
    CHECK(fs::exists(prefix + ".seasonal.csv"));

    const std::string result_a = (work_dir() / "cli_result_a.json").string();
    const std::string result_b = (work_dir() / "cli_result_b.json").string();
    const std::string train_args = "train --quiet --data " + csv +
                                   " --split 6:2:2 --lookback 16 --horizon 8 --model dlinear"
                                   " --sma-kernel 9 --loss dbloss --epochs 2 --seed 4 --out ";
    REQUIRE(run_cli(train_args + result_a, out, err) == 0);
    REQUIRE(run_cli(train_args + result_b, out, err) == 0);
    CHECK(without_wall_clock(read_file(result_a)) == without_wall_clock(read_file(result_b)));

    // feed the result document back as the config
    const std::string result_c = (work_dir() / "cli_result_c.json").string();
    REQUIRE(run_cli("train --quiet --config " + result_a + " --out " + result_c, out, err) == 0);
    const auto a = nlohmann::json::parse(read_file(result_a));
    const auto c = nlohmann::json::parse(read_file(result_c));
    CHECK(a.at("mse") == c.at("mse"));
    CHECK(a.at("mae") == c.at("mae"));
}
