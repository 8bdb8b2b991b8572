#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dbloss/decomp.hpp"
#include "oracles.hpp"

using namespace dbloss;

namespace {

Tensor series(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({1, n, 1}, std::move(v));
}

// mixed absolute/relative bound: |a-b| <= tol * (1 + |b|)
bool close_to(double a, double b, double tol) { return std::fabs(a - b) <= tol * (1.0 + std::fabs(b)); }

double sample_variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("smoothing factor clamps into [0.001, 0.999]") {
    CHECK(SmoothingFactor(0.3).value() == 0.3);
    CHECK_FALSE(SmoothingFactor(0.3).was_clamped());
    CHECK(SmoothingFactor(0.0).value() == 0.001);
    CHECK(SmoothingFactor(1.0).value() == 0.999);
    CHECK(SmoothingFactor(-5.0).was_clamped());
    CHECK_THROWS_AS(SmoothingFactor(std::nan("")), ConfigError);
}

TEST_CASE("hand-derived EMA decomposition, alpha 0.5") {
    for (const auto path : {EmaPath::Auto, EmaPath::ClosedForm, EmaPath::Recursive}) {
        const auto parts = ema_decompose(series({1, 2, 3}), SmoothingFactor(0.5), path);
        const auto& trend = parts.trend.values();
        const auto& seasonal = parts.seasonal.values();
        REQUIRE(trend.size() == 3);
        CHECK(trend[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(trend[1] == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(trend[2] == doctest::Approx(2.25).epsilon(1e-12));
        CHECK(seasonal[0] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(seasonal[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(seasonal[2] == doctest::Approx(0.75).epsilon(1e-12));
    }
}

TEST_CASE("constant series is an exact fixed point") {
    const double c = 0.731234577;
    const std::vector<double> xs(17, c);
    for (const double alpha : {0.05, 0.31, 0.5, 0.77, 0.999}) {
        const auto parts = ema_decompose(series(std::vector<double>(xs)), SmoothingFactor(alpha));
        for (double t : parts.trend.values()) CHECK(t == c);
        for (double s : parts.seasonal.values()) CHECK(s == 0.0);
    }
}

TEST_CASE("single-step series decomposes to itself") {
    const auto parts = ema_decompose(series({3.25}), SmoothingFactor(0.42));
    CHECK(parts.trend.values() == std::vector<double>{3.25});
    CHECK(parts.seasonal.values() == std::vector<double>{0.0});
}

TEST_CASE("shipped decomposition matches the recursive oracle") {
    Rng rng(29);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t batch = 1 + rng.next_below(4);
        const std::size_t len = 1 + rng.next_below(128);
        const std::size_t chans = 1 + rng.next_below(5);
        const double alpha = rng.next_uniform(0.05, 0.95);
        const auto x = oracles::random_values(rng, batch * len * chans);
        const auto expected = oracles::recursive_ema_trend(x, batch, len, chans, alpha);

        const auto parts =
            ema_decompose(Tensor({batch, len, chans}, x), SmoothingFactor(alpha));
        const auto& trend = parts.trend.values();
        for (std::size_t i = 0; i < trend.size(); ++i) {
            CHECK(close_to(trend[i], expected[i], 1e-9));
        }
        // bitwise reconstruction
        const auto& seasonal = parts.seasonal.values();
        for (std::size_t i = 0; i < trend.size(); ++i) CHECK(seasonal[i] + trend[i] == x[i]);
    }
}

TEST_CASE("closed form agrees with the oracle wherever its divisor is sound") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t len = 1 + rng.next_below(256);
        const double alpha = rng.next_uniform(0.05, 0.9);
        if (static_cast<double>(len - 1) * std::log1p(-alpha) < std::log(1e-300)) continue;
        const auto x = oracles::random_values(rng, len);
        const auto expected = oracles::recursive_ema_trend(x, 1, len, 1, alpha);
        const auto parts =
            ema_decompose(series(std::vector<double>(x)), SmoothingFactor(alpha), EmaPath::ClosedForm);
        for (std::size_t i = 0; i < len; ++i) {
            CHECK(close_to(parts.trend.values()[i], expected[i], 1e-9));
        }
    }
}

TEST_CASE("closed form falls back instead of dividing by an underflowed weight") {
    // (1-0.7)^719 is far below 1e-300
    Rng rng(37);
    const std::size_t len = 720;
    const auto x = oracles::random_values(rng, len);
    const auto expected = oracles::recursive_ema_trend(x, 1, len, 1, 0.7);
    const auto parts =
        ema_decompose(series(std::vector<double>(x)), SmoothingFactor(0.7), EmaPath::ClosedForm);
    for (std::size_t i = 0; i < len; ++i) {
        CHECK(close_to(parts.trend.values()[i], expected[i], 1e-9));
    }
}

TEST_CASE("heavier smoothing flattens the trend") {
    Rng rng(43);
    const auto x = oracles::random_values(rng, 128);
    double previous = -1.0;
    for (const double alpha : {0.1, 0.5, 0.9}) {
        const auto parts = ema_decompose(series(std::vector<double>(x)), SmoothingFactor(alpha));
        const double var = sample_variance(parts.trend.values());
        CHECK(var >= previous);  // variance non-increasing as alpha decreases
        previous = var;
    }
}

TEST_CASE("channels decompose independently") {
    Rng rng(47);
    const std::size_t len = 40, chans = 3;
    const auto x = oracles::random_values(rng, len * chans);
    const auto joint = ema_decompose(Tensor({1, len, chans}, x), SmoothingFactor(0.35));

    for (std::size_t c = 0; c < chans; ++c) {
        std::vector<double> column(len);
        for (std::size_t t = 0; t < len; ++t) column[t] = x[t * chans + c];
        const auto single = ema_decompose(series(std::move(column)), SmoothingFactor(0.35));
        for (std::size_t t = 0; t < len; ++t) {
            CHECK(joint.trend.values()[t * chans + c] == single.trend.values()[t]);
        }
    }
}

TEST_CASE("ema components are differentiable on both paths") {
    Rng rng(53);
    const Shape shape{2, 12, 2};
    const auto x = oracles::random_values(rng, 48);
    const std::vector<double> ones(48, 1.0);
    for (const auto path : {EmaPath::Recursive, EmaPath::ClosedForm}) {
        const double worst_trend = oracles::check_gradient(
            [&](const Tensor& t) {
                return square(ema_decompose(t, SmoothingFactor(0.4), path).trend);
            },
            shape, x, ones);
        const double worst_seasonal = oracles::check_gradient(
            [&](const Tensor& t) {
                return square(ema_decompose(t, SmoothingFactor(0.4), path).seasonal);
            },
            shape, x, ones);
        CHECK(worst_trend < 1e-5);
        CHECK(worst_seasonal < 1e-5);
    }
}

TEST_CASE("ema rejects malformed input") {
    CHECK_THROWS_AS(ema_decompose(Tensor({2, 2}, {1, 2, 3, 4}), SmoothingFactor(0.5)),
                    DimensionError);
    CHECK_THROWS_AS(ema_decompose(Tensor{}, SmoothingFactor(0.5)), DimensionError);
}

TEST_CASE("hand-derived SMA decomposition, kernel 3") {
    const auto parts = sma_decompose(series({1, 2, 3}), 3);
    const auto& trend = parts.trend.values();
    CHECK(trend[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(trend[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(trend[2] == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
    const auto& seasonal = parts.seasonal.values();
    CHECK(seasonal[0] == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    CHECK(seasonal[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(seasonal[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sma degenerate cases are exact") {
    Rng rng(59);
    const auto x = oracles::random_values(rng, 24);
    const auto identity = sma_decompose(series(std::vector<double>(x)), 1);
    CHECK(identity.trend.values() == x);
    for (double s : identity.seasonal.values()) CHECK(s == 0.0);

    const std::vector<double> constant(24, -1.875);
    const auto flat = sma_decompose(series(std::vector<double>(constant)), 7);
    CHECK(flat.trend.values() == constant);
    for (double s : flat.seasonal.values()) CHECK(s == 0.0);
}

TEST_CASE("sma matches the padded-window oracle") {
    Rng rng(61);
    for (const std::size_t kernel : {3u, 5u, 25u}) {
        const std::size_t batch = 2, len = 30, chans = 2;
        const auto x = oracles::random_values(rng, batch * len * chans);
        const auto expected = oracles::padded_sma_trend(x, batch, len, chans, kernel);
        const auto parts = sma_decompose(Tensor({batch, len, chans}, x), kernel);
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(parts.trend.values()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
        }
        const auto& seasonal = parts.seasonal.values();
        const auto& trend = parts.trend.values();
        for (std::size_t i = 0; i < expected.size(); ++i) CHECK(seasonal[i] + trend[i] == x[i]);
    }
}

TEST_CASE("sma rejects even kernels") {
    CHECK_THROWS_AS(sma_decompose(series({1, 2, 3}), 4), ContractError);
    CHECK_THROWS_AS(sma_decompose(series({1, 2, 3}), 0), ContractError);
}

TEST_CASE("sma components are differentiable") {
    Rng rng(67);
    const Shape shape{1, 14, 2};
    const auto x = oracles::random_values(rng, 28);
    const std::vector<double> ones(28, 1.0);
    const double worst_trend = oracles::check_gradient(
        [&](const Tensor& t) { return square(sma_decompose(t, 5).trend); }, shape, x, ones);
    const double worst_seasonal = oracles::check_gradient(
        [&](const Tensor& t) { return square(sma_decompose(t, 5).seasonal); }, shape, x, ones);
    CHECK(worst_trend < 1e-5);
    CHECK(worst_seasonal < 1e-5);
}

TEST_CASE("kernel longer than the series still averages the padded window") {
    const auto parts = sma_decompose(series({1, 2, 3}), 25);
    // every window covers the whole padded series; interior mass shifts with t
    const auto& trend = parts.trend.values();
    const auto expected = oracles::padded_sma_trend({1, 2, 3}, 1, 3, 1, 25);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(trend[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
}
