// Shared test constructions: the disjoint-parameter forecaster used to probe
// gradient decoupling, and kink-free random instances for finite-difference
// checks of the decomposition-based loss.
#pragma once

#include <cmath>
#include <vector>

#include "dbloss/loss.hpp"
#include "dbloss/rng.hpp"
#include "dbloss/tensor.hpp"
#include "oracles.hpp"

namespace constructions {

/// Forecaster y_hat = T_hat(theta_T) + S_hat(theta_S) with disjoint
/// parameters: T_hat is constant over the horizon (so its EMA-seasonal part
/// is zero), S_hat scales a fixed alternating pattern whose EMA-trend stays
/// small against the deliberately large trend errors, keeping the trend-error
/// signs stable when the seasonal error is scaled.
struct DecouplingProbe {
    static constexpr std::size_t kBatch = 2;
    static constexpr std::size_t kHorizon = 12;
    static constexpr std::size_t kChannels = 3;

    std::vector<double> theta_trend{10.0, 20.0, -15.0};
    std::vector<double> theta_seasonal{8.0, -14.0, 4.0};
    std::vector<double> trend_error{50.0, -70.0, 100.0};

    double pattern(std::size_t t) const { return (t % 2 == 0 ? 1.0 : -1.0) + 0.5; }

    dbloss::Tensor target() const {
        std::vector<double> y(kBatch * kHorizon * kChannels);
        for (std::size_t b = 0; b < kBatch; ++b) {
            for (std::size_t t = 0; t < kHorizon; ++t) {
                for (std::size_t n = 0; n < kChannels; ++n) {
                    y[(b * kHorizon + t) * kChannels + n] = theta_trend[n] - trend_error[n];
                }
            }
        }
        return dbloss::Tensor({kBatch, kHorizon, kChannels}, std::move(y));
    }

    /// Gradient of `loss` with respect to theta_T, with the seasonal
    /// parameters scaled by `seasonal_scale`. `use_dbloss` selects between
    /// db_loss and plain mse on the same prediction.
    std::vector<double> trend_gradient(double seasonal_scale, bool use_dbloss,
                                       const dbloss::DbLossConfig& cfg) const {
        using namespace dbloss;
        Graph graph;
        const Tensor tt = graph.leaf(Tensor({1, 1, kChannels}, theta_trend));
        std::vector<double> ts_scaled(kChannels);
        for (std::size_t n = 0; n < kChannels; ++n) ts_scaled[n] = theta_seasonal[n] * seasonal_scale;
        const Tensor ts = graph.leaf(Tensor({1, 1, kChannels}, ts_scaled));

        std::vector<double> pattern_values(kBatch * kHorizon * kChannels);
        for (std::size_t b = 0; b < kBatch; ++b) {
            for (std::size_t t = 0; t < kHorizon; ++t) {
                for (std::size_t n = 0; n < kChannels; ++n) {
                    pattern_values[(b * kHorizon + t) * kChannels + n] = pattern(t);
                }
            }
        }
        const Shape full{kBatch, kHorizon, kChannels};
        const Tensor pattern_t(full, pattern_values);
        const Tensor ones = Tensor::full(full, 1.0);

        const Tensor pred = add(mul(ones, tt), mul(pattern_t, ts));
        const Tensor loss = use_dbloss ? db_loss(pred, target(), cfg).total : mse(pred, target());
        const auto grads = backward(loss);
        return grads.at(tt.node()).values();
    }
};

inline std::vector<double> normalized(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return 1.0 - dot / std::sqrt(na * nb);
}

/// Random (pred, target) pair of the given shape whose EMA-trend differences
/// stay clear of the |.| kink, so central differences remain valid.
inline std::pair<std::vector<double>, std::vector<double>> kink_free_pair(
    dbloss::Rng& rng, std::size_t batch, std::size_t len, std::size_t chans, double alpha,
    double min_gap = 1e-3) {
    while (true) {
        auto pred = oracles::random_values(rng, batch * len * chans);
        auto target = oracles::random_values(rng, batch * len * chans);
        const auto pt = oracles::recursive_ema_trend(pred, batch, len, chans, alpha);
        const auto tt = oracles::recursive_ema_trend(target, batch, len, chans, alpha);
        bool ok = true;
        for (std::size_t i = 0; i < pt.size() && ok; ++i) {
            if (std::fabs(pt[i] - tt[i]) < min_gap) ok = false;
        }
        if (ok) return {std::move(pred), std::move(target)};
    }
}

}  // namespace constructions
