#include "dbloss/loss.hpp"

#include <cmath>

namespace dbloss {

namespace {

void require_same_shape(const Tensor& pred, const Tensor& target, const char* op) {
    if (!pred.defined() || !target.defined()) {
        throw ContractError(std::string(op) + " on an undefined tensor");
    }
    if (pred.shape() != target.shape()) {
        throw DimensionError(std::string(op) + ": prediction shape " +
                             shape_to_string(pred.shape()) + " differs from target shape " +
                             shape_to_string(target.shape()));
    }
}

}  // namespace

void DbLossConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ConfigError("beta must lie in [0,1], got " + std::to_string(beta));
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw ConfigError("epsilon must be a positive finite value");
    }
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse");
    return mean(square(sub(pred, target)));
}

Tensor mae(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mae");
    return mean(abs(sub(pred, target)));
}

LossReport db_loss(const Tensor& pred, const Tensor& target, const DbLossConfig& cfg) {
    require_same_shape(pred, target, "db_loss");
    if (pred.rank() != 3) {
        throw DimensionError("db_loss expects [B,F,N] tensors, got " +
                             shape_to_string(pred.shape()));
    }
    cfg.validate();

    DecompPair pred_parts, target_parts;
    try {
        pred_parts = ema_decompose(pred, cfg.alpha);
        target_parts = ema_decompose(target, cfg.alpha);
    } catch (const NumericError& e) {
        throw NumericError(std::string("db_loss horizon decomposition overflowed: ") + e.what());
    }

    LossReport report;
    try {
        report.seasonal_loss = mse(pred_parts.seasonal, target_parts.seasonal);
    } catch (const NumericError& e) {
        throw NumericError(std::string("db_loss seasonal component overflowed: ") + e.what());
    }
    try {
        report.trend_loss = mae(pred_parts.trend, target_parts.trend);
    } catch (const NumericError& e) {
        throw NumericError(std::string("db_loss trend component overflowed: ") + e.what());
    }

    // Scale alignment: the trend term is multiplied by the ratio of the two
    // losses, evaluated on forward values and detached so no gradient flows
    // through the ratio itself.
    const Tensor ratio = detach(div(report.seasonal_loss, add(report.trend_loss, cfg.epsilon)));
    report.alignment_ratio = ratio.value();

    const Tensor aligned_trend = mul(report.trend_loss, ratio);
    try {
        report.total = add(mul(report.seasonal_loss, cfg.beta), mul(aligned_trend, 1.0 - cfg.beta));
    } catch (const NumericError& e) {
        throw NumericError(std::string("db_loss weighted total overflowed: ") + e.what());
    }
    return report;
}

CrossTermReport mse_cross_term(const Tensor& pred_trend, const Tensor& pred_seasonal,
                               const Tensor& target_trend, const Tensor& target_seasonal) {
    require_same_shape(pred_trend, target_trend, "mse_cross_term");
    require_same_shape(pred_seasonal, target_seasonal, "mse_cross_term");
    if (pred_trend.shape() != pred_seasonal.shape()) {
        throw DimensionError("mse_cross_term: trend shape " + shape_to_string(pred_trend.shape()) +
                             " differs from seasonal shape " +
                             shape_to_string(pred_seasonal.shape()));
    }

    const auto& pt = pred_trend.values();
    const auto& ps = pred_seasonal.values();
    const auto& tt = target_trend.values();
    const auto& ts = target_seasonal.values();

    double trend_sq = 0.0, seasonal_sq = 0.0, interaction = 0.0;
    for (std::size_t i = 0; i < pt.size(); ++i) {
        const double et = tt[i] - pt[i];
        const double es = ts[i] - ps[i];
        trend_sq += et * et;
        seasonal_sq += es * es;
        interaction += et * es;
    }

    CrossTermReport out;
    out.ideal = trend_sq + seasonal_sq;
    out.cross = 2.0 * interaction;
    if (!std::isfinite(out.ideal) || !std::isfinite(out.cross)) {
        throw NumericError("mse_cross_term produced a non-finite value");
    }
    return out;
}

}  // namespace dbloss
