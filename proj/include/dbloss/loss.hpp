#pragma once

#include "dbloss/decomp.hpp"
#include "dbloss/tensor.hpp"

namespace dbloss {

/// Settings of the decomposition-based loss: EMA smoothing factor for the
/// horizon decomposition, seasonal/trend mixing weight beta in [0,1], and the
/// stabilizer added to the trend loss inside the alignment ratio.
struct DbLossConfig {
    SmoothingFactor alpha{0.3};
    double beta = 0.5;
    double epsilon = 1e-8;

    void validate() const;
};

/// Scalar outcome of db_loss. `total` carries the differentiation graph;
/// the component losses are exposed for reporting and for checking the
/// detachment contract. alignment_ratio is the forward value of
/// seasonal_loss / (trend_loss + epsilon), held constant under backward.
struct LossReport {
    Tensor total;
    Tensor seasonal_loss;
    Tensor trend_loss;
    double alignment_ratio = 0.0;
};

/// Mean over all elements of squared differences.
Tensor mse(const Tensor& pred, const Tensor& target);

/// Mean over all elements of absolute differences (sign subgradient).
Tensor mae(const Tensor& pred, const Tensor& target);

/// Decomposition-based loss over the forecasting horizon. Both pred and
/// target [B,F,N] are EMA-decomposed with cfg.alpha; the seasonal components
/// meet under a squared error and the trend components under an absolute
/// error. The trend term is rescaled by the detached ratio
/// seasonal_loss / (trend_loss + epsilon) so both weighted terms share one
/// scale, and the result is beta*seasonal + (1-beta)*aligned_trend.
LossReport db_loss(const Tensor& pred, const Tensor& target, const DbLossConfig& cfg);

/// Decomposition of a squared-error sum into its per-component part and the
/// trend-seasonal interaction: ideal = sum(e_T^2) + sum(e_S^2),
/// cross = 2*sum(e_T*e_S), with ideal + cross == sum((e_T+e_S)^2).
struct CrossTermReport {
    double ideal = 0.0;
    double cross = 0.0;
};

CrossTermReport mse_cross_term(const Tensor& pred_trend, const Tensor& pred_seasonal,
                               const Tensor& target_trend, const Tensor& target_seasonal);

}  // namespace dbloss
