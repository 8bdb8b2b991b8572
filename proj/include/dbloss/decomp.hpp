#pragma once

#include <cstddef>

#include "dbloss/tensor.hpp"

namespace dbloss {

/// EMA weight on the newest observation, clamped into [0.001, 0.999].
/// Smaller values smooth more heavily.
class SmoothingFactor {
public:
    static constexpr double kMin = 0.001;
    static constexpr double kMax = 0.999;

    explicit SmoothingFactor(double raw);

    double value() const { return alpha_; }
    bool was_clamped() const { return clamped_; }

private:
    double alpha_;
    bool clamped_;
};

/// Seasonal and trend components of a [B,T,N] tensor along its time axis.
/// seasonal is defined as input - trend, so seasonal + trend reproduces the
/// input over identical values.
struct DecompPair {
    Tensor seasonal;
    Tensor trend;
};

/// Route through the EMA trend computation. Both routes evaluate the same
/// recurrence e_1 = x_1, e_t = alpha*x_t + (1-alpha)*e_{t-1}.
///
///   Recursive   — fused sequential scan; exact on constant series and free
///                 of underflow, the default.
///   ClosedForm  — weighted-cumsum construction (weights (1-a)^{T-1}..1
///                 scaled by alpha after the first, divided by (1-a)^{T-t}).
///                 Falls back to the scan whenever its divisor would drop
///                 below 1e-300, so it never divides by zero.
enum class EmaPath { Auto, ClosedForm, Recursive };

/// Exponential-moving-average decomposition over the time axis of x[B,T,N].
/// Differentiable end to end: gradients flow through both components into x.
DecompPair ema_decompose(const Tensor& x, SmoothingFactor alpha, EmaPath path = EmaPath::Auto);

/// Moving-average decomposition with an odd kernel and replicate padding of
/// (kernel-1)/2 values at each end. Used by the decomposition-linear model.
DecompPair sma_decompose(const Tensor& x, std::size_t kernel);

}  // namespace dbloss
