#include "dbloss/decomp.hpp"

#include <algorithm>
#include <cmath>

namespace dbloss {

namespace {

constexpr double kDivisorFloor = 1e-300;

void require_btn(const Tensor& x, const char* op) {
    if (!x.defined() || x.rank() != 3) {
        throw DimensionError(std::string(op) + " expects a [B,T,N] tensor, got " +
                             (x.defined() ? shape_to_string(x.shape()) : std::string("undefined")));
    }
}

/// Fused EMA scan, e_t = e_{t-1} + alpha*(x_t - e_{t-1}). This incremental
/// form keeps constant series exact fixed points, which the textbook
/// alpha*x + (1-alpha)*e arrangement does not in floating point.
Tensor ema_trend_scan(const Tensor& x, double alpha) {
    const Shape& shape = x.shape();
    const std::size_t batch = shape[0], len = shape[1], chans = shape[2];
    const auto& xv = x.values();

    std::vector<double> trend(xv.size());
    std::vector<double> state(chans);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = b * len * chans;
        for (std::size_t n = 0; n < chans; ++n) state[n] = xv[base + n];
        for (std::size_t n = 0; n < chans; ++n) trend[base + n] = state[n];
        for (std::size_t t = 1; t < len; ++t) {
            const std::size_t row = base + t * chans;
            for (std::size_t n = 0; n < chans; ++n) {
                state[n] += alpha * (xv[row + n] - state[n]);
                trend[row + n] = state[n];
            }
        }
    }

    if (!x.has_node()) return Tensor(shape, std::move(trend));

    const int px = x.node();
    const std::size_t total = xv.size();
    // Adjoint of the linear recurrence: suffix scan h_t = g_t + (1-a)h_{t+1},
    // then xbar_0 = h_0 and xbar_t = a*h_t for t >= 1.
    auto pull = [px, alpha, batch, len, chans, total](const std::vector<double>& gout,
                                                      AdjointSink& sink) {
        auto& gx = sink.grad_for(px, total);
        const double keep = 1.0 - alpha;
        std::vector<double> h(chans);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = b * len * chans;
            std::fill(h.begin(), h.end(), 0.0);
            for (std::size_t t = len; t-- > 0;) {
                const std::size_t row = base + t * chans;
                for (std::size_t n = 0; n < chans; ++n) {
                    h[n] = gout[row + n] + keep * h[n];
                    gx[row + n] += (t == 0) ? h[n] : alpha * h[n];
                }
            }
        }
    };
    return x.graph()->record_op(shape, std::move(trend), {px}, std::move(pull));
}

/// Weighted-cumsum trend: W = [(1-a)^{T-1},...,1], W[1:] *= a, reshaped to
/// [1,T,1]; trend = cumsum(x*W, time) / (1-a)^{T-t}. Returns an undefined
/// tensor when the divisor would underflow, signalling the caller to fall
/// back to the scan.
Tensor ema_trend_closed_form(const Tensor& x, double alpha) {
    const Shape& shape = x.shape();
    const std::size_t len = shape[1];

    std::vector<double> divisor(len);
    divisor[len - 1] = 1.0;
    for (std::size_t t = len - 1; t-- > 0;) divisor[t] = divisor[t + 1] * (1.0 - alpha);
    if (divisor[0] < kDivisorFloor) return Tensor{};

    std::vector<double> weights(len);
    weights[0] = divisor[0];
    for (std::size_t t = 1; t < len; ++t) weights[t] = alpha * divisor[t];

    const Tensor w({1, len, 1}, std::move(weights));
    const Tensor d({1, len, 1}, std::move(divisor));
    return div(cumsum(mul(x, w), 1), d);
}

}  // namespace

SmoothingFactor::SmoothingFactor(double raw) {
    if (!std::isfinite(raw)) throw ConfigError("smoothing factor must be finite");
    alpha_ = std::clamp(raw, kMin, kMax);
    clamped_ = alpha_ != raw;
}

namespace {

/// seasonal := x - trend0, then trend := x - seasonal. The re-derived trend
/// is within one ulp of trend0 and carries the same Jacobian, but the pair
/// now reconstructs x bitwise under one addition.
DecompPair paired_with_residual(const Tensor& x, const Tensor& trend0) {
    Tensor seasonal = sub(x, trend0);
    Tensor trend = sub(x, seasonal);
    return DecompPair{std::move(seasonal), std::move(trend)};
}

}  // namespace

DecompPair ema_decompose(const Tensor& x, SmoothingFactor alpha, EmaPath path) {
    require_btn(x, "ema_decompose");
    Tensor trend;
    if (path == EmaPath::ClosedForm) {
        trend = ema_trend_closed_form(x, alpha.value());
    }
    if (!trend.defined()) trend = ema_trend_scan(x, alpha.value());
    return paired_with_residual(x, trend);
}

DecompPair sma_decompose(const Tensor& x, std::size_t kernel) {
    require_btn(x, "sma_decompose");
    if (kernel == 0 || kernel % 2 == 0) {
        throw ContractError("sma_decompose kernel must be odd and positive, got " +
                            std::to_string(kernel));
    }
    const Shape& shape = x.shape();
    const std::size_t batch = shape[0], len = shape[1], chans = shape[2];
    const auto& xv = x.values();
    const std::size_t half = (kernel - 1) / 2;
    const double k = static_cast<double>(kernel);

    // index with replicate padding at both ends
    auto clamp_t = [len](std::ptrdiff_t t) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(len) - 1));
    };

    // Deviation-from-center arrangement of the windowed mean,
    // x_t + sum_j (x_j - x_t)/k: the same linear map, but degenerate windows
    // (kernel 1, constant series) stay exact fixed points.
    std::vector<double> trend(xv.size());
    std::vector<double> acc(chans);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = b * len * chans;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t center = base + t * chans;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(half);
                 j <= static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(half); ++j) {
                const std::size_t r = base + clamp_t(j) * chans;
                for (std::size_t n = 0; n < chans; ++n) acc[n] += xv[r + n] - xv[center + n];
            }
            for (std::size_t n = 0; n < chans; ++n) {
                trend[center + n] = xv[center + n] + acc[n] / k;
            }
        }
    }

    Tensor trend_t;
    if (!x.has_node()) {
        trend_t = Tensor(shape, std::move(trend));
    } else {
        const int px = x.node();
        const std::size_t total = xv.size();
        auto pull = [px, batch, len, chans, half, k, clamp_t, total](
                        const std::vector<double>& gout, AdjointSink& sink) {
            auto& gx = sink.grad_for(px, total);
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t base = b * len * chans;
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t grow = base + t * chans;
                    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(half);
                         j <= static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(half); ++j) {
                        const std::size_t xrow = base + clamp_t(j) * chans;
                        for (std::size_t n = 0; n < chans; ++n) gx[xrow + n] += gout[grow + n] / k;
                    }
                }
            }
        };
        trend_t = x.graph()->record_op(shape, std::move(trend), {px}, std::move(pull));
    }

    return paired_with_residual(x, trend_t);
}

}  // namespace dbloss
