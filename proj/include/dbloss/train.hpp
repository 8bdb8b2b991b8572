#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dbloss/data.hpp"
#include "dbloss/loss.hpp"
#include "dbloss/model.hpp"

namespace dbloss {

enum class LossKind { Mse, Mae, DbLoss };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
    LossKind loss = LossKind::Mse;
    DbLossConfig db{};
    double learning_rate = 0.005;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 20;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    std::ostream* log = nullptr;  // per-epoch lines when set

    void validate() const;
};

/// Adam accumulators, one pair of moment buffers per parameter entry.
/// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
struct AdamState {
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::vector<Moments> moments;  // aligned with ModelParams::entries
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const ModelParams& params);
};

/// One bias-corrected Adam update, in place. `grads` must carry exactly the
/// parameter entry names, shapes matching.
void adam_step(ModelParams& params, const std::vector<std::pair<std::string, Tensor>>& grads,
               AdamState& state, double learning_rate);

struct EvalReport {
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> train_curve;  // objective value per completed epoch
    std::vector<double> val_curve;
    double wall_clock_seconds = 0.0;
    std::size_t best_epoch = 0;  // 1-based epoch whose parameters are returned
};

struct ModelSpec {
    ModelKind kind = ModelKind::DLinear;
    std::size_t sma_kernel = 25;
};

struct TrainResult {
    ModelParams params;  // parameters of the best validation epoch
    EvalReport report;
};

/// Full training loop: shuffled train batches per epoch, configured loss,
/// backprop, Adam, validation on the same objective after each epoch, early
/// stop after `patience` consecutive non-improving epochs (patience 0 stops
/// at the first one). Deterministic for a fixed seed. Test MSE/MAE in the
/// report are computed with the returned (best-validation) parameters.
TrainResult train(const ModelSpec& spec, const WindowedDataset& data, const TrainConfig& cfg);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};

/// MSE and MAE over every window of a segment, all horizon steps and
/// channels, in normalized space. The element accumulation order is fixed,
/// so results do not depend on batch size.
Metrics evaluate(const ModelParams& params, const WindowedDataset& data, Segment segment,
                 std::size_t batch_size = 256);

}  // namespace dbloss
