#include "dbloss/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "dbloss/rng.hpp"

namespace dbloss {

const char* to_string(LossKind kind) {
    switch (kind) {
        case LossKind::Mse: return "mse";
        case LossKind::Mae: return "mae";
        case LossKind::DbLoss: return "dbloss";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "mse") return LossKind::Mse;
    if (name == "mae") return LossKind::Mae;
    if (name == "dbloss") return LossKind::DbLoss;
    throw ConfigError("unknown loss '" + name + "' (valid: mse, mae, dbloss)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (max_epochs == 0) throw ConfigError("max epochs must be positive");
    if (loss == LossKind::DbLoss) db.validate();
}

AdamState AdamState::for_params(const ModelParams& params) {
    AdamState state;
    state.moments.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        state.moments.push_back({std::vector<double>(e.values.size(), 0.0),
                                 std::vector<double>(e.values.size(), 0.0)});
    }
    return state;
}

void adam_step(ModelParams& params, const std::vector<std::pair<std::string, Tensor>>& grads,
               AdamState& state, double learning_rate) {
    if (state.moments.size() != params.entries.size()) {
        throw ContractError("optimizer state does not match the parameter set");
    }
    if (grads.size() != params.entries.size()) {
        throw ContractError("adam_step received " + std::to_string(grads.size()) +
                            " gradients for " + std::to_string(params.entries.size()) +
                            " parameters");
    }
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, grad] : grads) by_name.emplace(name, &grad);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        auto& entry = params.entries[i];
        const auto it = by_name.find(entry.name);
        if (it == by_name.end()) {
            throw ContractError("adam_step missing a gradient for '" + entry.name + "'");
        }
        const auto& g = it->second->values();
        if (g.size() != entry.values.size()) {
            throw ContractError("gradient for '" + entry.name + "' has wrong size");
        }
        auto& m = state.moments[i].m;
        auto& v = state.moments[i].v;
        for (std::size_t j = 0; j < g.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            entry.values[j] -= learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

namespace {

Tensor objective(const TrainConfig& cfg, const Tensor& pred, const Tensor& target) {
    switch (cfg.loss) {
        case LossKind::Mse: return mse(pred, target);
        case LossKind::Mae: return mae(pred, target);
        case LossKind::DbLoss: return db_loss(pred, target, cfg.db).total;
    }
    throw ContractError("unreachable loss kind");
}

/// Forward-only objective over a segment, batch losses weighted by window
/// count.
double objective_over(const ModelParams& params, const WindowedDataset& data, Segment seg,
                      const TrainConfig& cfg) {
    const BoundModel model = bind_constant(params);
    double weighted = 0.0;
    std::size_t windows = 0;
    auto it = data.batches(seg, cfg.batch_size);
    while (auto batch = it.next()) {
        const Tensor pred = model.forward(batch->inputs);
        const Tensor loss = objective(cfg, pred, batch->targets);
        weighted += loss.value() * static_cast<double>(batch->window_count);
        windows += batch->window_count;
    }
    return weighted / static_cast<double>(windows);
}

}  // namespace

TrainResult train(const ModelSpec& spec, const WindowedDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto run_start = clock::now();

    ModelParams params = init_model(spec.kind, data.lookback(), data.horizon(), cfg.seed,
                                    spec.sma_kernel);
    AdamState adam = AdamState::for_params(params);

    TrainResult result;
    result.params = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t non_improving = 0;
    const std::size_t stop_after = std::max<std::size_t>(cfg.patience, 1);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto epoch_start = clock::now();
        double weighted_loss = 0.0;
        std::size_t seen_windows = 0;
        std::size_t batch_index = 0;

        auto it = data.batches(Segment::Train, cfg.batch_size, derive_seed(cfg.seed, epoch));
        while (auto batch = it.next()) {
            ++batch_index;
            try {
                Graph graph;
                const BoundModel model = bind(graph, params);
                const Tensor pred = model.forward(batch->inputs);
                const Tensor loss = objective(cfg, pred, batch->targets);
                const GradientMap grads = backward(loss);
                adam_step(params, model.named_gradients(grads), adam, cfg.learning_rate);
                weighted_loss += loss.value() * static_cast<double>(batch->window_count);
                seen_windows += batch->window_count;
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
        }
        const double train_loss = weighted_loss / static_cast<double>(seen_windows);

        double val_loss = 0.0;
        try {
            val_loss = objective_over(params, data, Segment::Val, cfg);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + " validation: " + e.what());
        }

        const double seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
        result.report.train_curve.push_back(train_loss);
        result.report.val_curve.push_back(val_loss);
        if (cfg.log) {
            char line[160];
            std::snprintf(line, sizeof(line), "epoch=%zu train_loss=%.6g val_loss=%.6g seconds=%.3f",
                          epoch, train_loss, val_loss, seconds);
            *cfg.log << line << '\n';
        }

        if (val_loss < best_val) {
            best_val = val_loss;
            result.params = params;
            result.report.best_epoch = epoch;
            non_improving = 0;
        } else if (++non_improving >= stop_after) {
            break;
        }
    }

    const Metrics test = evaluate(result.params, data, Segment::Test);
    result.report.mse = test.mse;
    result.report.mae = test.mae;
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(clock::now() - run_start).count();
    return result;
}

Metrics evaluate(const ModelParams& params, const WindowedDataset& data, Segment segment,
                 std::size_t batch_size) {
    const BoundModel model = bind_constant(params);
    double sq_sum = 0.0, abs_sum = 0.0;
    std::size_t count = 0;

    auto it = data.batches(segment, batch_size);
    while (auto batch = it.next()) {
        const Tensor pred = model.forward(batch->inputs);
        const auto& pv = pred.values();
        const auto& tv = batch->targets.values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double d = pv[i] - tv[i];
            sq_sum += d * d;
            abs_sum += std::fabs(d);
        }
        count += pv.size();
    }
    return Metrics{sq_sum / static_cast<double>(count), abs_sum / static_cast<double>(count)};
}

}  // namespace dbloss
