#include "dbloss/model.hpp"

#include <cmath>

#include "dbloss/decomp.hpp"
#include "dbloss/rng.hpp"

namespace dbloss {

const char* to_string(ModelKind kind) {
    return kind == ModelKind::Linear ? "linear" : "dlinear";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "linear") return ModelKind::Linear;
    if (name == "dlinear") return ModelKind::DLinear;
    throw ConfigError("unknown model '" + name + "' (valid: linear, dlinear)");
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.values.size();
    return n;
}

ModelParams::Entry& ModelParams::entry(const std::string& name) {
    for (auto& e : entries) {
        if (e.name == name) return e;
    }
    throw ContractError("model has no parameter named '" + name + "'");
}

const ModelParams::Entry& ModelParams::entry(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw ContractError("model has no parameter named '" + name + "'");
}

ModelParams init_model(ModelKind kind, std::size_t lookback, std::size_t horizon,
                       std::uint64_t seed, std::size_t sma_kernel) {
    if (lookback == 0 || horizon == 0) {
        throw ConfigError("lookback and horizon must be positive");
    }
    if (kind == ModelKind::DLinear && (sma_kernel == 0 || sma_kernel % 2 == 0)) {
        throw ConfigError("sma_kernel must be odd and positive, got " +
                          std::to_string(sma_kernel));
    }

    ModelParams params;
    params.kind = kind;
    params.lookback = lookback;
    params.horizon = horizon;
    params.sma_kernel = sma_kernel;

    const double bound = 1.0 / std::sqrt(static_cast<double>(lookback));
    Rng rng(seed);
    auto weight = [&](const std::string& name) {
        std::vector<double> values(horizon * lookback);
        for (double& v : values) v = rng.next_uniform(-bound, bound);
        params.entries.push_back({name, {horizon, lookback}, std::move(values)});
    };
    auto bias = [&](const std::string& name) {
        params.entries.push_back({name, {horizon}, std::vector<double>(horizon, 0.0)});
    };

    if (kind == ModelKind::Linear) {
        weight("weight");
        bias("bias");
    } else {
        weight("seasonal_weight");
        bias("seasonal_bias");
        weight("trend_weight");
        bias("trend_bias");
    }
    return params;
}

Tensor BoundModel::forward(const Tensor& x) const {
    if (!x.defined() || x.rank() != 3) {
        throw DimensionError("forward expects a [B,T,N] tensor");
    }
    if (x.shape()[1] != params_->lookback) {
        throw DimensionError("forward: input time extent " + std::to_string(x.shape()[1]) +
                             " differs from model lookback " +
                             std::to_string(params_->lookback));
    }
    const std::size_t horizon = params_->horizon;

    auto leaf = [&](const char* name) -> const Tensor& {
        for (std::size_t i = 0; i < params_->entries.size(); ++i) {
            if (params_->entries[i].name == name) return leaves_[i];
        }
        throw ContractError(std::string("model has no parameter named '") + name + "'");
    };
    auto affine = [&](const Tensor& w, const Tensor& b, const Tensor& input) {
        return add(matmul(w, input), reshape(b, {1, horizon, 1}));
    };

    if (params_->kind == ModelKind::Linear) {
        return affine(leaf("weight"), leaf("bias"), x);
    }
    const DecompPair parts = sma_decompose(x, params_->sma_kernel);
    const Tensor seasonal_out = affine(leaf("seasonal_weight"), leaf("seasonal_bias"), parts.seasonal);
    const Tensor trend_out = affine(leaf("trend_weight"), leaf("trend_bias"), parts.trend);
    return add(seasonal_out, trend_out);
}

std::vector<std::pair<std::string, Tensor>> BoundModel::named_gradients(
    const GradientMap& grads) const {
    std::vector<std::pair<std::string, Tensor>> named;
    named.reserve(leaves_.size());
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        const auto& entry = params_->entries[i];
        const Tensor& leaf = leaves_[i];
        if (leaf.has_node()) {
            auto it = grads.find(leaf.node());
            if (it != grads.end()) {
                named.emplace_back(entry.name, it->second);
                continue;
            }
        }
        named.emplace_back(entry.name, Tensor::zeros(entry.shape));
    }
    return named;
}

BoundModel bind(Graph& g, const ModelParams& params) {
    std::vector<Tensor> leaves;
    leaves.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        leaves.push_back(g.leaf(Tensor(e.shape, e.values)));
    }
    return BoundModel(params, std::move(leaves));
}

BoundModel bind_constant(const ModelParams& params) {
    std::vector<Tensor> leaves;
    leaves.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        leaves.push_back(Tensor(e.shape, e.values));
    }
    return BoundModel(params, std::move(leaves));
}

}  // namespace dbloss
