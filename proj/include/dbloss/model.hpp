#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbloss/tensor.hpp"

namespace dbloss {

/// Forecasting backbones. Both map a lookback window to a horizon window
/// with one weight set shared across channels.
///
///   Linear  — single T->F affine map.
///   DLinear — moving-average decomposition of the input, separate affine
///             maps for the trend and seasonal parts, outputs summed.
enum class ModelKind { Linear, DLinear };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Trainable parameters of a backbone: weight matrices [F,T] and bias
/// vectors [F], keyed by name in a fixed order.
struct ModelParams {
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<double> values;
    };

    ModelKind kind = ModelKind::Linear;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t sma_kernel = 25;  // DLinear only
    std::vector<Entry> entries;

    std::size_t parameter_count() const;
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
};

/// Seeded initialization: weights uniform in [-1/sqrt(T), +1/sqrt(T)] from a
/// deterministic generator, biases zero. Identical arguments give bitwise
/// identical parameters.
ModelParams init_model(ModelKind kind, std::size_t lookback, std::size_t horizon,
                       std::uint64_t seed, std::size_t sma_kernel = 25);

/// Parameters materialized as tensors, optionally registered as graph leaves
/// so a backward pass reports their gradients.
class BoundModel {
public:
    /// x[B,T,N] -> y[B,F,N]; T must equal the bound lookback.
    Tensor forward(const Tensor& x) const;

    /// Gradient per parameter entry, in entry order; entries the backward
    /// pass never reached get zeros.
    std::vector<std::pair<std::string, Tensor>> named_gradients(const GradientMap& grads) const;

    const ModelParams& params() const { return *params_; }

private:
    BoundModel(const ModelParams& params, std::vector<Tensor> leaves)
        : params_(&params), leaves_(std::move(leaves)) {}

    const ModelParams* params_;
    std::vector<Tensor> leaves_;  // aligned with params().entries

    friend BoundModel bind(Graph& g, const ModelParams& params);
    friend BoundModel bind_constant(const ModelParams& params);
};

/// Register every parameter as a trainable leaf of `g`.
BoundModel bind(Graph& g, const ModelParams& params);

/// Bind parameters as constants; forward then records nothing and is safe to
/// run concurrently with other evaluations of the same parameters.
BoundModel bind_constant(const ModelParams& params);

}  // namespace dbloss
