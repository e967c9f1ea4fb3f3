#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "optbench/tensor.hpp"

namespace optbench::nn {

// Layer kinds. Convolutions are valid (no padding); pooling keeps the
// channel count; Dense expects a rank-1 feature vector (use Flatten first).
struct Conv2d {
    Index out_channels;
    Index kernel_h;
    Index kernel_w;
    Index stride = 1;
};
struct MaxPool2d {
    Index window;
    Index stride;
};
struct Dense {
    Index out_features;
};
struct ReLU {};
struct Flatten {};

using LayerSpec = std::variant<Conv2d, MaxPool2d, Dense, ReLU, Flatten>;

struct NetworkSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;
};

/// Where a layer's parameters live inside the flat vector: weights first,
/// then biases, layers concatenated in order.
struct ParamSlot {
    Index weight_offset = 0;
    Shape weight_shape;
    Index bias_offset = 0;
    Index bias_count = 0;
    Index count = 0; // weights + biases; 0 for parameterless layers
};

struct NetworkState {
    NetworkSpec spec;
    Eigen::VectorXd params;
    std::vector<ParamSlot> layout;
};

/// Per-layer activation cache produced by forward() and consumed by
/// backward(). Valid only for the (state, input) pair that produced it.
struct ForwardTrace {
    std::vector<Tensor> inputs;                  // batched input of every layer
    std::vector<std::vector<Index>> pool_argmax; // winning flat input index per pooled output
    Shape output_shape;                          // batched shape of the network output
    bool batched = false;                        // caller supplied a leading batch dimension
    Index batch = 1;
};

/// Output shape of every layer (without a batch dimension). Throws
/// ShapeError naming the offending layer when a derived dimension is not
/// positive.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

std::vector<ParamSlot> param_layout(const NetworkSpec& spec);
Index param_count(const NetworkSpec& spec);

/// Glorot-uniform weights, zero biases, fully determined by seed.
NetworkState init_params(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardResult {
    Tensor output;
    ForwardTrace trace;
};

/// Deterministic forward pass. Input may carry a leading batch dimension;
/// the output does iff the input did.
ForwardResult forward(const NetworkState& state, const Tensor& input);

/// Reverse-mode gradient of sum(output * output_grad) with respect to the
/// flat parameter vector. Batch contributions are summed in sample order.
Eigen::VectorXd backward(const NetworkState& state, const ForwardTrace& trace,
                         const Tensor& output_grad);

/// Jacobian d(output)/d(params) of a single sample, one row per output,
/// assembled by repeated one-hot backward passes.
Tensor jacobian(const NetworkState& state, const Tensor& input);

} // namespace optbench::nn
