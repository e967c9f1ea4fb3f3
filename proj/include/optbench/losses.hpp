#pragma once

#include <vector>

#include "optbench/tensor.hpp"

namespace optbench::losses {

enum class LossKind { MSE, CrossEntropy };

struct LossResult {
    double loss = 0.0;
    Tensor grad; // d loss / d prediction, same shape as the prediction
};

/// Sum of squared errors over outputs, mean over batch samples. A rank-1
/// pair is one sample; rank >= 2 treats the leading dimension as the batch.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

/// Softmax cross-entropy against integer class labels, mean over the batch.
/// Softmax is computed with max-subtraction so large logits do not overflow.
LossResult cross_entropy_loss(const Tensor& logits, int label);
LossResult cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

} // namespace optbench::losses
