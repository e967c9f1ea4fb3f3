#include "optbench/losses.hpp"

#include <cmath>
#include <string>

namespace optbench::losses {

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw ShapeError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
    const Index n = pred.rank() >= 2 ? pred.dim(0) : 1;
    LossResult out;
    out.grad = Tensor(pred.shape());
    out.grad.vec() = (2.0 / double(n)) * (pred.vec() - target.vec());
    out.loss = (pred.vec() - target.vec()).squaredNorm() / double(n);
    return out;
}

namespace {

// One row of batched cross entropy; writes (softmax - onehot)/batch into grad.
double ce_row(const double* logits, Index k, int label, double inv_batch, double* grad) {
    if (label < 0 || Index(label) >= k)
        throw IndexError("cross_entropy_loss: label " + std::to_string(label) + " for " +
                         std::to_string(k) + " classes");
    double mx = logits[0];
    for (Index j = 1; j < k; ++j) mx = std::max(mx, logits[j]);
    double z = 0.0;
    for (Index j = 0; j < k; ++j) z += std::exp(logits[j] - mx);
    for (Index j = 0; j < k; ++j) grad[j] = std::exp(logits[j] - mx) / z * inv_batch;
    grad[label] -= inv_batch;
    return std::log(z) - (logits[label] - mx);
}

} // namespace

LossResult cross_entropy_loss(const Tensor& logits, int label) {
    if (logits.rank() != 1)
        throw ShapeError("cross_entropy_loss: logits " + shape_str(logits.shape()) +
                         ", expected rank-1 for a single label");
    LossResult out;
    out.grad = Tensor(logits.shape());
    out.loss = ce_row(logits.data(), logits.dim(0), label, 1.0, out.grad.data());
    return out;
}

LossResult cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy_loss: logits " + shape_str(logits.shape()) +
                         ", expected rank-2 [batch x classes]");
    if (Index(labels.size()) != logits.dim(0))
        throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(logits.dim(0)));
    const Index n = logits.dim(0), k = logits.dim(1);
    LossResult out;
    out.grad = Tensor(logits.shape());
    double total = 0.0;
    for (Index i = 0; i < n; ++i)
        total += ce_row(logits.data() + i * k, k, labels[std::size_t(i)], 1.0 / double(n),
                        out.grad.data() + i * k);
    out.loss = total / double(n);
    return out;
}

} // namespace optbench::losses
