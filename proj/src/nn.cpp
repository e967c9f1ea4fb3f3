#include "optbench/nn.hpp"

#include <cmath>
#include <string>

#include "optbench/rng.hpp"

namespace optbench::nn {

namespace {

[[noreturn]] void layer_error(std::size_t layer, const std::string& what) {
    throw ShapeError("layer " + std::to_string(layer) + ": " + what);
}

Shape conv_out_shape(std::size_t li, const Conv2d& c, const Shape& in) {
    if (c.out_channels < 1 || c.kernel_h < 1 || c.kernel_w < 1 || c.stride < 1)
        layer_error(li, "conv2d sizes must be >= 1");
    if (in.size() != 3)
        layer_error(li, "conv2d expects [channels x h x w] input, got " + shape_str(in));
    const Index oh = (in[1] - c.kernel_h) / c.stride + 1;
    const Index ow = (in[2] - c.kernel_w) / c.stride + 1;
    if (in[1] < c.kernel_h || in[2] < c.kernel_w || oh < 1 || ow < 1)
        layer_error(li, "conv2d kernel " + std::to_string(c.kernel_h) + "x" +
                            std::to_string(c.kernel_w) + " exceeds input " + shape_str(in));
    return {c.out_channels, oh, ow};
}

Shape pool_out_shape(std::size_t li, const MaxPool2d& p, const Shape& in) {
    if (p.window < 1 || p.stride < 1) layer_error(li, "maxpool sizes must be >= 1");
    if (in.size() != 3)
        layer_error(li, "maxpool expects [channels x h x w] input, got " + shape_str(in));
    const Index oh = (in[1] - p.window) / p.stride + 1;
    const Index ow = (in[2] - p.window) / p.stride + 1;
    if (in[1] < p.window || in[2] < p.window || oh < 1 || ow < 1)
        layer_error(li, "maxpool window " + std::to_string(p.window) + " exceeds input " +
                            shape_str(in));
    return {in[0], oh, ow};
}

} // namespace

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
    std::vector<Shape> out;
    out.reserve(spec.layers.size());
    Shape cur = spec.input_shape;
    for (Index d : cur)
        if (d < 1) throw ShapeError("input shape " + shape_str(cur) + " has non-positive size");
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& layer = spec.layers[li];
        if (auto* c = std::get_if<Conv2d>(&layer)) {
            cur = conv_out_shape(li, *c, cur);
        } else if (auto* p = std::get_if<MaxPool2d>(&layer)) {
            cur = pool_out_shape(li, *p, cur);
        } else if (auto* d = std::get_if<Dense>(&layer)) {
            if (d->out_features < 1) layer_error(li, "dense output size must be >= 1");
            if (cur.size() != 1)
                layer_error(li, "dense expects rank-1 input, got " + shape_str(cur) +
                                    " (flatten first)");
            cur = {d->out_features};
        } else if (std::holds_alternative<Flatten>(layer)) {
            cur = {shape_numel(cur)};
        } // ReLU keeps the shape
        out.push_back(cur);
    }
    return out;
}

std::vector<ParamSlot> param_layout(const NetworkSpec& spec) {
    const std::vector<Shape> shapes = infer_shapes(spec);
    std::vector<ParamSlot> layout(spec.layers.size());
    Index offset = 0;
    Shape in = spec.input_shape;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        ParamSlot& slot = layout[li];
        if (auto* c = std::get_if<Conv2d>(&spec.layers[li])) {
            slot.weight_offset = offset;
            slot.weight_shape = {c->out_channels, in[0], c->kernel_h, c->kernel_w};
            slot.bias_offset = offset + shape_numel(slot.weight_shape);
            slot.bias_count = c->out_channels;
        } else if (auto* d = std::get_if<Dense>(&spec.layers[li])) {
            slot.weight_offset = offset;
            slot.weight_shape = {d->out_features, in[0]};
            slot.bias_offset = offset + shape_numel(slot.weight_shape);
            slot.bias_count = d->out_features;
        }
        if (!slot.weight_shape.empty())
            slot.count = shape_numel(slot.weight_shape) + slot.bias_count;
        offset += slot.count;
        in = shapes[li];
    }
    return layout;
}

Index param_count(const NetworkSpec& spec) {
    Index n = 0;
    for (const ParamSlot& s : param_layout(spec)) n += s.count;
    return n;
}

NetworkState init_params(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkState state{spec, Eigen::VectorXd::Zero(param_count(spec)), param_layout(spec)};
    Rng rng(seed);
    for (const ParamSlot& slot : state.layout) {
        if (slot.count == 0) continue;
        Index fan_in = 0, fan_out = 0;
        if (slot.weight_shape.size() == 4) { // conv [oc, ic, kh, kw]
            fan_in = slot.weight_shape[1] * slot.weight_shape[2] * slot.weight_shape[3];
            fan_out = slot.weight_shape[0] * slot.weight_shape[2] * slot.weight_shape[3];
        } else { // dense [out, in]
            fan_in = slot.weight_shape[1];
            fan_out = slot.weight_shape[0];
        }
        const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
        const Index nw = shape_numel(slot.weight_shape);
        for (Index i = 0; i < nw; ++i)
            state.params[slot.weight_offset + i] = rng.uniform(-limit, limit);
        // biases stay zero
    }
    return state;
}

namespace {

struct Batched {
    Tensor tensor; // [batch, ...]
    bool batched;
};

// Accept either the exact per-sample shape or that shape with a leading
// batch dimension; return a batched view.
Batched to_batched(const Tensor& t, const Shape& sample_shape, const char* what) {
    if (t.shape() == sample_shape) {
        Shape s = sample_shape;
        s.insert(s.begin(), 1);
        return {t.reshaped(s), false};
    }
    if (t.rank() == Index(sample_shape.size()) + 1) {
        bool ok = t.dim(0) >= 1;
        for (std::size_t i = 0; i < sample_shape.size(); ++i)
            ok = ok && t.dim(Index(i) + 1) == sample_shape[i];
        if (ok) return {t, true};
    }
    throw ShapeError(std::string(what) + ": got " + shape_str(t.shape()) + ", expected " +
                     shape_str(sample_shape) + " (optionally batched)");
}

Shape with_batch(Index n, const Shape& s) {
    Shape out = s;
    out.insert(out.begin(), n);
    return out;
}

void conv_forward(const Conv2d& c, const double* w, const double* b, const Tensor& in,
                  Tensor& out) {
    const Index n = in.dim(0), ic = in.dim(1), h = in.dim(2), wdt = in.dim(3);
    const Index oc = out.dim(1), oh = out.dim(2), ow = out.dim(3);
    const Index kh = c.kernel_h, kw = c.kernel_w, s = c.stride;
    const double* src = in.data();
    double* dst = out.data();
    for (Index bi = 0; bi < n; ++bi)
        for (Index o = 0; o < oc; ++o)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    double acc = b[o];
                    const double* wrow = w + ((o * ic) * kh) * kw;
                    for (Index i = 0; i < ic; ++i)
                        for (Index ky = 0; ky < kh; ++ky) {
                            const double* srow =
                                src + (((bi * ic + i) * h + oy * s + ky) * wdt + ox * s);
                            for (Index kx = 0; kx < kw; ++kx) acc += wrow[kx] * srow[kx];
                            wrow += kw;
                        }
                    dst[((bi * oc + o) * oh + oy) * ow + ox] = acc;
                }
}

void conv_backward(const Conv2d& c, const double* w, const Tensor& in, const Tensor& gout,
                   double* dw, double* db, Tensor& din) {
    const Index n = in.dim(0), ic = in.dim(1), h = in.dim(2), wdt = in.dim(3);
    const Index oc = gout.dim(1), oh = gout.dim(2), ow = gout.dim(3);
    const Index kh = c.kernel_h, kw = c.kernel_w, s = c.stride;
    const double* src = in.data();
    const double* g = gout.data();
    double* dsrc = din.data();
    for (Index bi = 0; bi < n; ++bi)
        for (Index o = 0; o < oc; ++o)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    const double gv = g[((bi * oc + o) * oh + oy) * ow + ox];
                    if (gv == 0.0) continue;
                    db[o] += gv;
                    double* dwrow = dw + ((o * ic) * kh) * kw;
                    const double* wrow = w + ((o * ic) * kh) * kw;
                    for (Index i = 0; i < ic; ++i)
                        for (Index ky = 0; ky < kh; ++ky) {
                            const Index base = ((bi * ic + i) * h + oy * s + ky) * wdt + ox * s;
                            const double* srow = src + base;
                            double* drow = dsrc + base;
                            for (Index kx = 0; kx < kw; ++kx) {
                                dwrow[kx] += gv * srow[kx];
                                drow[kx] += gv * wrow[kx];
                            }
                            dwrow += kw;
                            wrow += kw;
                        }
                }
}

void pool_forward(const MaxPool2d& p, const Tensor& in, Tensor& out, std::vector<Index>& argmax) {
    const Index n = in.dim(0), ch = in.dim(1), h = in.dim(2), w = in.dim(3);
    const Index oh = out.dim(2), ow = out.dim(3);
    const double* src = in.data();
    double* dst = out.data();
    argmax.resize(std::size_t(out.size()));
    Index oi = 0;
    for (Index bi = 0; bi < n; ++bi)
        for (Index c = 0; c < ch; ++c)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox, ++oi) {
                    // first maximum in row-major window order wins
                    Index best = ((bi * ch + c) * h + oy * p.stride) * w + ox * p.stride;
                    double bv = src[best];
                    for (Index ky = 0; ky < p.window; ++ky)
                        for (Index kx = 0; kx < p.window; ++kx) {
                            const Index idx =
                                ((bi * ch + c) * h + oy * p.stride + ky) * w + ox * p.stride + kx;
                            if (src[idx] > bv) {
                                bv = src[idx];
                                best = idx;
                            }
                        }
                    dst[oi] = bv;
                    argmax[std::size_t(oi)] = best;
                }
}

void dense_forward(const Dense& d, const double* w, const double* b, const Tensor& in,
                   Tensor& out) {
    const Index n = in.dim(0), din = in.dim(1);
    Eigen::Map<const RowMat> X(in.data(), n, din);
    Eigen::Map<const RowMat> W(w, d.out_features, din);
    Eigen::Map<const Eigen::VectorXd> B(b, d.out_features);
    Eigen::Map<RowMat> Y(out.data(), n, d.out_features);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += B.transpose();
}

void dense_backward(const Dense& d, const double* w, const Tensor& in, const Tensor& gout,
                    double* dw, double* db, Tensor& din) {
    const Index n = in.dim(0), dinw = in.dim(1);
    Eigen::Map<const RowMat> X(in.data(), n, dinw);
    Eigen::Map<const RowMat> W(w, d.out_features, dinw);
    Eigen::Map<const RowMat> G(gout.data(), n, d.out_features);
    Eigen::Map<RowMat> dW(dw, d.out_features, dinw);
    Eigen::Map<Eigen::VectorXd> dB(db, d.out_features);
    Eigen::Map<RowMat> dX(din.data(), n, dinw);
    dW.noalias() += G.transpose() * X;
    dB.noalias() += G.colwise().sum().transpose();
    dX.noalias() = G * W;
}

} // namespace

ForwardResult forward(const NetworkState& state, const Tensor& input) {
    const std::vector<Shape> shapes = infer_shapes(state.spec);
    Batched bin = to_batched(input, state.spec.input_shape, "forward input");
    const Index n = bin.tensor.dim(0);

    ForwardResult res;
    ForwardTrace& trace = res.trace;
    trace.batched = bin.batched;
    trace.batch = n;
    trace.inputs.reserve(state.spec.layers.size());
    trace.pool_argmax.resize(state.spec.layers.size());

    Tensor cur = bin.tensor;
    for (std::size_t li = 0; li < state.spec.layers.size(); ++li) {
        const LayerSpec& layer = state.spec.layers[li];
        const ParamSlot& slot = state.layout[li];
        Tensor out(with_batch(n, shapes[li]));
        if (auto* c = std::get_if<Conv2d>(&layer)) {
            conv_forward(*c, state.params.data() + slot.weight_offset,
                         state.params.data() + slot.bias_offset, cur, out);
        } else if (auto* p = std::get_if<MaxPool2d>(&layer)) {
            pool_forward(*p, cur, out, trace.pool_argmax[li]);
        } else if (auto* d = std::get_if<Dense>(&layer)) {
            dense_forward(*d, state.params.data() + slot.weight_offset,
                          state.params.data() + slot.bias_offset, cur, out);
        } else if (std::holds_alternative<ReLU>(layer)) {
            out.vec() = cur.vec().cwiseMax(0.0);
        } else { // Flatten
            out.vec() = cur.vec();
        }
        trace.inputs.push_back(std::move(cur));
        cur = std::move(out);
    }
    trace.output_shape = cur.shape();
    if (!bin.batched && !shapes.empty()) cur = cur.reshaped(shapes.back());
    if (!bin.batched && shapes.empty()) cur = cur.reshaped(state.spec.input_shape);
    res.output = std::move(cur);
    return res;
}

Eigen::VectorXd backward(const NetworkState& state, const ForwardTrace& trace,
                         const Tensor& output_grad) {
    if (trace.inputs.size() != state.spec.layers.size())
        throw ContractError("backward: trace has " + std::to_string(trace.inputs.size()) +
                            " layers, network has " + std::to_string(state.spec.layers.size()));
    Tensor g;
    if (output_grad.shape() == trace.output_shape) {
        g = output_grad;
    } else {
        Shape unbatched(trace.output_shape.begin() + 1, trace.output_shape.end());
        if (!trace.batched && output_grad.shape() == unbatched)
            g = output_grad.reshaped(trace.output_shape);
        else
            throw ShapeError("backward: output_grad " + shape_str(output_grad.shape()) +
                             " vs network output " + shape_str(trace.output_shape));
    }

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.params.size());
    for (std::size_t li = state.spec.layers.size(); li-- > 0;) {
        const LayerSpec& layer = state.spec.layers[li];
        const ParamSlot& slot = state.layout[li];
        const Tensor& in = trace.inputs[li];
        Tensor din(in.shape());
        if (auto* c = std::get_if<Conv2d>(&layer)) {
            conv_backward(*c, state.params.data() + slot.weight_offset, in, g,
                          grad.data() + slot.weight_offset, grad.data() + slot.bias_offset, din);
        } else if (std::get_if<MaxPool2d>(&layer)) {
            const std::vector<Index>& argmax = trace.pool_argmax[li];
            if (Index(argmax.size()) != g.size())
                throw ContractError("backward: pool cache does not match trace");
            for (Index i = 0; i < g.size(); ++i) din[argmax[std::size_t(i)]] += g[i];
        } else if (auto* d = std::get_if<Dense>(&layer)) {
            dense_backward(*d, state.params.data() + slot.weight_offset, in, g,
                           grad.data() + slot.weight_offset, grad.data() + slot.bias_offset, din);
        } else if (std::holds_alternative<ReLU>(layer)) {
            din.vec() = (in.vec().array() > 0.0).select(g.vec(), 0.0);
        } else { // Flatten
            din.vec() = g.vec();
        }
        g = std::move(din);
    }
    return grad;
}

Tensor jacobian(const NetworkState& state, const Tensor& input) {
    if (input.shape() != state.spec.input_shape)
        throw ShapeError("jacobian: input " + shape_str(input.shape()) +
                         ", expected a single sample " + shape_str(state.spec.input_shape));
    ForwardResult fwd = forward(state, input);
    const Index n_out = fwd.output.size();
    Tensor j({n_out, state.params.size()});
    Tensor onehot(fwd.output.shape());
    for (Index k = 0; k < n_out; ++k) {
        onehot.vec().setZero();
        onehot[k] = 1.0;
        j.mat().row(k) = backward(state, fwd.trace, onehot).transpose();
    }
    return j;
}

} // namespace optbench::nn
