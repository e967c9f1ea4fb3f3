#include "optbench/optimizers.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "optbench/errors.hpp"
#include "optbench/linalg.hpp"

namespace optbench::opt {

namespace {

constexpr double kArmijoC = 1e-4;
constexpr double kBetaDenomFloor = 1e-30;
constexpr double kCurvatureFloor = 1e-10;
constexpr Index kNormalEqBudget = 8000;      // max p for dense JᵀJ
constexpr Index kJacobianChunkDoubles = 4'000'000; // ~32 MB chunk buffer

void require_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": sizes " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
}

void require_positive_lr(double lr, const char* what) {
    if (!(lr > 0.0)) throw ContractError(std::string(what) + ": lr must be positive");
}

} // namespace

OptimizerKind OptimizerKind::sgd() { return {Tag::Sgd, BetaRule::FletcherReeves, 10, 10}; }

OptimizerKind OptimizerKind::conj_grad(BetaRule rule) { return {Tag::ConjGrad, rule, 10, 10}; }

OptimizerKind OptimizerKind::lbfgs(Index memory, Index max_line_search) {
    if (memory < 1) throw ContractError("lbfgs: memory must be >= 1");
    if (max_line_search < 1) throw ContractError("lbfgs: max_line_search must be >= 1");
    return {Tag::Lbfgs, BetaRule::FletcherReeves, memory, max_line_search};
}

OptimizerKind OptimizerKind::lm() { return {Tag::Lm, BetaRule::FletcherReeves, 10, 10}; }

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    require_same_size(params, grad, "sgd_step");
    require_positive_lr(lr, "sgd_step");
    if (!grad.allFinite()) throw NumericError("sgd_step: non-finite gradient");
    return params - lr * grad;
}

double compute_beta(BetaRule rule, const Eigen::VectorXd& grad_t, const Eigen::VectorXd& grad_prev,
                    const Eigen::VectorXd& dir_prev) {
    require_same_size(grad_t, grad_prev, "compute_beta");
    require_same_size(grad_t, dir_prev, "compute_beta");
    double num = 0.0, den = 0.0;
    switch (rule) {
    case BetaRule::FletcherReeves:
        num = grad_t.dot(grad_t);
        den = grad_prev.dot(grad_prev);
        break;
    case BetaRule::PolakRibiere:
        num = grad_t.dot(grad_t - grad_prev);
        den = grad_prev.dot(grad_prev);
        break;
    case BetaRule::HestenesStiefel:
        num = grad_t.dot(grad_t - grad_prev);
        den = dir_prev.dot(grad_t - grad_prev);
        break;
    case BetaRule::DaiYuan:
        num = grad_t.dot(grad_t);
        den = dir_prev.dot(grad_t - grad_prev);
        break;
    }
    if (std::abs(den) < kBetaDenomFloor) return 0.0; // restart
    return std::max(num / den, 0.0);
}

CgResult cg_step(const CgState& state, const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                 double lr, BetaRule rule) {
    require_same_size(params, grad, "cg_step");
    require_positive_lr(lr, "cg_step");
    const Index p = params.size();
    const bool have_prev =
        state.prev_grad.size() == p && state.prev_direction.size() == p;
    // periodic restart: a fresh steepest-descent direction every p steps
    const bool restart = !have_prev || state.steps_since_restart >= p;
    Eigen::VectorXd direction;
    if (restart) {
        direction = -grad;
    } else {
        const double beta = compute_beta(rule, grad, state.prev_grad, state.prev_direction);
        direction = -grad + beta * state.prev_direction;
    }
    CgResult out;
    out.params = params + lr * direction;
    out.state.prev_grad = grad;
    out.state.prev_direction = std::move(direction);
    out.state.steps_since_restart = restart ? 1 : state.steps_since_restart + 1;
    return out;
}

LbfgsState bfgs_update(LbfgsState state, const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
    require_same_size(s, y, "bfgs_update");
    state.t += 1;
    const double sy = s.dot(y);
    if (sy > kCurvatureFloor * s.norm() * y.norm()) {
        state.history.push_back({s, y});
        while (Index(state.history.size()) > state.memory) state.history.pop_front();
    }
    return state;
}

Eigen::VectorXd lbfgs_direction(const LbfgsState& state, const Eigen::VectorXd& grad) {
    if (state.history.empty()) return -grad;
    const std::size_t m = state.history.size();
    std::vector<double> alpha(m), rho(m);
    Eigen::VectorXd q = grad;
    for (std::size_t i = m; i-- > 0;) { // newest to oldest
        const auto& pair = state.history[i];
        rho[i] = 1.0 / pair.s.dot(pair.y);
        alpha[i] = rho[i] * pair.s.dot(q);
        q -= alpha[i] * pair.y;
    }
    const auto& newest = state.history.back();
    const double gamma = newest.s.dot(newest.y) / newest.y.dot(newest.y);
    Eigen::VectorXd r = gamma * q;
    for (std::size_t i = 0; i < m; ++i) { // oldest to newest
        const auto& pair = state.history[i];
        const double beta = rho[i] * pair.y.dot(r);
        r += pair.s * (alpha[i] - beta);
    }
    return -r;
}

LineSearchResult line_search(const LossOracle& evaluate, const Eigen::VectorXd& params,
                             const Eigen::VectorXd& direction, const Eigen::VectorXd& grad,
                             double loss0, double lr0, Index max_iter) {
    require_same_size(params, direction, "line_search");
    require_same_size(params, grad, "line_search");
    if (max_iter < 1) throw ContractError("line_search: max_iter must be >= 1");
    if (!(lr0 > 0.0)) throw ContractError("line_search: lr0 must be positive");
    const double slope = grad.dot(direction);
    if (!(slope < 0.0)) throw ContractError("line_search: not a descent direction");
    LineSearchResult res;
    double alpha = lr0;
    for (Index it = 0; it < max_iter; ++it) {
        const double trial = evaluate(params + alpha * direction);
        ++res.evaluations;
        res.alpha = alpha;
        res.loss = trial;
        if (std::isfinite(trial) && trial <= loss0 + kArmijoC * alpha * slope) {
            res.accepted = true;
            return res;
        }
        alpha *= 0.5;
    }
    res.accepted = false; // caller takes no step
    return res;
}

void LeastSquaresProblem::normal_equations(const Eigen::VectorXd& params, Eigen::MatrixXd& jtj,
                                           Eigen::VectorXd& jtr, double& residual_ss) const {
    const Eigen::VectorXd r = residuals(params);
    const Eigen::MatrixXd j = jacobian(params);
    if (j.rows() != r.size() || j.cols() != param_count())
        throw ShapeError("least squares: jacobian " + std::to_string(j.rows()) + "x" +
                         std::to_string(j.cols()) + " vs " + std::to_string(r.size()) +
                         " residuals, " + std::to_string(param_count()) + " params");
    jtj.setZero(param_count(), param_count());
    jtj.selfadjointView<Eigen::Lower>().rankUpdate(j.transpose());
    jtj.triangularView<Eigen::StrictlyUpper>() = jtj.transpose();
    jtr.noalias() = j.transpose() * r;
    residual_ss = r.squaredNorm();
}

Eigen::VectorXd lm_solve(const Eigen::MatrixXd& jtj, const Eigen::VectorXd& jtr, double lambda) {
    if (jtj.rows() != jtj.cols() || jtj.rows() != jtr.size())
        throw ShapeError("lm_solve: system " + std::to_string(jtj.rows()) + "x" +
                         std::to_string(jtj.cols()) + " vs rhs " + std::to_string(jtr.size()));
    Eigen::MatrixXd damped = jtj;
    damped.diagonal().array() += lambda;
    return linalg::cholesky_solve(linalg::SpdMatrix(std::move(damped)), jtr);
}

LmResult lm_step(const LmState& state, const LeastSquaresProblem& problem,
                 const Eigen::VectorXd& params) {
    if (params.size() != problem.param_count())
        throw ShapeError("lm_step: " + std::to_string(params.size()) + " params vs problem's " +
                         std::to_string(problem.param_count()));
    LmResult out;
    out.state = state;
    Eigen::MatrixXd jtj;
    Eigen::VectorXd jtr;
    double rss = 0.0;
    problem.normal_equations(params, jtj, jtr, rss);
    const double scale = problem.loss_scale();
    out.report.loss_before = rss * scale;
    out.report.lambda = state.lambda;
    bool accepted = false;
    Eigen::VectorXd accepted_params;
    double trial_loss = out.report.loss_before;
    try {
        const Eigen::VectorXd delta = lm_solve(jtj, jtr, state.lambda);
        Eigen::VectorXd trial = params + delta;
        trial_loss = problem.residuals(trial).squaredNorm() * scale;
        accepted = std::isfinite(trial_loss) && trial_loss <= out.report.loss_before;
        if (accepted) accepted_params = std::move(trial);
    } catch (const DefinitenessError&) {
        accepted = false; // damping too weak for this curvature; raise λ and retry next call
    }
    out.report.accepted = accepted;
    if (accepted) {
        out.params = std::move(accepted_params);
        out.report.loss_after = trial_loss;
        out.state.last_loss = trial_loss;
        double next = state.lambda / state.lambda_down;
        if (next < kLambdaMin) {
            out.report.lambda_saturated = true;
            next = kLambdaMin;
        }
        out.state.lambda = next;
    } else {
        out.params = params;
        out.report.loss_after = out.report.loss_before;
        double next = state.lambda * state.lambda_up;
        if (next > kLambdaMax) {
            out.report.lambda_saturated = true;
            next = kLambdaMax;
        }
        out.state.lambda = next;
    }
    return out;
}

NetworkLsqProblem::NetworkLsqProblem(nn::NetworkSpec spec, Tensor inputs, Tensor targets)
    : spec_(std::move(spec)), layout_(nn::param_layout(spec_)), inputs_(std::move(inputs)),
      targets_(std::move(targets)) {
    const std::vector<Shape> shapes = nn::infer_shapes(spec_);
    if (shapes.empty() || shapes.back().size() != 1)
        throw ShapeError("least squares: network output must be rank-1, got " +
                         (shapes.empty() ? std::string("no layers")
                                         : shape_str(shapes.back())));
    k_ = shapes.back()[0];
    Shape batched = spec_.input_shape;
    batched.insert(batched.begin(), inputs_.rank() > 0 ? inputs_.dim(0) : 0);
    if (inputs_.shape() != batched)
        throw ShapeError("least squares: inputs " + shape_str(inputs_.shape()) +
                         ", expected batched " + shape_str(spec_.input_shape));
    n_ = inputs_.dim(0);
    if (n_ < 1) throw ContractError("least squares: empty batch");
    if (targets_.rank() != 2 || targets_.dim(0) != n_ || targets_.dim(1) != k_)
        throw ShapeError("least squares: targets " + shape_str(targets_.shape()) +
                         ", expected [" + std::to_string(n_) + "x" + std::to_string(k_) + "]");
    p_ = 0;
    for (const nn::ParamSlot& s : layout_) p_ += s.count;
    if (p_ > kNormalEqBudget)
        throw ContractError("least squares: " + std::to_string(p_) +
                            " parameters exceed the dense normal-equations budget (" +
                            std::to_string(kNormalEqBudget) + ")");
}

nn::NetworkState NetworkLsqProblem::state_at(const Eigen::VectorXd& params) const {
    if (params.size() != p_)
        throw ShapeError("least squares: " + std::to_string(params.size()) + " params, expected " +
                         std::to_string(p_));
    return {spec_, params, layout_};
}

Tensor NetworkLsqProblem::sample(Index i) const {
    const Index numel = shape_numel(spec_.input_shape);
    Tensor out(spec_.input_shape);
    out.vec() = inputs_.vec().segment(i * numel, numel);
    return out;
}

Eigen::VectorXd NetworkLsqProblem::residuals(const Eigen::VectorXd& params) const {
    const nn::NetworkState st = state_at(params);
    const nn::ForwardResult fwd = nn::forward(st, inputs_);
    return targets_.vec() - fwd.output.vec();
}

Eigen::MatrixXd NetworkLsqProblem::jacobian(const Eigen::VectorXd& params) const {
    const nn::NetworkState st = state_at(params);
    Eigen::MatrixXd j(n_ * k_, p_);
    for (Index i = 0; i < n_; ++i) {
        const Tensor ji = nn::jacobian(st, sample(i));
        j.middleRows(i * k_, k_) = ji.mat();
    }
    return j;
}

void NetworkLsqProblem::normal_equations(const Eigen::VectorXd& params, Eigen::MatrixXd& jtj,
                                         Eigen::VectorXd& jtr, double& residual_ss) const {
    const nn::NetworkState st = state_at(params);
    jtj.setZero(p_, p_);
    jtr.setZero(p_);
    residual_ss = 0.0;
    // One column per residual row; chunk size is a pure function of (p, k),
    // so the accumulation order (and hence the result bits) never varies.
    const Index samples_per_chunk =
        std::max<Index>(1, kJacobianChunkDoubles / std::max<Index>(1, p_ * k_));
    Eigen::MatrixXd buf(p_, samples_per_chunk * k_);
    Eigen::VectorXd rbuf(samples_per_chunk * k_);
    Index filled = 0;
    for (Index i = 0; i < n_; ++i) {
        const Tensor x = sample(i);
        const nn::ForwardResult fwd = nn::forward(st, x);
        Tensor onehot(fwd.output.shape());
        for (Index k = 0; k < k_; ++k) {
            rbuf[filled + k] = targets_(i, k) - fwd.output[k];
            onehot.vec().setZero();
            onehot[k] = 1.0;
            buf.col(filled + k) = nn::backward(st, fwd.trace, onehot);
        }
        filled += k_;
        if (filled == buf.cols() || i == n_ - 1) {
            jtj.selfadjointView<Eigen::Lower>().rankUpdate(buf.leftCols(filled));
            jtr.noalias() += buf.leftCols(filled) * rbuf.head(filled);
            residual_ss += rbuf.head(filled).squaredNorm();
            filled = 0;
        }
    }
    jtj.triangularView<Eigen::StrictlyUpper>() = jtj.transpose();
}

namespace {

losses::LossResult eval_loss(const Tensor& output, const Batch& batch, losses::LossKind kind) {
    if (kind == losses::LossKind::MSE) {
        if (batch.targets.empty())
            throw ContractError("batch loss: MSE needs batch.targets");
        return losses::mse_loss(output, batch.targets);
    }
    if (Index(batch.labels.size()) != batch.size())
        throw ShapeError("batch loss: " + std::to_string(batch.labels.size()) + " labels for " +
                         std::to_string(batch.size()) + " samples");
    return losses::cross_entropy_loss(output, batch.labels);
}

void require_finite(const BatchEval& e) {
    if (!std::isfinite(e.loss) || !e.grad.allFinite())
        throw NumericError("optimizer_step: non-finite loss or gradient");
}

} // namespace

double batch_loss(const nn::NetworkState& model, const Batch& batch, losses::LossKind kind) {
    const nn::ForwardResult fwd = nn::forward(model, batch.inputs);
    return eval_loss(fwd.output, batch, kind).loss;
}

BatchEval batch_loss_grad(const nn::NetworkState& model, const Batch& batch,
                          losses::LossKind kind) {
    const nn::ForwardResult fwd = nn::forward(model, batch.inputs);
    const losses::LossResult lr = eval_loss(fwd.output, batch, kind);
    return {lr.loss, nn::backward(model, fwd.trace, lr.grad)};
}

OptimizerState make_state(const OptimizerKind& kind) {
    if (kind.memory < 1) throw ContractError("optimizer: memory must be >= 1");
    if (kind.max_line_search < 1) throw ContractError("optimizer: max_line_search must be >= 1");
    OptimizerState st;
    st.lbfgs.memory = kind.memory;
    return st;
}

StepResult optimizer_step(const OptimizerKind& kind, OptimizerState state, nn::NetworkState model,
                          const Batch& batch, losses::LossKind loss_kind, double lr) {
    if (batch.size() < 1) throw ContractError("optimizer_step: empty batch");
    StepResult out{std::move(model), std::move(state), {}};
    switch (kind.tag) {
    case OptimizerKind::Tag::Sgd: {
        const BatchEval e = batch_loss_grad(out.model, batch, loss_kind);
        require_finite(e);
        out.report.loss_before = e.loss;
        out.model.params = sgd_step(out.model.params, e.grad, lr);
        out.report.loss_after = batch_loss(out.model, batch, loss_kind);
        break;
    }
    case OptimizerKind::Tag::ConjGrad: {
        const BatchEval e = batch_loss_grad(out.model, batch, loss_kind);
        require_finite(e);
        out.report.loss_before = e.loss;
        CgResult r = cg_step(out.state.cg, out.model.params, e.grad, lr, kind.beta_rule);
        out.model.params = std::move(r.params);
        out.state.cg = std::move(r.state);
        out.report.loss_after = batch_loss(out.model, batch, loss_kind);
        break;
    }
    case OptimizerKind::Tag::Lbfgs: {
        const BatchEval e = batch_loss_grad(out.model, batch, loss_kind);
        require_finite(e);
        out.report.loss_before = e.loss;
        if (e.grad.squaredNorm() == 0.0) { // stationary point, nothing to search
            out.report.loss_after = e.loss;
            out.report.alpha = 0.0;
            break;
        }
        const Eigen::VectorXd direction = lbfgs_direction(out.state.lbfgs, e.grad);
        const LossOracle oracle = [&](const Eigen::VectorXd& w) {
            nn::NetworkState trial = out.model;
            trial.params = w;
            return batch_loss(trial, batch, loss_kind);
        };
        const LineSearchResult ls = line_search(oracle, out.model.params, direction, e.grad,
                                                e.loss, lr, kind.max_line_search);
        out.report.alpha = ls.alpha;
        out.report.accepted = ls.accepted;
        if (ls.accepted) {
            const Eigen::VectorXd old_params = out.model.params;
            out.model.params = old_params + ls.alpha * direction;
            const BatchEval e_new = batch_loss_grad(out.model, batch, loss_kind);
            out.state.lbfgs = bfgs_update(std::move(out.state.lbfgs),
                                          out.model.params - old_params, e_new.grad - e.grad);
            out.report.loss_after = ls.loss;
        } else {
            out.report.loss_after = e.loss; // model untouched
        }
        break;
    }
    case OptimizerKind::Tag::Lm: {
        if (batch.targets.empty())
            throw ContractError(
                "optimizer_step: LM needs batch.targets (one-hot rows for classification)");
        const NetworkLsqProblem problem(out.model.spec, batch.inputs, batch.targets);
        LmResult r = lm_step(out.state.lm, problem, out.model.params);
        out.model.params = std::move(r.params);
        out.state.lm = r.state;
        out.report = r.report;
        break;
    }
    }
    return out;
}

} // namespace optbench::opt
