#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "optbench/losses.hpp"
#include "optbench/nn.hpp"
#include "optbench/tensor.hpp"

namespace optbench::opt {

enum class BetaRule { FletcherReeves, PolakRibiere, HestenesStiefel, DaiYuan };

struct OptimizerKind {
    enum class Tag { Sgd, ConjGrad, Lbfgs, Lm };

    Tag tag = Tag::Sgd;
    BetaRule beta_rule = BetaRule::FletcherReeves;
    Index memory = 10;          // LBFGS secant pairs kept
    Index max_line_search = 10; // LBFGS backtracking cap ("mi")

    static OptimizerKind sgd();
    static OptimizerKind conj_grad(BetaRule rule);
    static OptimizerKind lbfgs(Index memory, Index max_line_search);
    static OptimizerKind lm();
};

// Damping schedule bounds shared by every LM instance.
inline constexpr double kLambda0 = 1e-3;
inline constexpr double kLambdaMin = 1e-12;
inline constexpr double kLambdaMax = 1e12;

struct CgState {
    Eigen::VectorXd prev_grad;      // empty before the first step
    Eigen::VectorXd prev_direction; // last Δw
    Index steps_since_restart = 0;
};

struct LbfgsState {
    struct SecantPair {
        Eigen::VectorXd s; // w_{t+1} − w_t
        Eigen::VectorXd y; // g_{t+1} − g_t
    };
    std::deque<SecantPair> history; // oldest first, size ≤ memory
    Index memory = 10;
    Index t = 0; // update attempts seen, stored or not
};

struct LmState {
    double lambda = kLambda0;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    double last_loss = std::numeric_limits<double>::quiet_NaN();
};

/// params − lr·grad. Throws NumericError on a non-finite gradient so the
/// caller can abort the iteration.
Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

/// β for the CG direction update. Negative values clamp to 0 and a
/// denominator below 1e-30 in magnitude restarts (β = 0).
double compute_beta(BetaRule rule, const Eigen::VectorXd& grad_t, const Eigen::VectorXd& grad_prev,
                    const Eigen::VectorXd& dir_prev);

struct CgResult {
    Eigen::VectorXd params;
    CgState state;
};

/// One CG update: Δw = −grad + β·Δw_prev, params + lr·Δw. The first call
/// (empty state) and every param_count-th step use β = 0.
CgResult cg_step(const CgState& state, const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                 double lr, BetaRule rule);

/// Store a secant pair unless it fails the curvature condition
/// dot(s,y) > 1e-10·‖s‖·‖y‖; the oldest pair beyond memory is evicted.
LbfgsState bfgs_update(LbfgsState state, const Eigen::VectorXd& s, const Eigen::VectorXd& y);

/// Two-loop recursion applying the implied inverse-Hessian approximation,
/// scaled by γ = dot(s,y)/dot(y,y) of the newest pair. Empty history gives
/// −grad; the result is always a descent direction for nonzero gradients.
Eigen::VectorXd lbfgs_direction(const LbfgsState& state, const Eigen::VectorXd& grad);

struct LineSearchResult {
    double alpha = 0.0;
    bool accepted = false;
    double loss = std::numeric_limits<double>::quiet_NaN(); // loss at alpha
    Index evaluations = 0;
};

using LossOracle = std::function<double(const Eigen::VectorXd&)>;

/// Backtracking Armijo search along a descent direction: trial steps
/// lr0, lr0/2, ... accepted when
///   L(w + α d) ≤ loss0 + 1e-4·α·dot(grad, d).
/// loss0 must be the loss at params. Non-finite trials count as rejections.
/// After max_iter rejections returns accepted = false and the last α tried;
/// the caller must then leave the parameters unchanged.
LineSearchResult line_search(const LossOracle& evaluate, const Eigen::VectorXd& params,
                             const Eigen::VectorXd& direction, const Eigen::VectorXd& grad,
                             double loss0, double lr0, Index max_iter);

/// Nonlinear least-squares problem: residuals r = d − y(w) and Jacobian
/// J = ∂y/∂w. The LM objective is ‖r‖²·loss_scale().
class LeastSquaresProblem {
public:
    virtual ~LeastSquaresProblem() = default;

    virtual Index residual_count() const = 0;
    virtual Index param_count() const = 0;
    virtual Eigen::VectorXd residuals(const Eigen::VectorXd& params) const = 0;
    virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& params) const = 0;

    /// JᵀJ, Jᵀr and ‖r‖² in one evaluation, fixed accumulation order.
    /// Default composes residuals() and jacobian(); large problems override
    /// with a chunked accumulation that never materializes J.
    virtual void normal_equations(const Eigen::VectorXd& params, Eigen::MatrixXd& jtj,
                                  Eigen::VectorXd& jtr, double& residual_ss) const;

    /// Multiplier turning ‖r‖² into the reported loss (1 by default; the
    /// network adapter uses 1/n_samples to match mse_loss).
    virtual double loss_scale() const { return 1.0; }
};

/// Solve (JᵀJ + λI)Δ = Jᵀr by Cholesky. DefinitenessError propagates.
Eigen::VectorXd lm_solve(const Eigen::MatrixXd& jtj, const Eigen::VectorXd& jtr, double lambda);

struct StepReport {
    double loss_before = std::numeric_limits<double>::quiet_NaN();
    double loss_after = std::numeric_limits<double>::quiet_NaN();
    bool accepted = true;
    double lambda = std::numeric_limits<double>::quiet_NaN(); // LM only: λ used for the solve
    double alpha = std::numeric_limits<double>::quiet_NaN();  // LBFGS only: step length tried
    bool lambda_saturated = false; // λ update hit a clamp bound
};

struct LmResult {
    Eigen::VectorXd params;
    LmState state;
    StepReport report;
};

/// One damped Gauss-Newton iteration with the Marquardt accept/reject rule:
/// accept (λ/10) when the trial loss does not exceed the current one, else
/// reject (λ×10, parameters unchanged). A Cholesky definiteness failure or
/// non-finite trial loss counts as a rejection. λ stays in
/// [kLambdaMin, kLambdaMax]; hitting a bound sets lambda_saturated.
LmResult lm_step(const LmState& state, const LeastSquaresProblem& problem,
                 const Eigen::VectorXd& params);

/// Least-squares view of a network under MSE: residual block i holds
/// targets row i minus the raw network outputs for sample i, Jacobian rows
/// come from per-sample backward passes in sample order.
class NetworkLsqProblem final : public LeastSquaresProblem {
public:
    /// inputs [n, ...sample shape], targets [n, n_outputs]. Throws
    /// ContractError when param_count exceeds the dense-normal-equations
    /// budget (8000).
    NetworkLsqProblem(nn::NetworkSpec spec, Tensor inputs, Tensor targets);

    Index residual_count() const override { return n_ * k_; }
    Index param_count() const override { return p_; }
    Eigen::VectorXd residuals(const Eigen::VectorXd& params) const override;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& params) const override;
    void normal_equations(const Eigen::VectorXd& params, Eigen::MatrixXd& jtj,
                          Eigen::VectorXd& jtr, double& residual_ss) const override;
    double loss_scale() const override { return 1.0 / double(n_); }

private:
    nn::NetworkState state_at(const Eigen::VectorXd& params) const;
    Tensor sample(Index i) const;

    nn::NetworkSpec spec_;
    std::vector<nn::ParamSlot> layout_;
    Tensor inputs_;
    Tensor targets_;
    Index n_ = 0; // samples
    Index k_ = 0; // outputs per sample
    Index p_ = 0; // parameters
};

/// Minibatch: inputs plus whichever target representation the loss needs.
/// CrossEntropy reads labels; MSE (and LM) reads targets [n, n_outputs].
struct Batch {
    Tensor inputs;
    std::vector<int> labels;
    Tensor targets;

    Index size() const { return inputs.rank() > 0 ? inputs.dim(0) : 0; }
};

struct BatchEval {
    double loss = 0.0;
    Eigen::VectorXd grad; // d loss / d params, mean reduction over the batch
};

double batch_loss(const nn::NetworkState& model, const Batch& batch, losses::LossKind kind);
BatchEval batch_loss_grad(const nn::NetworkState& model, const Batch& batch,
                          losses::LossKind kind);

/// Per-run optimizer state; only the member matching the kind is touched.
struct OptimizerState {
    CgState cg;
    LbfgsState lbfgs;
    LmState lm;
};

OptimizerState make_state(const OptimizerKind& kind);

struct StepResult {
    nn::NetworkState model;
    OptimizerState state;
    StepReport report;
};

/// Uniform dispatch: SGD/CG step along the batch-mean gradient, LBFGS adds
/// the Armijo line search (model untouched when it fails), LM runs the
/// damped solve on batch.targets and ignores lr. loss_before/loss_after are
/// evaluated on this batch.
StepResult optimizer_step(const OptimizerKind& kind, OptimizerState state, nn::NetworkState model,
                          const Batch& batch, losses::LossKind loss_kind, double lr);

} // namespace optbench::opt
