#pragma once

#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "optbench/nn.hpp"
#include "optbench/optimizers.hpp"
#include "optbench/rng.hpp"
#include "optbench/tensor.hpp"

namespace optbench::rl {

struct StepOutcome {
    Tensor observation;
    double reward = 0.0;
    bool done = false;
};

/// Episodic environment. step() after the episode ended (or before the
/// first reset) is a ContractError.
class Environment {
public:
    virtual ~Environment() = default;
    virtual Tensor reset(std::uint64_t seed) = 0;
    virtual StepOutcome step(int action) = 0;
    virtual int action_count() const = 0;
    virtual Shape observation_shape() const = 0;
};

/// Classic cart-pole balancing task, Euler-integrated. Observation is the
/// raw state [x, ẋ, θ, θ̇]; reward +1 per step; the episode ends when the
/// cart or pole leaves its band or after 500 steps.
class CartPoleEnv final : public Environment {
public:
    Tensor reset(std::uint64_t seed) override;
    StepOutcome step(int action) override;
    int action_count() const override { return 2; }
    Shape observation_shape() const override { return {4}; }

    static constexpr double kGravity = 9.8;
    static constexpr double kMassCart = 1.0;
    static constexpr double kMassPole = 0.1;
    static constexpr double kTotalMass = kMassCart + kMassPole;
    static constexpr double kHalfLength = 0.5;
    static constexpr double kPoleMassLength = kMassPole * kHalfLength;
    static constexpr double kForceMag = 10.0;
    static constexpr double kTau = 0.02;
    static constexpr double kXLimit = 2.4;
    static constexpr double kThetaLimit = 12.0 * std::numbers::pi / 180.0;
    static constexpr Index kMaxSteps = 500;

private:
    Tensor observe() const;

    double x_ = 0.0, x_dot_ = 0.0, theta_ = 0.0, theta_dot_ = 0.0;
    Index steps_ = 0;
    bool done_ = true; // reset() arms the episode
};

/// Minimal scrolling-pipes game on an 84×84 binary frame. Action 1 sets an
/// upward impulse, action 0 lets gravity pull; +0.1 per surviving step,
/// +1 for passing a pipe, −1 and done on any collision. Fully determined
/// by the reset seed and the action sequence.
class FlappyEnv final : public Environment {
public:
    Tensor reset(std::uint64_t seed) override;
    StepOutcome step(int action) override;
    int action_count() const override { return 2; }
    Shape observation_shape() const override { return {1, kFrame, kFrame}; }

    static constexpr Index kFrame = 84;
    static constexpr Index kBirdX = 20;   // left column of the bird square
    static constexpr Index kBirdSize = 4;
    static constexpr double kBirdStartY = 40.0;
    static constexpr double kGravity = 0.5;
    static constexpr double kFlapVelocity = -3.0; // y grows downward
    static constexpr double kScroll = 2.0;
    static constexpr Index kPipeWidth = 6;
    static constexpr Index kPipeGap = 30;
    static constexpr Index kPipeSpacing = 40;
    static constexpr Index kGapMargin = 8; // gap stays this far from the frame edges
    static constexpr double kSurviveReward = 0.1;
    static constexpr double kPipeReward = 1.0;
    static constexpr double kCrashReward = -1.0;

private:
    struct Pipe {
        double x;      // left edge
        Index gap_top; // gap rows are [gap_top, gap_top + kPipeGap)
        bool scored;
    };

    Tensor render() const;
    void maybe_spawn();

    double bird_y_ = kBirdStartY; // top row of the bird square
    double bird_vy_ = 0.0;
    std::vector<Pipe> pipes_;
    Rng rng_{0};
    bool done_ = true;
};

struct Transition {
    Tensor s;
    int a = 0;
    double r = 0.0;
    Tensor s_next;
    bool done = false;
};

/// Fixed-capacity ring of transitions with seed-deterministic uniform
/// sampling (with replacement).
class ReplayBuffer {
public:
    ReplayBuffer(Index capacity, std::uint64_t seed);

    void push(Transition t);
    Index size() const { return Index(items_.size()); }
    Index capacity() const { return capacity_; }
    const Transition& at(Index i) const; // i-th oldest
    std::vector<Index> sample_indices(Index n);

private:
    Index capacity_;
    std::vector<Transition> items_;
    Index head_ = 0; // oldest slot once the ring is full
    Rng rng_;
};

/// Bellman regression target: reward at terminal transitions, otherwise
/// reward + gamma·max(q_next).
double q_target(double reward, bool done, const Eigen::VectorXd& q_next, double gamma);

struct DqnConfig {
    double gamma = 0.99;
    double epsilon = 0.1; // per-episode exploration rate; scheduling is the caller's job
    Index batch_size = 32;
    double lr = 0.001;
    Index warmup = 500; // minimum buffer size before gradient steps
};

struct EpisodeMetrics {
    double episode_return = 0.0;
    Index env_steps = 0;
    Index train_steps = 0;
    double mean_loss_before = std::numeric_limits<double>::quiet_NaN();
    double mean_loss_after = std::numeric_limits<double>::quiet_NaN();
    double mean_chosen_q = 0.0; // mean Q(s, chosen action) over env steps
    double wall_time_ms = 0.0;  // summed over the episode's optimizer steps
    double last_lambda = std::numeric_limits<double>::quiet_NaN();
    double last_alpha = std::numeric_limits<double>::quiet_NaN();
    bool last_accepted = true;
    bool aborted = false; // non-finite loss ended the episode early
    std::string abort_reason;
};

/// One ε-greedy episode of deep Q-learning without a target network: act,
/// store, sample a batch, regress Q(s,a) toward the Bellman target of the
/// current network (other actions' targets equal their predictions), one
/// optimizer step per environment step once the buffer is warm.
EpisodeMetrics dqn_train_episode(Environment& env, nn::NetworkState& model,
                                 const opt::OptimizerKind& kind, opt::OptimizerState& ostate,
                                 ReplayBuffer& buffer, const DqnConfig& cfg, Rng& policy_rng,
                                 std::uint64_t env_seed);

/// Debug dump of a [h,w] or [1,h,w] frame as binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, const Tensor& frame);

} // namespace optbench::rl
