#include "optbench/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <utility>

#include "optbench/errors.hpp"

namespace optbench::rl {

namespace {

void require_action(int action, int count, const char* env) {
    if (action < 0 || action >= count)
        throw IndexError(std::string(env) + ": action " + std::to_string(action) +
                         " out of range [0," + std::to_string(count) + ")");
}

} // namespace

Tensor CartPoleEnv::observe() const {
    return Tensor::from({4}, {x_, x_dot_, theta_, theta_dot_});
}

Tensor CartPoleEnv::reset(std::uint64_t seed) {
    Rng rng(seed);
    x_ = rng.uniform(-0.05, 0.05);
    x_dot_ = rng.uniform(-0.05, 0.05);
    theta_ = rng.uniform(-0.05, 0.05);
    theta_dot_ = rng.uniform(-0.05, 0.05);
    steps_ = 0;
    done_ = false;
    return observe();
}

StepOutcome CartPoleEnv::step(int action) {
    if (done_) throw ContractError("cartpole: step after done (reset first)");
    require_action(action, action_count(), "cartpole");
    const double force = action == 1 ? kForceMag : -kForceMag;
    const double cos_t = std::cos(theta_);
    const double sin_t = std::sin(theta_);
    const double temp = (force + kPoleMassLength * theta_dot_ * theta_dot_ * sin_t) / kTotalMass;
    const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                             (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / kTotalMass));
    const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
    x_ += kTau * x_dot_;
    x_dot_ += kTau * x_acc;
    theta_ += kTau * theta_dot_;
    theta_dot_ += kTau * theta_acc;
    steps_ += 1;
    done_ = std::abs(x_) > kXLimit || std::abs(theta_) > kThetaLimit || steps_ >= kMaxSteps;
    return {observe(), 1.0, done_};
}

Tensor FlappyEnv::reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    bird_y_ = kBirdStartY;
    bird_vy_ = 0.0;
    pipes_.clear();
    maybe_spawn();
    done_ = false;
    return render();
}

void FlappyEnv::maybe_spawn() {
    if (!pipes_.empty() && pipes_.back().x > double(kFrame - kPipeSpacing)) return;
    const Index span = kFrame - kPipeGap - 2 * kGapMargin;
    const Index gap_top = kGapMargin + Index(rng_.below(std::uint64_t(span)));
    pipes_.push_back({double(kFrame), gap_top, false});
}

StepOutcome FlappyEnv::step(int action) {
    if (done_) throw ContractError("flappy: step after done (reset first)");
    require_action(action, action_count(), "flappy");
    if (action == 1)
        bird_vy_ = kFlapVelocity;
    else
        bird_vy_ += kGravity;
    bird_y_ += bird_vy_;

    double reward = 0.0;
    for (Pipe& p : pipes_) p.x -= kScroll;
    while (!pipes_.empty() && pipes_.front().x + double(kPipeWidth) < 0.0)
        pipes_.erase(pipes_.begin());
    maybe_spawn();
    for (Pipe& p : pipes_) {
        if (!p.scored && p.x + double(kPipeWidth) < double(kBirdX)) {
            p.scored = true;
            reward += kPipeReward;
        }
    }

    const double bird_left = double(kBirdX);
    const double bird_right = bird_left + double(kBirdSize);
    bool crashed = bird_y_ < 0.0 || bird_y_ + double(kBirdSize) > double(kFrame);
    for (const Pipe& p : pipes_) {
        if (crashed) break;
        const bool overlap_x = bird_right > p.x && bird_left < p.x + double(kPipeWidth);
        if (!overlap_x) continue;
        const bool inside_gap =
            bird_y_ >= double(p.gap_top) && bird_y_ + double(kBirdSize) <= double(p.gap_top + kPipeGap);
        if (!inside_gap) crashed = true;
    }

    if (crashed) {
        reward += kCrashReward;
        done_ = true;
    } else {
        reward += kSurviveReward;
    }
    return {render(), reward, done_};
}

Tensor FlappyEnv::render() const {
    Tensor frame({1, kFrame, kFrame});
    double* px = frame.data();
    auto fill = [&](Index row0, Index row1, Index col0, Index col1) {
        row0 = std::clamp<Index>(row0, 0, kFrame);
        row1 = std::clamp<Index>(row1, 0, kFrame);
        col0 = std::clamp<Index>(col0, 0, kFrame);
        col1 = std::clamp<Index>(col1, 0, kFrame);
        for (Index r = row0; r < row1; ++r)
            for (Index c = col0; c < col1; ++c) px[r * kFrame + c] = 1.0;
    };
    for (const Pipe& p : pipes_) {
        const Index col0 = Index(std::llround(p.x));
        fill(0, p.gap_top, col0, col0 + kPipeWidth);
        fill(p.gap_top + kPipeGap, kFrame, col0, col0 + kPipeWidth);
    }
    const Index bird_row = std::clamp<Index>(Index(std::llround(bird_y_)), 0, kFrame - kBirdSize);
    fill(bird_row, bird_row + kBirdSize, kBirdX, kBirdX + kBirdSize);
    return frame;
}

ReplayBuffer::ReplayBuffer(Index capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity < 1) throw ContractError("replay buffer: capacity must be >= 1");
    items_.reserve(std::size_t(capacity));
}

void ReplayBuffer::push(Transition t) {
    if (size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[std::size_t(head_)] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

const Transition& ReplayBuffer::at(Index i) const {
    if (i < 0 || i >= size())
        throw IndexError("replay buffer: index " + std::to_string(i) + " of " +
                         std::to_string(size()));
    const Index slot = size() == capacity_ ? (head_ + i) % capacity_ : i;
    return items_[std::size_t(slot)];
}

std::vector<Index> ReplayBuffer::sample_indices(Index n) {
    if (size() < 1) throw ContractError("replay buffer: sampling from an empty buffer");
    std::vector<Index> out(static_cast<std::size_t>(n));
    for (Index& i : out) i = Index(rng_.below(std::uint64_t(size())));
    return out;
}

double q_target(double reward, bool done, const Eigen::VectorXd& q_next, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw ContractError("q_target: gamma must lie in [0, 1]");
    if (done) return reward;
    if (q_next.size() < 1) throw ContractError("q_target: empty next-state Q vector");
    return reward + gamma * q_next.maxCoeff();
}

namespace {

int argmax_row(const Eigen::Ref<const Eigen::VectorXd>& q) {
    int best = 0;
    for (Index i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = int(i);
    return best;
}

} // namespace

EpisodeMetrics dqn_train_episode(Environment& env, nn::NetworkState& model,
                                 const opt::OptimizerKind& kind, opt::OptimizerState& ostate,
                                 ReplayBuffer& buffer, const DqnConfig& cfg, Rng& policy_rng,
                                 std::uint64_t env_seed) {
    using clock = std::chrono::steady_clock;
    if (cfg.batch_size < 1) throw ContractError("dqn: batch_size must be >= 1");
    const int n_actions = env.action_count();
    const Shape obs_shape = env.observation_shape();
    const Index obs_numel = shape_numel(obs_shape);
    Shape batched_obs = obs_shape;
    batched_obs.insert(batched_obs.begin(), cfg.batch_size);

    EpisodeMetrics m;
    double sum_before = 0.0, sum_after = 0.0;
    Tensor obs = env.reset(env_seed);
    bool done = false;
    while (!done) {
        const Tensor q = nn::forward(model, obs).output;
        int action;
        if (policy_rng.uniform01() < cfg.epsilon)
            action = int(policy_rng.below(std::uint64_t(n_actions)));
        else
            action = argmax_row(q.vec());
        m.mean_chosen_q += q[action];

        StepOutcome outcome = env.step(action);
        m.episode_return += outcome.reward;
        m.env_steps += 1;
        done = outcome.done;
        buffer.push({std::move(obs), action, outcome.reward, outcome.observation, outcome.done});
        obs = std::move(outcome.observation);

        if (buffer.size() >= std::max<Index>(cfg.warmup, 1)) {
            const std::vector<Index> picks = buffer.sample_indices(cfg.batch_size);
            Tensor inputs(batched_obs);
            Tensor next_inputs(batched_obs);
            for (Index j = 0; j < cfg.batch_size; ++j) {
                const Transition& t = buffer.at(picks[std::size_t(j)]);
                inputs.vec().segment(j * obs_numel, obs_numel) = t.s.vec();
                next_inputs.vec().segment(j * obs_numel, obs_numel) = t.s_next.vec();
            }
            const Tensor q_pred = nn::forward(model, inputs).output;
            const Tensor q_next = nn::forward(model, next_inputs).output;
            Tensor targets = q_pred; // non-chosen actions keep their prediction
            for (Index j = 0; j < cfg.batch_size; ++j) {
                const Transition& t = buffer.at(picks[std::size_t(j)]);
                const Eigen::VectorXd qn = q_next.mat().row(j).transpose();
                targets(j, Index(t.a)) = q_target(t.r, t.done, qn, cfg.gamma);
            }
            opt::Batch batch{std::move(inputs), {}, std::move(targets)};
            try {
                const auto t0 = clock::now();
                opt::StepResult step = opt::optimizer_step(kind, std::move(ostate),
                                                           std::move(model), batch,
                                                           losses::LossKind::MSE, cfg.lr);
                const auto t1 = clock::now();
                model = std::move(step.model);
                ostate = std::move(step.state);
                m.wall_time_ms +=
                    std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0)
                        .count();
                m.train_steps += 1;
                sum_before += step.report.loss_before;
                sum_after += step.report.loss_after;
                m.last_lambda = step.report.lambda;
                m.last_alpha = step.report.alpha;
                m.last_accepted = step.report.accepted;
                if (!std::isfinite(step.report.loss_after)) {
                    m.aborted = true;
                    m.abort_reason = "non-finite loss";
                    break;
                }
            } catch (const NumericError& e) {
                m.aborted = true;
                m.abort_reason = e.what();
                break;
            }
        }
    }
    if (m.env_steps > 0) m.mean_chosen_q /= double(m.env_steps);
    if (m.train_steps > 0) {
        m.mean_loss_before = sum_before / double(m.train_steps);
        m.mean_loss_after = sum_after / double(m.train_steps);
    }
    return m;
}

void write_pgm(const std::string& path, const Tensor& frame) {
    Index h = 0, w = 0;
    if (frame.rank() == 2) {
        h = frame.dim(0);
        w = frame.dim(1);
    } else if (frame.rank() == 3 && frame.dim(0) == 1) {
        h = frame.dim(1);
        w = frame.dim(2);
    } else {
        throw ShapeError("write_pgm: expected [h,w] or [1,h,w], got " + shape_str(frame.shape()));
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("write_pgm: cannot open " + path);
    std::fprintf(f, "P5\n%lld %lld\n255\n", static_cast<long long>(w), static_cast<long long>(h));
    for (Index i = 0; i < h * w; ++i) {
        const double v = std::clamp(frame[i], 0.0, 1.0);
        const unsigned char byte = static_cast<unsigned char>(std::lround(v * 255.0));
        std::fputc(byte, f);
    }
    std::fclose(f);
}

} // namespace optbench::rl
