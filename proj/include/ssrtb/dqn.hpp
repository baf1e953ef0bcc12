#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ssrtb/mdp.hpp"
#include "ssrtb/rng.hpp"

namespace ssrtb {

inline constexpr int kActionCount = 100;

// Feed-forward Q approximator: affine chains with rectifier hidden units and
// a linear output, one Q-value per action.
class QNetwork {
public:
    struct Layer {
        Eigen::MatrixXd W;
        Eigen::VectorXd b;
    };

    explicit QNetwork(std::vector<int> sizes = {kFeatureDim, 300, 200, kActionCount});

    // Uniform in +-sqrt(6 / (fan_in + fan_out)).
    void init_weights(Rng& rng);

    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }

    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    // Batched forward; input is (input_dim x batch).
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& input) const;
    std::vector<double> q_values(const MdpState& state) const;

    std::vector<Layer> layers;

    bool operator==(const QNetwork& other) const;

private:
    std::vector<int> sizes_;
};

struct Transition {
    MdpState s;
    int a = 0;
    double r = 0.0;
    MdpState s_next;
    bool terminal = false;
};

// FIFO ring buffer of transitions.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return buf_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return buf_[i]; }

    // Uniform with replacement.
    std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

private:
    std::size_t capacity_;
    std::deque<Transition> buf_;
};

struct TrainerConfig {
    double gamma = 1.0;
    double learning_rate = 1e-4;
    int batch_size = 300;
    int updates_per_step = 1;       // gradient updates per environment step
    long target_sync_period = 1000; // C, counted in gradient updates
    std::size_t memory_capacity = 100000;
    int episodes = 200;
    int action_count = kActionCount;      // valid prefix of the output layer
    double epsilon_start = 1.0;
    double epsilon_end = 0.0;
    double epsilon_decay_fraction = 0.8;  // of the expected total env steps
    int steps_per_episode_hint = kEpisodeSteps;
    double reward_scale = 1.0;            // applied to r before it enters targets
    double rmsprop_decay = 0.95;
    double rmsprop_epsilon = 1e-6;
    std::vector<int> layer_sizes = {kFeatureDim, 300, 200, kActionCount};

    void validate() const;
};

// Adaptive-gradient state for one network.
class RmsProp {
public:
    RmsProp() = default;
    RmsProp(const QNetwork& net, double learning_rate, double decay, double epsilon);

    void apply(QNetwork& net, const std::vector<QNetwork::Layer>& grads);

    double learning_rate = 1e-4;
    double decay = 0.95;
    double epsilon = 1e-6;
    std::vector<QNetwork::Layer> cache; // squared-gradient accumulators
};

int select_action(const QNetwork& net, const MdpState& state, double epsilon,
                  Rng& rng, int action_count = kActionCount);

// y = r for terminal transitions, else r + gamma * max_a Q_target(s', a).
std::vector<double> compute_targets(const std::vector<Transition>& batch,
                                    const QNetwork& target_net, double gamma,
                                    int action_count = kActionCount);

// Mean squared error over the taken-action outputs only.
double batch_loss(const QNetwork& net, const std::vector<Transition>& batch,
                  const std::vector<double>& targets);

struct GradientResult {
    double loss = 0.0;
    std::vector<QNetwork::Layer> grads;
};
GradientResult compute_gradients(const QNetwork& net,
                                 const std::vector<Transition>& batch,
                                 const std::vector<double>& targets);

// One optimizer update on the train net; returns the pre-update loss.
double train_step(QNetwork& train_net, const std::vector<Transition>& batch,
                  const std::vector<double>& targets, RmsProp& opt);

// Episodic environment driven by discrete actions.
class Env {
public:
    struct StepResult {
        MdpState next;
        double reward = 0.0;
        bool done = false;
        bool budget_violated = false; // next budget < 0; ends a training episode
    };

    virtual ~Env() = default;
    virtual MdpState reset() = 0;
    virtual StepResult step(int action) = 0;
    virtual int action_count() const { return kActionCount; }
};

struct TrainLog {
    struct Row {
        long batch = 0; // global train-step index, 1-based
        double loss = 0.0;
        int episode = 0;
    };
    std::vector<Row> rows;
    std::vector<double> episode_pur_amt; // unscaled, one per episode
    std::vector<long> target_sync_steps;
};

// The per-agent learner: three networks (train / episode / target), replay
// memory and the optimizer. Exposed separately from DqnTrainer so the
// massive-agent loop can drive many learners in lockstep.
class AgentLearner {
public:
    AgentLearner(TrainerConfig cfg, std::uint64_t seed);

    int act(const MdpState& state); // epsilon-greedy on the episode net
    void observe(const MdpState& s, int a, double raw_reward, const MdpState& s_next,
                 bool terminal);
    void end_episode(double episode_pur_amt);

    double current_epsilon() const;
    const QNetwork& train_net() const { return train_net_; }
    const QNetwork& episode_net() const { return episode_net_; }
    const QNetwork& target_net() const { return target_net_; }
    const RmsProp& optimizer() const { return opt_; }

    TrainLog log;
    std::vector<double> epsilon_trace; // one entry per act()

private:
    TrainerConfig cfg_;
    QNetwork train_net_, episode_net_, target_net_;
    ReplayMemory memory_;
    RmsProp opt_;
    Rng explore_rng_, replay_rng_;
    long env_steps_ = 0;
    long train_steps_ = 0;
    int episode_ = 1;
    double total_decay_steps_;
};

struct TrainResult {
    QNetwork net;
    RmsProp opt;
    TrainLog log;
    std::vector<double> epsilon_trace;
};

// Algorithm: n episodes of m steps; epsilon-greedy action from the episode
// net, environment step, replay store, targets from the target net, one
// gradient step on the train net; episode net synced at episode end, target
// net every C train steps. A step that drives the budget below zero is not
// stored and ends the training episode.
class DqnTrainer {
public:
    DqnTrainer(TrainerConfig cfg, std::uint64_t seed);
    TrainResult train(const std::function<std::unique_ptr<Env>(int episode)>& env_factory);

private:
    TrainerConfig cfg_;
    std::uint64_t seed_;
};

// Versioned binary dump of layer sizes, weights and optimizer state.
void save_checkpoint(const std::string& path, const QNetwork& net, const RmsProp& opt);
struct Checkpoint {
    QNetwork net;
    RmsProp opt;
};
Checkpoint load_checkpoint(const std::string& path);

} // namespace ssrtb
