#include "ssrtb/dqn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ssrtb/errors.hpp"

namespace ssrtb {

QNetwork::QNetwork(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ContractError("QNetwork: need at least two layer sizes");
    for (int s : sizes_)
        if (s < 1) throw ContractError("QNetwork: non-positive layer size");
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
        Layer layer;
        layer.W = Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]);
        layer.b = Eigen::VectorXd::Zero(sizes_[i + 1]);
        layers.push_back(std::move(layer));
    }
}

void QNetwork::init_weights(Rng& rng) {
    for (auto& layer : layers) {
        double bound = std::sqrt(6.0 / (layer.W.cols() + layer.W.rows()));
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
                layer.W(i, j) = rng.uniform(-bound, bound);
        layer.b.setZero();
    }
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd& input) const {
    if (input.rows() != input_dim())
        throw ContractError("QNetwork::forward_batch: wrong input dimension");
    Eigen::MatrixXd a = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd z = (layers[l].W * a).colwise() + layers[l].b;
        if (l + 1 < layers.size()) z = z.cwiseMax(0.0); // rectifier on hidden layers
        a = std::move(z);
    }
    return a;
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd& input) const {
    return forward_batch(input);
}

std::vector<double> QNetwork::q_values(const MdpState& state) const {
    if (static_cast<int>(state.g.size()) != input_dim())
        throw ContractError("QNetwork::q_values: state feature width mismatch");
    Eigen::VectorXd in(input_dim());
    for (int i = 0; i < input_dim(); ++i) in[i] = state.g[i];
    Eigen::VectorXd out = forward(in);
    return {out.data(), out.data() + out.size()};
}

bool QNetwork::operator==(const QNetwork& other) const {
    if (sizes_ != other.sizes_) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
        if (layers[l].W != other.layers[l].W || layers[l].b != other.layers[l].b)
            return false;
    return true;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("ReplayMemory: capacity must be positive");
}

void ReplayMemory::push(Transition t) {
    if (buf_.size() == capacity_) buf_.pop_front();
    buf_.push_back(std::move(t));
}

std::vector<Transition> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
    if (buf_.empty()) throw ContractError("ReplayMemory::sample: empty memory");
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i)
        out.push_back(buf_[rng.uniform_int(0, static_cast<int>(buf_.size()) - 1)]);
    return out;
}

void TrainerConfig::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("TrainerConfig: gamma out of [0,1]");
    if (batch_size < 1) throw ConfigError("TrainerConfig: batch_size must be >= 1");
    if (static_cast<std::size_t>(batch_size) > memory_capacity)
        throw ConfigError("TrainerConfig: batch_size exceeds memory capacity");
    if (updates_per_step < 1)
        throw ConfigError("TrainerConfig: updates_per_step must be >= 1");
    if (target_sync_period < 1) throw ConfigError("TrainerConfig: C must be >= 1");
    if (action_count < 1 || action_count > layer_sizes.back())
        throw ConfigError("TrainerConfig: action_count out of range");
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 ||
        epsilon_end > epsilon_start)
        throw ConfigError("TrainerConfig: bad epsilon schedule");
}

RmsProp::RmsProp(const QNetwork& net, double lr, double d, double eps)
    : learning_rate(lr), decay(d), epsilon(eps) {
    for (const auto& layer : net.layers) {
        QNetwork::Layer c;
        c.W = Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols());
        c.b = Eigen::VectorXd::Zero(layer.b.size());
        cache.push_back(std::move(c));
    }
}

void RmsProp::apply(QNetwork& net, const std::vector<QNetwork::Layer>& grads) {
    if (cache.size() != net.layers.size() || grads.size() != net.layers.size())
        throw ContractError("RmsProp::apply: layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        cache[l].W = decay * cache[l].W + (1.0 - decay) * grads[l].W.cwiseProduct(grads[l].W);
        cache[l].b = decay * cache[l].b + (1.0 - decay) * grads[l].b.cwiseProduct(grads[l].b);
        net.layers[l].W.array() -=
            learning_rate * grads[l].W.array() / (cache[l].W.array().sqrt() + epsilon);
        net.layers[l].b.array() -=
            learning_rate * grads[l].b.array() / (cache[l].b.array().sqrt() + epsilon);
    }
}

int select_action(const QNetwork& net, const MdpState& state, double epsilon,
                  Rng& rng, int action_count) {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw ContractError("select_action: epsilon out of [0,1]");
    if (action_count < 1 || action_count > net.output_dim())
        throw ContractError("select_action: action_count out of range");
    if (rng.uniform() < epsilon) return rng.uniform_int(0, action_count - 1);
    std::vector<double> q = net.q_values(state);
    int best = 0;
    for (int a = 1; a < action_count; ++a)
        if (q[a] > q[best]) best = a; // ties resolve to the lowest index
    return best;
}

std::vector<double> compute_targets(const std::vector<Transition>& batch,
                                    const QNetwork& target_net, double gamma,
                                    int action_count) {
    std::vector<double> y;
    y.reserve(batch.size());
    for (const auto& t : batch) {
        if (t.terminal) {
            y.push_back(t.r);
        } else {
            std::vector<double> q = target_net.q_values(t.s_next);
            double best = q[0];
            for (int a = 1; a < action_count; ++a) best = std::max(best, q[a]);
            y.push_back(t.r + gamma * best);
        }
    }
    return y;
}

namespace {
Eigen::MatrixXd states_matrix(const QNetwork& net, const std::vector<Transition>& batch) {
    Eigen::MatrixXd X(net.input_dim(), batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j)
        for (int i = 0; i < net.input_dim(); ++i) X(i, j) = batch[j].s.g[i];
    return X;
}
} // namespace

double batch_loss(const QNetwork& net, const std::vector<Transition>& batch,
                  const std::vector<double>& targets) {
    if (batch.empty()) throw ContractError("batch_loss: empty batch");
    Eigen::MatrixXd Q = net.forward_batch(states_matrix(net, batch));
    double loss = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        double d = Q(batch[j].a, j) - targets[j];
        loss += d * d;
    }
    return loss / batch.size();
}

GradientResult compute_gradients(const QNetwork& net,
                                 const std::vector<Transition>& batch,
                                 const std::vector<double>& targets) {
    if (batch.empty()) throw ContractError("compute_gradients: empty batch");
    if (batch.size() != targets.size())
        throw ContractError("compute_gradients: batch/target size mismatch");
    const std::size_t L = net.layers.size();
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());

    // Forward pass keeping activations: acts[0] = input, acts[l] after layer l.
    std::vector<Eigen::MatrixXd> acts(L + 1);
    acts[0] = states_matrix(net, batch);
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (net.layers[l].W * acts[l]).colwise() + net.layers[l].b;
        if (l + 1 < L) z = z.cwiseMax(0.0);
        acts[l + 1] = std::move(z);
    }

    GradientResult result;
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(net.output_dim(), B);
    for (Eigen::Index j = 0; j < B; ++j) {
        double d = acts[L](batch[j].a, j) - targets[j];
        result.loss += d * d;
        delta(batch[j].a, j) = 2.0 * d / static_cast<double>(B);
    }
    result.loss /= static_cast<double>(B);

    result.grads.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        result.grads[l].W = delta * acts[l].transpose();
        result.grads[l].b = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = net.layers[l].W.transpose() * delta;
            // Rectifier gate from the post-activation values.
            delta = back.cwiseProduct(
                (acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return result;
}

double train_step(QNetwork& train_net, const std::vector<Transition>& batch,
                  const std::vector<double>& targets, RmsProp& opt) {
    GradientResult g = compute_gradients(train_net, batch, targets);
    if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss " << g.loss << " on batch of "
            << batch.size() << "; training aborted";
        throw Error(msg.str());
    }
    opt.apply(train_net, g.grads);
    return g.loss;
}

AgentLearner::AgentLearner(TrainerConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      train_net_(cfg_.layer_sizes),
      episode_net_(cfg_.layer_sizes),
      target_net_(cfg_.layer_sizes),
      memory_(cfg_.memory_capacity),
      explore_rng_(substream_seed(seed, "explore")),
      replay_rng_(substream_seed(seed, "replay")) {
    cfg_.validate();
    Rng init_rng(substream_seed(seed, "init"));
    train_net_.init_weights(init_rng);
    episode_net_ = train_net_;
    target_net_ = train_net_;
    opt_ = RmsProp(train_net_, cfg_.learning_rate, cfg_.rmsprop_decay, cfg_.rmsprop_epsilon);
    total_decay_steps_ =
        cfg_.epsilon_decay_fraction * cfg_.episodes * cfg_.steps_per_episode_hint;
}

double AgentLearner::current_epsilon() const {
    if (total_decay_steps_ <= 0.0) return cfg_.epsilon_end;
    double frac = std::min(1.0, static_cast<double>(env_steps_) / total_decay_steps_);
    return cfg_.epsilon_start + (cfg_.epsilon_end - cfg_.epsilon_start) * frac;
}

int AgentLearner::act(const MdpState& state) {
    double eps = current_epsilon();
    epsilon_trace.push_back(eps);
    ++env_steps_;
    return select_action(episode_net_, state, eps, explore_rng_, cfg_.action_count);
}

void AgentLearner::observe(const MdpState& s, int a, double raw_reward,
                           const MdpState& s_next, bool terminal) {
    Transition t{s, a, raw_reward * cfg_.reward_scale, s_next, terminal};
    memory_.push(std::move(t));
    for (int u = 0; u < cfg_.updates_per_step; ++u) {
        auto batch = memory_.sample(cfg_.batch_size, replay_rng_);
        auto targets = compute_targets(batch, target_net_, cfg_.gamma, cfg_.action_count);
        double loss = train_step(train_net_, batch, targets, opt_);
        ++train_steps_;
        log.rows.push_back({train_steps_, loss, episode_});
        if (train_steps_ % cfg_.target_sync_period == 0) {
            target_net_ = train_net_;
            log.target_sync_steps.push_back(train_steps_);
        }
    }
}

void AgentLearner::end_episode(double episode_pur_amt) {
    episode_net_ = train_net_;
    log.episode_pur_amt.push_back(episode_pur_amt);
    ++episode_;
}

DqnTrainer::DqnTrainer(TrainerConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed) {
    cfg_.validate();
}

TrainResult DqnTrainer::train(
    const std::function<std::unique_ptr<Env>(int episode)>& env_factory) {
    AgentLearner learner(cfg_, seed_);
    for (int ep = 0; ep < cfg_.episodes; ++ep) {
        auto env = env_factory(ep);
        MdpState s = env->reset();
        double pur = 0.0;
        while (true) {
            int a = learner.act(s);
            Env::StepResult r = env->step(a);
            if (r.budget_violated) break; // discard the transition, end the episode
            pur += r.reward;
            learner.observe(s, a, r.reward, r.next, r.done);
            if (r.done) break;
            s = r.next;
        }
        learner.end_episode(pur);
    }
    return {learner.train_net(), learner.optimizer(), std::move(learner.log),
            std::move(learner.epsilon_trace)};
}

namespace {
constexpr char kCheckpointMagic[8] = {'S', 'S', 'R', 'T', 'B', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_raw(std::ostream& os, const void* data, std::size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}
void read_raw(std::istream& is, void* data, std::size_t n) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw CheckpointCorruptError("checkpoint: truncated file");
}
void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    write_raw(os, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}
void read_matrix(std::istream& is, Eigen::MatrixXd& m) {
    read_raw(is, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}
void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
    write_raw(os, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}
void read_vector(std::istream& is, Eigen::VectorXd& v) {
    read_raw(is, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}
} // namespace

void save_checkpoint(const std::string& path, const QNetwork& net, const RmsProp& opt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
    write_raw(os, kCheckpointMagic, sizeof(kCheckpointMagic));
    write_raw(os, &kCheckpointVersion, sizeof(kCheckpointVersion));
    std::uint32_t n_sizes = static_cast<std::uint32_t>(net.sizes().size());
    write_raw(os, &n_sizes, sizeof(n_sizes));
    for (int s : net.sizes()) {
        std::uint32_t v = static_cast<std::uint32_t>(s);
        write_raw(os, &v, sizeof(v));
    }
    for (const auto& layer : net.layers) {
        write_matrix(os, layer.W);
        write_vector(os, layer.b);
    }
    double hyper[3] = {opt.learning_rate, opt.decay, opt.epsilon};
    write_raw(os, hyper, sizeof(hyper));
    for (const auto& c : opt.cache) {
        write_matrix(os, c.W);
        write_vector(os, c.b);
    }
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open for reading: " + path);
    char magic[8];
    read_raw(is, magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointCorruptError("checkpoint: bad magic");
    std::uint32_t version = 0;
    read_raw(is, &version, sizeof(version));
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("checkpoint: unsupported version " +
                                     std::to_string(version));
    std::uint32_t n_sizes = 0;
    read_raw(is, &n_sizes, sizeof(n_sizes));
    if (n_sizes < 2 || n_sizes > 64)
        throw CheckpointCorruptError("checkpoint: implausible layer count");
    std::vector<int> sizes(n_sizes);
    for (auto& s : sizes) {
        std::uint32_t v = 0;
        read_raw(is, &v, sizeof(v));
        s = static_cast<int>(v);
    }
    Checkpoint ckpt{QNetwork(sizes), RmsProp()};
    for (auto& layer : ckpt.net.layers) {
        read_matrix(is, layer.W);
        read_vector(is, layer.b);
    }
    double hyper[3];
    read_raw(is, hyper, sizeof(hyper));
    ckpt.opt = RmsProp(ckpt.net, hyper[0], hyper[1], hyper[2]);
    for (auto& c : ckpt.opt.cache) {
        read_matrix(is, c.W);
        read_vector(is, c.b);
    }
    return ckpt;
}

} // namespace ssrtb
