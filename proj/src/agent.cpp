#include "asvlab/agent.hpp"

#include "asvlab/error.hpp"
#include "asvlab/neural/checkpoint.hpp"
#include "asvlab/neural/optim.hpp"
#include "asvlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace asvlab::agent {

using dynamics::VesselState;
using nn::Graph;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------- modes

namespace {

struct ModeEntry {
    ExtractorMode mode;
    const char* name;
};

constexpr ModeEntry kModes[] = {
    {ExtractorMode::shallow_locked, "shallow_locked"}, {ExtractorMode::shallow_unlocked, "shallow_unlocked"},
    {ExtractorMode::deep_locked, "deep_locked"},       {ExtractorMode::deep_unlocked, "deep_unlocked"},
    {ExtractorMode::baseline, "baseline"},
};

}  // namespace

const char* mode_name(ExtractorMode m) {
    for (const auto& e : kModes) {
        if (e.mode == m) {
            return e.name;
        }
    }
    return "unknown";
}

ExtractorMode parse_mode(const std::string& name) {
    for (const auto& e : kModes) {
        if (name == e.name) {
            return e.mode;
        }
    }
    throw ConfigError("unknown feature extractor mode '" + name +
                      "' (expected shallow_locked, shallow_unlocked, deep_locked, deep_unlocked or baseline)");
}

bool is_locked(ExtractorMode m) { return m == ExtractorMode::shallow_locked || m == ExtractorMode::deep_locked; }

bool needs_checkpoint(ExtractorMode m) { return m != ExtractorMode::baseline; }

vae::Arch mode_arch(ExtractorMode m) {
    return m == ExtractorMode::deep_locked || m == ExtractorMode::deep_unlocked ? vae::Arch::deep
                                                                                : vae::Arch::shallow;
}

// ---------------------------------------------------------------- reward

double path_reward(double u, double heading_error, double cross_track, double u_max) {
    const double speed = std::clamp(u / u_max, 0.0, 1.0);
    return speed * (1.0 + std::cos(heading_error)) / (1.0 + std::abs(cross_track));
}

double reward(const VesselState& state, const guidance::NavFeatures& nav, bool collided, const RewardConfig& cfg) {
    if (collided) {
        return cfg.r_collision;
    }
    return path_reward(state.nu[0], nav.heading_error, nav.cross_track, cfg.u_max) - cfg.r_exists;
}

// ---------------------------------------------------------------- environment

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::none: return "none";
        case Termination::goal: return "goal";
        case Termination::progress: return "progress";
        case Termination::collision: return "collision";
        case Termination::timeout: return "timeout";
        case Termination::divergence: return "divergence";
    }
    return "unknown";
}

EnvConfig EnvConfig::resolved() const {
    EnvConfig c = *this;
    const double u_max = model.max_surge_speed;
    if (c.reward.u_max <= 0.0) {
        c.reward.u_max = u_max;
    }
    if (c.nav_scale.u <= 0.0) {
        c.nav_scale.u = u_max;
    }
    if (c.nav_scale.v <= 0.0) {
        c.nav_scale.v = u_max;
    }
    if (c.nav_scale.r <= 0.0) {
        const double d = model.linear_damping(2, 2);
        c.nav_scale.r = d > 0.0 ? model.max_yaw_moment / d : 1.0;
    }
    return c;
}

EnvConfig obstacle_free(EnvConfig c) {
    c.scenario.n_static = 0;
    c.scenario.n_dynamic = 0;
    return c;
}

nlohmann::json env_config_to_json(const EnvConfig& c) {
    return {
        {"model", dynamics::ship_model_to_json(c.model)},
        {"dt", c.sim.dt},
        {"integrator", c.sim.integrator == dynamics::Integrator::rk4 ? "rk4" : "semi_implicit_euler"},
        {"substeps", c.substeps},
        {"scenario", world::scenario_config_to_json(c.scenario)},
        {"sensor", world::sensor_config_to_json(c.sensor)},
        {"guidance", {{"lookahead", c.guidance.lookahead}, {"end_radius", c.guidance.end_radius}}},
        {"reward", {{"r_collision", c.reward.r_collision}, {"r_exists", c.reward.r_exists}, {"u_max", c.reward.u_max}}},
        {"nav_scale",
         {{"u", c.nav_scale.u},
          {"v", c.nav_scale.v},
          {"r", c.nav_scale.r},
          {"cross_track", c.nav_scale.cross_track},
          {"angle", c.nav_scale.angle},
          {"clip", c.nav_scale.clip}}},
        {"max_steps", c.max_steps},
        {"min_cumulative_reward", c.min_cumulative_reward},
        {"progress_done", c.progress_done},
    };
}

EnvConfig env_config_from_json(const nlohmann::json& j, EnvConfig c) {
    try {
        if (j.contains("model")) {
            c.model = dynamics::ship_model_from_json(j.at("model"));
        }
        c.sim.dt = j.value("dt", c.sim.dt);
        if (j.contains("integrator")) {
            const auto name = j.at("integrator").get<std::string>();
            if (name == "rk4") {
                c.sim.integrator = dynamics::Integrator::rk4;
            } else if (name == "semi_implicit_euler") {
                c.sim.integrator = dynamics::Integrator::semi_implicit_euler;
            } else {
                throw ConfigError("unknown integrator '" + name + "'");
            }
        }
        c.substeps = j.value("substeps", c.substeps);
        if (j.contains("scenario")) {
            c.scenario = world::scenario_config_from_json(j.at("scenario"), c.scenario);
        }
        if (j.contains("sensor")) {
            c.sensor = world::sensor_config_from_json(j.at("sensor"), c.sensor);
        }
        if (j.contains("guidance")) {
            const auto& g = j.at("guidance");
            c.guidance.lookahead = g.value("lookahead", c.guidance.lookahead);
            c.guidance.end_radius = g.value("end_radius", c.guidance.end_radius);
        }
        if (j.contains("reward")) {
            const auto& r = j.at("reward");
            c.reward.r_collision = r.value("r_collision", c.reward.r_collision);
            c.reward.r_exists = r.value("r_exists", c.reward.r_exists);
            c.reward.u_max = r.value("u_max", c.reward.u_max);
        }
        if (j.contains("nav_scale")) {
            const auto& n = j.at("nav_scale");
            c.nav_scale.u = n.value("u", c.nav_scale.u);
            c.nav_scale.v = n.value("v", c.nav_scale.v);
            c.nav_scale.r = n.value("r", c.nav_scale.r);
            c.nav_scale.cross_track = n.value("cross_track", c.nav_scale.cross_track);
            c.nav_scale.angle = n.value("angle", c.nav_scale.angle);
            c.nav_scale.clip = n.value("clip", c.nav_scale.clip);
        }
        c.max_steps = j.value("max_steps", c.max_steps);
        c.min_cumulative_reward = j.value("min_cumulative_reward", c.min_cumulative_reward);
        c.progress_done = j.value("progress_done", c.progress_done);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("environment config: ") + e.what());
    }
    if (c.sim.dt <= 0.0 || c.substeps < 1 || c.max_steps < 1 || c.reward.r_collision >= 0.0 ||
        c.reward.r_exists < 0.0 || c.nav_scale.cross_track <= 0.0 || c.nav_scale.angle <= 0.0) {
        throw ConfigError(
            "environment config: dt > 0, substeps >= 1, max_steps >= 1, r_collision < 0, r_exists >= 0 and positive "
            "nav scales required");
    }
    return c;
}

Env::Env(EnvConfig cfg) : cfg_(cfg.resolved()) {
    if (cfg_.substeps < 1 || cfg_.max_steps < 1 || cfg_.sim.dt <= 0.0) {
        throw ConfigError("environment needs dt > 0, substeps >= 1 and max_steps >= 1");
    }
}

EnvObservation Env::reset(world::Scenario scenario) {
    scenario_ = std::move(scenario);
    obstacles_ = scenario_.obstacles;
    state_ = scenario_.vessel_start;
    s_closest_ = guidance::closest_param(scenario_.path, state_.position());
    info_ = StepInfo{};
    info_.progress = guidance::progress(scenario_.path, s_closest_);
    info_.cross_track = guidance::cross_track_error_at(scenario_.path, state_.position(), s_closest_);
    info_.collided = world::collision_check(state_, obstacles_, cfg_.model.hull_radius);
    info_.reason = check_termination();
    ready_ = true;
    return observe();
}

Termination Env::check_termination() const {
    if (info_.collided) {
        return Termination::collision;
    }
    const auto& path = scenario_.path;
    if ((state_.position() - path.point(path.length())).norm() <= cfg_.guidance.end_radius) {
        return Termination::goal;
    }
    if (info_.progress > cfg_.progress_done) {
        return Termination::progress;
    }
    if (info_.cumulative_reward < cfg_.min_cumulative_reward) {
        return Termination::divergence;
    }
    if (info_.t >= cfg_.max_steps) {
        return Termination::timeout;
    }
    return Termination::none;
}

EnvObservation Env::observe() const {
    const auto nav = guidance::nav_features(scenario_.path, state_, cfg_.guidance, s_closest_);
    const auto& k = cfg_.nav_scale;
    EnvObservation o;
    o.nav = {nav.u / k.u,
             nav.v / k.v,
             nav.r / k.r,
             nav.cross_track / k.cross_track,
             nav.heading_error / k.angle,
             nav.lookahead_heading_error / k.angle};
    if (k.clip > 0.0) {
        for (double& x : o.nav) {
            x = std::clamp(x, -k.clip, k.clip);
        }
    }
    o.scan = world::scan(state_, obstacles_, cfg_.sensor);
    return o;
}

Env::StepResult Env::step(std::array<double, 2> action) {
    if (!ready_) {
        throw UsageError("Env::step called before reset");
    }
    if (done()) {
        throw UsageError(std::string("Env::step called after the episode ended (") + termination_name(info_.reason) +
                         ")");
    }
    const auto f = cfg_.model.from_action(action[0], action[1]);
    bool collided = false;
    for (int k = 0; k < cfg_.substeps && !collided; ++k) {
        state_ = dynamics::step(state_, f, cfg_.model, cfg_.sim);
        obstacles_ = world::step_obstacles(std::move(obstacles_), cfg_.sim.dt);
        collided = world::collision_check(state_, obstacles_, cfg_.model.hull_radius);
    }
    s_closest_ = guidance::closest_param(scenario_.path, state_.position(), s_closest_);
    const auto nav = guidance::nav_features(scenario_.path, state_, cfg_.guidance, s_closest_);
    StepResult out;
    out.reward = reward(state_, nav, collided, cfg_.reward);
    info_.t += 1;
    info_.cumulative_reward += out.reward;
    info_.progress = guidance::progress(scenario_.path, s_closest_);
    info_.cross_track = nav.cross_track;
    info_.collided = collided;
    info_.reason = check_termination();
    out.obs = observe();
    out.done = done();
    out.info = info_;
    return out;
}

// ---------------------------------------------------------------- policy

namespace {

void add_mlp(nn::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
             double out_gain, Rng& rng) {
    nn::kaiming_uniform(store.add(prefix + "l0.w", {hidden, in}), in, rng);
    store.add(prefix + "l0.b", {hidden});
    nn::kaiming_uniform(store.add(prefix + "l1.w", {hidden, hidden}), hidden, rng);
    store.add(prefix + "l1.b", {hidden});
    nn::kaiming_uniform(store.add(prefix + "out.w", {out, hidden}), hidden, rng, out_gain);
    store.add(prefix + "out.b", {out});
}

Var mlp(Graph& g, nn::ParamStore& p, const std::string& prefix, Var x) {
    auto layer = [&](Var h, const std::string& name) {
        return nn::linear(g, h, g.param(p.get(prefix + name + ".w")), g.param(p.get(prefix + name + ".b")));
    };
    Var h = nn::tanh(g, layer(x, "l0"));
    h = nn::tanh(g, layer(h, "l1"));
    return layer(h, "out");
}

struct Heads {
    Var observation;
    Var mean;
    Var log_std;
    Var value;
};

Heads forward(Graph& g, Agent& a, const Tensor& nav, const Tensor& scans) {
    const auto enc = vae::encode(g, a.encoder, a.params, g.constant(scans));
    Heads h;
    h.observation = nn::concat_columns(g, g.constant(nav), enc.mu);
    h.mean = mlp(g, a.params, "pi.", h.observation);
    h.value = mlp(g, a.params, "vf.", h.observation);
    h.log_std = g.param(a.params.get("log_std"));
    return h;
}

Agent skeleton(ExtractorMode mode, const vae::VaeSpec& spec, std::size_t hidden, std::uint64_t seed) {
    Agent a;
    a.mode = mode;
    a.encoder = spec;
    a.hidden = hidden;
    Rng rng(seed, streams::init, 1);
    vae::add_encoder_parameters(a.params, a.encoder, rng);
    add_mlp(a.params, "pi.", a.obs_dim(), hidden, kActionDim, 0.01, rng);
    add_mlp(a.params, "vf.", a.obs_dim(), hidden, 1, 1.0, rng);
    a.params.add("log_std", {kActionDim});
    if (is_locked(mode)) {
        a.params.set_trainable("enc.", false);
    }
    return a;
}

}  // namespace

Agent make_agent(ExtractorMode mode, const vae::VaeModel* encoder, std::uint64_t seed) {
    vae::VaeSpec spec;
    spec.arch = mode_arch(mode);
    if (needs_checkpoint(mode)) {
        if (encoder == nullptr) {
            throw ConfigError(std::string("mode ") + mode_name(mode) + " needs a pretrained encoder checkpoint");
        }
        if (encoder->spec.arch != spec.arch) {
            throw ConfigError(std::string("mode ") + mode_name(mode) + " needs a " + vae::arch_name(spec.arch) +
                              " encoder, checkpoint is " + vae::arch_name(encoder->spec.arch));
        }
        spec = encoder->spec;
    } else if (encoder != nullptr) {
        throw ConfigError("baseline mode uses a randomly initialized encoder and takes no checkpoint");
    }
    Agent a = skeleton(mode, spec, 64, seed);
    if (encoder != nullptr) {
        nn::copy_parameters(encoder->params, "enc.", a.params, "enc.");
    }
    return a;
}

PolicyOutput evaluate_policy(Agent& agent, const Tensor& nav, const Tensor& scans) {
    Graph g;
    const Heads h = forward(g, agent, nav, scans);
    PolicyOutput out;
    out.observation = g.value(h.observation);
    out.mean = g.value(h.mean);
    out.value = g.value(h.value);
    out.value.shape = {out.value.size()};
    return out;
}

namespace {

Tensor nav_tensor(const EnvObservation& o) { return Tensor({1, kNavDim}, std::vector<double>(o.nav.begin(), o.nav.end())); }

Tensor scan_tensor(const EnvObservation& o) { return Tensor({1, 1, o.scan.size()}, o.scan); }

}  // namespace

std::vector<double> make_observation(Agent& agent, const EnvObservation& obs) {
    return evaluate_policy(agent, nav_tensor(obs), scan_tensor(obs)).observation.data;
}

// ---------------------------------------------------------------- PPO

nlohmann::json ppo_config_to_json(const PpoConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"n_steps", c.n_steps},
            {"batch_size", c.batch_size},       {"n_epochs", c.n_epochs},
            {"gamma", c.gamma},                 {"gae_lambda", c.gae_lambda},
            {"clip_range", c.clip_range},       {"normalize_advantage", c.normalize_advantage},
            {"ent_coef", c.ent_coef},           {"vf_coef", c.vf_coef},
            {"max_grad_norm", c.max_grad_norm}, {"total_timesteps", c.total_timesteps},
            {"reward_scale", c.reward_scale}};
}

PpoConfig ppo_config_from_json(const nlohmann::json& j, PpoConfig c) {
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.n_steps = j.value("n_steps", c.n_steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.n_epochs = j.value("n_epochs", c.n_epochs);
        c.gamma = j.value("gamma", c.gamma);
        c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
        c.clip_range = j.value("clip_range", c.clip_range);
        c.normalize_advantage = j.value("normalize_advantage", c.normalize_advantage);
        c.ent_coef = j.value("ent_coef", c.ent_coef);
        c.vf_coef = j.value("vf_coef", c.vf_coef);
        c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
        c.total_timesteps = j.value("total_timesteps", c.total_timesteps);
        c.reward_scale = j.value("reward_scale", c.reward_scale);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("PPO config: ") + e.what());
    }
    if (c.learning_rate <= 0.0 || c.n_steps == 0 || c.batch_size == 0 || c.n_epochs < 1 || c.gamma < 0.0 ||
        c.gamma > 1.0 || c.gae_lambda < 0.0 || c.gae_lambda > 1.0 || c.clip_range <= 0.0 || c.max_grad_norm <= 0.0 ||
        c.total_timesteps < 0 || c.reward_scale <= 0.0) {
        throw ConfigError("PPO config: positive learning rate, sizes, clip range and grad norm; gamma and lambda in "
                          "[0, 1] required");
    }
    return c;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
              double last_value, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || dones.size() != n) {
        throw ShapeError("gae: rewards, values and dones must have equal length (" + std::to_string(n) + ", " +
                         std::to_string(values.size()) + ", " + std::to_string(dones.size()) + ")");
    }
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double live = dones[t] != 0.0 ? 0.0 : 1.0;
        const double next_value = t + 1 == n ? last_value : values[t + 1];
        const double delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        out.advantages[t] = next_adv;
        out.returns[t] = next_adv + values[t];
    }
    return out;
}

RolloutBuffer::RolloutBuffer(std::size_t cap, std::size_t scan_dim) : capacity(cap), scan_dim_(scan_dim) {
    nav.reserve(cap * kNavDim);
    scans.reserve(cap * scan_dim);
    actions.reserve(cap * kActionDim);
    log_probs.reserve(cap);
    values.reserve(cap);
    rewards.reserve(cap);
    dones.reserve(cap);
}

void RolloutBuffer::add(const EnvObservation& obs, std::span<const double> action, double log_prob, double value,
                        double reward, bool done) {
    if (full()) {
        throw UsageError("RolloutBuffer::add on a full buffer");
    }
    if (obs.scan.size() != scan_dim_ || action.size() != kActionDim) {
        throw ShapeError("RolloutBuffer::add: unexpected scan or action size");
    }
    nav.insert(nav.end(), obs.nav.begin(), obs.nav.end());
    scans.insert(scans.end(), obs.scan.begin(), obs.scan.end());
    actions.insert(actions.end(), action.begin(), action.end());
    log_probs.push_back(log_prob);
    values.push_back(value);
    rewards.push_back(reward);
    dones.push_back(done ? 1.0 : 0.0);
}

void RolloutBuffer::finish(double last_value, double gamma, double lambda) {
    if (!full()) {
        throw UsageError("RolloutBuffer::finish: advantages are computed only on a full buffer (" +
                         std::to_string(size()) + "/" + std::to_string(capacity) + ")");
    }
    gae = agent::gae(rewards, values, dones, last_value, gamma, lambda);
}

void RolloutBuffer::clear() {
    nav.clear();
    scans.clear();
    actions.clear();
    log_probs.clear();
    values.clear();
    rewards.clear();
    dones.clear();
    gae = {};
}

UpdateStats ppo_update(Agent& agent, const RolloutBuffer& buffer, const PpoConfig& cfg, Rng& rng) {
    if (!buffer.ready()) {
        throw UsageError("ppo_update needs a finished rollout buffer");
    }
    const std::size_t n = buffer.size();
    const std::size_t scan_dim = buffer.scans.size() / n;
    const nn::PpoLossConfig loss_cfg{cfg.clip_range, cfg.ent_coef, cfg.vf_coef};
    const nn::AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-5};
    std::vector<std::size_t> order(n);
    UpdateStats stats;
    std::size_t batches = 0;
    for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t first = 0; first < n; first += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - first);
            Tensor nav({b, kNavDim});
            Tensor scans({b, 1, scan_dim});
            nn::PpoBatch batch{Tensor({b, kActionDim}), Tensor({b}), Tensor({b}), Tensor({b})};
            for (std::size_t k = 0; k < b; ++k) {
                const std::size_t i = order[first + k];
                std::copy_n(buffer.nav.begin() + static_cast<std::ptrdiff_t>(i * kNavDim), kNavDim,
                            nav.data.begin() + static_cast<std::ptrdiff_t>(k * kNavDim));
                std::copy_n(buffer.scans.begin() + static_cast<std::ptrdiff_t>(i * scan_dim), scan_dim,
                            scans.data.begin() + static_cast<std::ptrdiff_t>(k * scan_dim));
                std::copy_n(buffer.actions.begin() + static_cast<std::ptrdiff_t>(i * kActionDim), kActionDim,
                            batch.actions.data.begin() + static_cast<std::ptrdiff_t>(k * kActionDim));
                batch.old_log_prob[k] = buffer.log_probs[i];
                batch.advantages[k] = buffer.gae.advantages[i];
                batch.returns[k] = buffer.gae.returns[i];
            }
            if (cfg.normalize_advantage && b > 1) {
                const double mean =
                    std::accumulate(batch.advantages.data.begin(), batch.advantages.data.end(), 0.0) / double(b);
                double var = 0.0;
                for (double a : batch.advantages.data) {
                    var += (a - mean) * (a - mean);
                }
                const double sd = std::sqrt(var / double(b - 1));
                for (double& a : batch.advantages.data) {
                    a = (a - mean) / (sd + 1e-8);
                }
            }
            agent.params.zero_grad();
            Graph g;
            const Heads h = forward(g, agent, nav, scans);
            nn::PpoLossTerms terms;
            Var loss = nn::ppo_loss(g, h.mean, h.log_std, h.value, batch, loss_cfg, &terms);
            if (!std::isfinite(terms.total)) {
                throw NumericError("ppo_update: non-finite loss (policy " + std::to_string(terms.policy_loss) +
                                   ", value " + std::to_string(terms.value_loss) + ")");
            }
            g.backward(loss);
            nn::clip_grad_norm(agent.params, cfg.max_grad_norm);
            nn::adam_step(agent.params, adam);
            stats.policy_loss += terms.policy_loss;
            stats.value_loss += terms.value_loss;
            stats.entropy += terms.entropy;
            stats.clip_fraction += terms.clip_fraction;
            stats.approx_kl += terms.approx_kl;
            ++batches;
        }
    }
    const double inv = batches > 0 ? 1.0 / double(batches) : 0.0;
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.clip_fraction *= inv;
    stats.approx_kl *= inv;
    return stats;
}

// ---------------------------------------------------------------- training and evaluation

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.precision(9);
    return out;
}

EpisodeRecord finish_record(int episode, const StepInfo& info, double cte_sum) {
    EpisodeRecord r;
    r.episode = episode;
    r.steps = info.t;
    r.progress = info.progress;
    r.mean_cte = info.t > 0 ? cte_sum / info.t : std::abs(info.cross_track);
    r.cumulative_reward = info.cumulative_reward;
    r.collision = info.reason == Termination::collision;
    r.reason = info.reason;
    return r;
}

}  // namespace

void write_episode_csv(const std::vector<EpisodeRecord>& episodes, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "episode,steps,progress,mean_cte,cumulative_reward,collision,termination_reason\n";
    for (const auto& e : episodes) {
        out << e.episode << ',' << e.steps << ',' << e.progress << ',' << e.mean_cte << ',' << e.cumulative_reward
            << ',' << (e.collision ? 1 : 0) << ',' << termination_name(e.reason) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

void write_trajectory_csv(const std::vector<TrajectoryPoint>& traj, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "t,x_n,y_n,psi,u,v,r,reward\n";
    for (const auto& p : traj) {
        out << p.t << ',' << p.state.eta[0] << ',' << p.state.eta[1] << ',' << p.state.eta[2] << ','
            << p.state.nu[0] << ',' << p.state.nu[1] << ',' << p.state.nu[2] << ',' << p.reward << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

TrainAgentResult train_agent(Agent agent, const PpoConfig& cfg, const EnvConfig& env_cfg, std::uint64_t seed,
                             const ProgressFn& progress) {
    TrainAgentResult res;
    res.agent = std::move(agent);
    Agent& a = res.agent;
    res.encoder_hash_before = nn::parameter_hash(a.params, "enc.");

    Env env(env_cfg);
    Rng action_rng(seed, streams::policy);
    Rng shuffle_rng(seed, streams::shuffle);
    RolloutBuffer buffer(cfg.n_steps, static_cast<std::size_t>(env.config().sensor.n_rays));

    int episode = 0;
    auto start_episode = [&]() {
        for (;;) {
            auto obs = env.reset(world::generate_scenario(seed, static_cast<std::uint64_t>(episode),
                                                          world::ScenarioKind::train, env.config().scenario));
            if (!env.done()) {
                return obs;
            }
            ++episode;
        }
    };
    EnvObservation obs = start_episode();
    double cte_sum = 0.0;
    const Tensor& log_std = a.params.get("log_std").value;

    while (res.timesteps < cfg.total_timesteps) {
        const auto out = evaluate_policy(a, nav_tensor(obs), scan_tensor(obs));
        std::array<double, kActionDim> action{};
        for (std::size_t k = 0; k < kActionDim; ++k) {
            action[k] = out.mean[k] + std::exp(log_std[k]) * action_rng.normal();
        }
        const double logp = nn::gaussian_log_prob(action, out.mean.values(), log_std.values());
        const auto step = env.step(action);
        buffer.add(obs, action, logp, out.value[0], cfg.reward_scale * step.reward, step.done);
        cte_sum += std::abs(step.info.cross_track);
        ++res.timesteps;
        if (step.done) {
            res.episodes.push_back(finish_record(episode, step.info, cte_sum));
            cte_sum = 0.0;
            ++episode;
            obs = start_episode();
        } else {
            obs = step.obs;
        }
        if (buffer.full()) {
            const double last_value = evaluate_policy(a, nav_tensor(obs), scan_tensor(obs)).value[0];
            buffer.finish(last_value, cfg.gamma, cfg.gae_lambda);
            res.updates.push_back(ppo_update(a, buffer, cfg, shuffle_rng));
            buffer.clear();
            if (progress) {
                progress(res.timesteps, res.episodes);
            }
        }
    }
    res.encoder_hash_after = nn::parameter_hash(a.params, "enc.");
    return res;
}

EpisodeRecord run_episode(Agent& agent, Env& env, world::Scenario scenario, int episode_index,
                          std::vector<TrajectoryPoint>* trajectory) {
    EnvObservation obs = env.reset(std::move(scenario));
    if (trajectory != nullptr) {
        trajectory->push_back({0, env.state(), 0.0});
    }
    double cte_sum = 0.0;
    while (!env.done()) {
        const auto out = evaluate_policy(agent, nav_tensor(obs), scan_tensor(obs));
        const auto step = env.step({out.mean[0], out.mean[1]});
        cte_sum += std::abs(step.info.cross_track);
        if (trajectory != nullptr) {
            trajectory->push_back({step.info.t, env.state(), step.reward});
        }
        obs = step.obs;
    }
    return finish_record(episode_index, env.info(), cte_sum);
}

EvalReport evaluate_agent(Agent& agent, const EnvConfig& env_cfg, int n_episodes, std::uint64_t seed_stream) {
    if (n_episodes < 2) {
        throw ConfigError("evaluate_agent needs at least two episodes");
    }
    EvalReport rep;
    rep.episodes.resize(static_cast<std::size_t>(n_episodes));
    const EnvConfig cfg = env_cfg.resolved();
    // Policy evaluation only reads the parameters.
    parallel_for(rep.episodes.size(), [&](std::size_t i) {
        Env env(cfg);
        auto sc = world::generate_scenario(seed_stream, i, world::ScenarioKind::test, cfg.scenario);
        rep.episodes[i] = run_episode(agent, env, std::move(sc), static_cast<int>(i));
    });
    std::vector<double> progress, cte, duration, collision;
    for (const auto& e : rep.episodes) {
        progress.push_back(100.0 * e.progress);
        cte.push_back(e.mean_cte);
        duration.push_back(e.steps);
        collision.push_back(e.collision ? 100.0 : 0.0);
    }
    rep.progress = stats::confidence_interval(progress);
    rep.cross_track = stats::confidence_interval(cte);
    rep.duration = stats::confidence_interval(duration);
    rep.collision_rate = stats::confidence_interval(collision);
    return rep;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "metric,mean,ci_lo,ci_hi,std,n\n";
    auto row = [&](const char* name, const stats::Interval& i) {
        out << name << ',' << i.mean << ',' << i.lo << ',' << i.hi << ',' << i.stddev << ',' << i.n << '\n';
    };
    row("progress_pct", report.progress);
    row("cte_m", report.cross_track);
    row("duration_steps", report.duration);
    row("collision_rate_pct", report.collision_rate);
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

void save_agent(const Agent& agent, const std::filesystem::path& path, const nlohmann::json& extra) {
    nlohmann::json meta = {{"kind", "agent"},
                           {"mode", mode_name(agent.mode)},
                           {"encoder", vae::spec_to_json(agent.encoder)},
                           {"hidden", agent.hidden}};
    if (!extra.is_null()) {
        meta["extra"] = extra;
    }
    nn::save_checkpoint(agent.params, path, meta);
}

Agent load_agent(const std::filesystem::path& path) {
    auto ck = nn::load_checkpoint(path);
    if (ck.meta.value("kind", std::string()) != "agent") {
        throw LoadError(path.string() + ": not an agent checkpoint");
    }
    Agent a;
    try {
        a = skeleton(parse_mode(ck.meta.at("mode").get<std::string>()), vae::spec_from_json(ck.meta.at("encoder")),
                     ck.meta.at("hidden").get<std::size_t>(), 0);
    } catch (const std::exception& e) {
        throw LoadError(path.string() + ": bad agent metadata: " + e.what());
    }
    nn::copy_parameters(ck.params, "", a.params, "");
    a.params.adam_steps = ck.params.adam_steps;
    return a;
}

}  // namespace asvlab::agent
