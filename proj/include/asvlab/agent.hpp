// Path-following environment, reward, observations and PPO training.
#pragma once

#include "asvlab/dynamics.hpp"
#include "asvlab/guidance.hpp"
#include "asvlab/neural/graph.hpp"
#include "asvlab/stats.hpp"
#include "asvlab/vae.hpp"
#include "asvlab/world.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace asvlab::agent {

enum class ExtractorMode { shallow_locked, shallow_unlocked, deep_locked, deep_unlocked, baseline };

const char* mode_name(ExtractorMode m);
/// Throws ConfigError for unknown names.
ExtractorMode parse_mode(const std::string& name);
bool is_locked(ExtractorMode m);
bool needs_checkpoint(ExtractorMode m);
vae::Arch mode_arch(ExtractorMode m);

// ---------------------------------------------------------------- reward

struct RewardConfig {
    double r_collision = -1000.0;
    double r_exists = 1.0;
    double u_max = 0.0;  // <= 0: take the ship model's max surge speed
};

/// (u/u_max clamped to [0, 1]) * (1 + cos psi_err) / (1 + |cte|), in [0, 2].
double path_reward(double u, double heading_error, double cross_track, double u_max);
double reward(const dynamics::VesselState& state, const guidance::NavFeatures& nav, bool collided,
              const RewardConfig& cfg);

// ---------------------------------------------------------------- environment

/// Divisors applied to the raw navigation features before they reach the
/// policy. Non-positive values are derived from the ship model.
struct NavScale {
    double u = 0.0;  // max surge speed
    double v = 0.0;  // max surge speed
    double r = 0.0;  // steady yaw rate at full yaw moment
    double cross_track = 10.0;
    double angle = 3.14159265358979323846;
    double clip = 5.0;  // bound on every scaled feature, <= 0 disables
};

enum class Termination { none, goal, progress, collision, timeout, divergence };
const char* termination_name(Termination t);

struct EnvConfig {
    dynamics::ShipModel model = dynamics::default_ship_model();
    dynamics::SimConfig sim;
    int substeps = 10;  // integrator steps per control step
    world::ScenarioConfig scenario;
    world::SensorConfig sensor;
    guidance::GuidanceConfig guidance;
    RewardConfig reward;
    NavScale nav_scale;
    int max_steps = 2000;
    double min_cumulative_reward = -2000.0;
    double progress_done = 0.99;

    /// Control period in seconds.
    double control_period() const { return sim.dt * substeps; }
    /// Copy with u_max and the nav divisors filled in from the model.
    EnvConfig resolved() const;
};

nlohmann::json env_config_to_json(const EnvConfig& c);
/// Missing keys keep `base` values. Throws ConfigError.
EnvConfig env_config_from_json(const nlohmann::json& j, EnvConfig base = {});

/// Obstacle-free variant of a config.
EnvConfig obstacle_free(EnvConfig c);

struct EnvObservation {
    std::array<double, 6> nav{};  // [u, v, r, cte, psi_err, psi_err_la], scaled
    world::Scan scan;
};

struct StepInfo {
    double progress = 0.0;  // fraction of path length
    double cross_track = 0.0;
    bool collided = false;
    int t = 0;  // control steps taken
    double cumulative_reward = 0.0;
    Termination reason = Termination::none;
};

class Env {
public:
    explicit Env(EnvConfig cfg);

    /// Places the vessel at the scenario start. The episode may already be
    /// over (e.g. a start within the goal radius); check done().
    EnvObservation reset(world::Scenario scenario);

    struct StepResult {
        EnvObservation obs;
        double reward = 0.0;
        bool done = false;
        StepInfo info;
    };

    /// Action in [-1, 1]^2 (clamped): normalized surge force and yaw moment.
    /// Throws UsageError before reset() or after the episode ended.
    StepResult step(std::array<double, 2> action);

    bool done() const { return info_.reason != Termination::none; }
    const StepInfo& info() const { return info_; }
    const dynamics::VesselState& state() const { return state_; }
    const world::Scenario& scenario() const { return scenario_; }
    const std::vector<world::Obstacle>& obstacles() const { return obstacles_; }
    const EnvConfig& config() const { return cfg_; }
    EnvObservation observe() const;

private:
    Termination check_termination() const;

    EnvConfig cfg_;
    world::Scenario scenario_;
    std::vector<world::Obstacle> obstacles_;
    dynamics::VesselState state_;
    double s_closest_ = 0.0;
    StepInfo info_;
    bool ready_ = false;
};

// ---------------------------------------------------------------- policy

inline constexpr std::size_t kNavDim = 6;
inline constexpr std::size_t kActionDim = 2;

/// Feature extractor (encoder "enc.*"), tanh MLP policy mean ("pi.*"),
/// state-independent log std ("log_std") and tanh MLP value ("vf.*").
struct Agent {
    ExtractorMode mode = ExtractorMode::baseline;
    vae::VaeSpec encoder;
    std::size_t hidden = 64;
    nn::ParamStore params;

    std::size_t obs_dim() const { return kNavDim + encoder.latent_dim; }
};

/// For non-baseline modes `encoder` must hold the pretrained VAE; its
/// encoder weights are copied and frozen in locked modes. Throws
/// ConfigError when a checkpoint is needed but missing, or its
/// architecture does not match the mode.
Agent make_agent(ExtractorMode mode, const vae::VaeModel* encoder, std::uint64_t seed);

struct PolicyOutput {
    nn::Tensor observation;  // (B, obs_dim): nav then latent mean
    nn::Tensor mean;         // (B, 2)
    nn::Tensor value;        // (B)
};

/// nav (B, 6), scans (B, 1, 180).
PolicyOutput evaluate_policy(Agent& agent, const nn::Tensor& nav, const nn::Tensor& scans);
/// Single 18-vector observation: scaled nav features then mu(scan).
std::vector<double> make_observation(Agent& agent, const EnvObservation& obs);

// ---------------------------------------------------------------- PPO

struct PpoConfig {
    double learning_rate = 2e-4;
    std::size_t n_steps = 1024;
    std::size_t batch_size = 32;
    int n_epochs = 4;
    double gamma = 0.999;
    double gae_lambda = 0.98;
    double clip_range = 0.2;
    bool normalize_advantage = true;
    double ent_coef = 0.01;
    double vf_coef = 0.5;
    double max_grad_norm = 0.5;
    std::int64_t total_timesteps = 3000000;
    /// Multiplies rewards before they enter the value targets; the
    /// environment reward itself is unchanged.
    double reward_scale = 0.01;
};

nlohmann::json ppo_config_to_json(const PpoConfig& c);
PpoConfig ppo_config_from_json(const nlohmann::json& j, PpoConfig base = {});

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// GAE(lambda). dones[t] != 0 means the episode ended after step t, which
/// cuts both the bootstrap and the advantage recursion. `last_value` is
/// V(s_T) for the state after the final step. Throws ShapeError on length
/// mismatch.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
              double last_value, double gamma, double lambda);

struct RolloutBuffer {
    std::size_t capacity = 0;
    std::vector<double> nav;      // capacity x 6
    std::vector<double> scans;    // capacity x 180
    std::vector<double> actions;  // capacity x 2
    std::vector<double> log_probs;
    std::vector<double> values;
    std::vector<double> rewards;
    std::vector<double> dones;
    GaeResult gae;

    explicit RolloutBuffer(std::size_t capacity = 0, std::size_t scan_dim = 180);
    std::size_t size() const { return rewards.size(); }
    bool full() const { return size() == capacity; }
    void add(const EnvObservation& obs, std::span<const double> action, double log_prob, double value,
             double reward, bool done);
    /// Throws UsageError unless the buffer is full.
    void finish(double last_value, double gamma, double lambda);
    bool ready() const { return !gae.advantages.empty(); }
    void clear();

private:
    std::size_t scan_dim_ = 180;
};

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

/// n_epochs passes of shuffled minibatches over a finished buffer with
/// gradient-norm clipping and Adam. Frozen parameters are untouched.
/// Throws UsageError for an unfinished buffer and NumericError for
/// non-finite losses.
UpdateStats ppo_update(Agent& agent, const RolloutBuffer& buffer, const PpoConfig& cfg, Rng& rng);

// ---------------------------------------------------------------- training and evaluation

struct EpisodeRecord {
    int episode = 0;
    int steps = 0;
    double progress = 0.0;  // fraction
    double mean_cte = 0.0;  // mean |cte| over steps [m]
    double cumulative_reward = 0.0;
    bool collision = false;
    Termination reason = Termination::none;
};

struct TrajectoryPoint {
    int t = 0;
    dynamics::VesselState state;
    double reward = 0.0;
};

/// CSV "episode,steps,progress,mean_cte,cumulative_reward,collision,termination_reason".
void write_episode_csv(const std::vector<EpisodeRecord>& episodes, const std::filesystem::path& path);
/// CSV "t,x_n,y_n,psi,u,v,r,reward".
void write_trajectory_csv(const std::vector<TrajectoryPoint>& traj, const std::filesystem::path& path);

struct TrainAgentResult {
    Agent agent;
    std::vector<EpisodeRecord> episodes;
    std::vector<UpdateStats> updates;
    std::string encoder_hash_before;
    std::string encoder_hash_after;
    std::int64_t timesteps = 0;
};

using ProgressFn = std::function<void(std::int64_t timesteps, const std::vector<EpisodeRecord>& episodes)>;

/// Single-environment rollouts over training scenarios (index = episode
/// number), deterministic in `seed`. Episodes still running when the step
/// budget is spent are not recorded.
TrainAgentResult train_agent(Agent agent, const PpoConfig& cfg, const EnvConfig& env_cfg, std::uint64_t seed,
                             const ProgressFn& progress = {});

/// Runs one episode with mean actions. Records the trajectory when asked.
EpisodeRecord run_episode(Agent& agent, Env& env, world::Scenario scenario, int episode_index,
                          std::vector<TrajectoryPoint>* trajectory = nullptr);

struct EvalReport {
    stats::Interval progress;        // percent
    stats::Interval cross_track;     // mean |cte| per episode [m]
    stats::Interval duration;        // control steps
    stats::Interval collision_rate;  // percent
    std::vector<EpisodeRecord> episodes;
};

/// n test scenarios from `seed_stream` (indices 0..n-1), mean actions.
/// Needs n >= 2.
EvalReport evaluate_agent(Agent& agent, const EnvConfig& env_cfg, int n_episodes, std::uint64_t seed_stream);

/// CSV "metric,mean,ci_lo,ci_hi,std,n" with rows progress_pct, cte_m,
/// duration_steps, collision_rate_pct.
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

void save_agent(const Agent& agent, const std::filesystem::path& path, const nlohmann::json& extra = {});
/// Throws LoadError for missing/corrupt files or non-agent checkpoints.
Agent load_agent(const std::filesystem::path& path);

}  // namespace asvlab::agent
