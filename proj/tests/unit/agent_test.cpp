#include "asvlab/agent.hpp"
#include "asvlab/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace asvlab;
using namespace asvlab::agent;
using dynamics::VesselState;

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Straight path along +x_n, no obstacles.
world::Scenario straight_scenario(double length = 500.0) {
    world::Scenario sc;
    sc.path = guidance::build_path({{0.0, 0.0}, {length, 0.0}});
    return sc;
}

double brute_force_advantage(const std::vector<double>& r, const std::vector<double>& v, const std::vector<double>& d,
                             double last, double gamma, double lambda, std::size_t t) {
    double acc = 0.0;
    double w = 1.0;
    for (std::size_t k = t; k < r.size(); ++k) {
        const double next = k + 1 < r.size() ? v[k + 1] : last;
        const double live = d[k] != 0.0 ? 0.0 : 1.0;
        acc += w * (r[k] + gamma * next * live - v[k]);
        if (live == 0.0) {
            break;
        }
        w *= gamma * lambda;
    }
    return acc;
}

vae::VaeModel shallow_vae() { return vae::make_vae({}, 1.0, 5); }

}  // namespace

TEST(Reward, Contract) {
    const RewardConfig cfg{-1000.0, 1.0, 2.0};
    VesselState s;
    guidance::NavFeatures nav;
    EXPECT_EQ(reward(s, nav, true, cfg), -1000.0);
    s.nu[0] = 2.0;
    EXPECT_DOUBLE_EQ(reward(s, nav, false, cfg), 1.0);
    s.nu[0] = 0.0;
    nav.heading_error = 1.3;
    nav.cross_track = 7.0;
    EXPECT_DOUBLE_EQ(reward(s, nav, false, cfg), -1.0);
}

TEST(Reward, PathTermBounded) {
    Rng rng(3);
    for (int i = 0; i < 1000000; ++i) {
        const double r = path_reward(rng.uniform(-5.0, 5.0), rng.uniform(-2 * kPi, 2 * kPi),
                                     rng.uniform(-300.0, 300.0), 2.77);
        ASSERT_GE(r, 0.0);
        ASSERT_LE(r, 2.0);
    }
}

TEST(Gae, TemporalDifferenceLimit) {
    const std::vector<double> r{1.0, -2.0, 0.5};
    const std::vector<double> v{0.3, 0.1, -0.4};
    const std::vector<double> d{0, 0, 0};
    const auto g = gae(r, v, d, 0.7, 0.9, 0.0);
    EXPECT_DOUBLE_EQ(g.advantages[0], 1.0 + 0.9 * 0.1 - 0.3);
    EXPECT_DOUBLE_EQ(g.advantages[1], -2.0 + 0.9 * -0.4 - 0.1);
    EXPECT_DOUBLE_EQ(g.advantages[2], 0.5 + 0.9 * 0.7 + 0.4);
    for (int t = 0; t < 3; ++t) {
        EXPECT_DOUBLE_EQ(g.returns[t], g.advantages[t] + v[t]);
    }
}

TEST(Gae, MonteCarloLimit) {
    const std::vector<double> r{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> zero(4, 0.0);
    const auto g = gae(r, zero, zero, 0.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(g.advantages[0], 10.0);
    EXPECT_DOUBLE_EQ(g.advantages[1], 9.0);
    EXPECT_DOUBLE_EQ(g.advantages[3], 4.0);
}

TEST(Gae, MatchesBruteForceOnGrid) {
    Rng rng(12);
    const double grid[] = {0.0, 0.5, 0.98, 1.0};
    for (double gamma : grid) {
        for (double lambda : grid) {
            for (int rep = 0; rep < 20; ++rep) {
                std::vector<double> r(10), v(10), d(10);
                for (int t = 0; t < 10; ++t) {
                    r[t] = rng.uniform(-2.0, 2.0);
                    v[t] = rng.uniform(-2.0, 2.0);
                    d[t] = rng.uniform() < 0.2 ? 1.0 : 0.0;
                }
                const double last = rng.uniform(-2.0, 2.0);
                const auto g = gae(r, v, d, last, gamma, lambda);
                for (std::size_t t = 0; t < 10; ++t) {
                    ASSERT_NEAR(g.advantages[t], brute_force_advantage(r, v, d, last, gamma, lambda, t), 1e-10);
                }
            }
        }
    }
}

TEST(Gae, LengthMismatch) {
    const std::vector<double> a(3), b(4);
    EXPECT_THROW(gae(a, b, a, 0.0, 0.9, 0.9), ShapeError);
}

TEST(Env, OnPathObservation) {
    Env env(obstacle_free({}));
    auto sc = straight_scenario();
    const auto obs = env.reset(sc);
    EXPECT_FALSE(env.done());
    for (double v : obs.nav) {
        EXPECT_NEAR(v, 0.0, 1e-9);
    }
    for (double v : obs.scan) {
        EXPECT_EQ(v, 0.0);
    }
    auto vm = shallow_vae();
    Agent a = make_agent(ExtractorMode::shallow_locked, &vm, 1);
    const auto x = make_observation(a, obs);
    ASSERT_EQ(x.size(), 18u);
    const auto mu = vae::encode(vm, nn::Tensor({1, 1, 180})).mu;
    for (std::size_t j = 0; j < 12; ++j) {
        EXPECT_EQ(x[6 + j], mu[j]);
    }
    EXPECT_EQ(make_observation(a, obs), x);
}

TEST(Env, NavFeaturesClipped) {
    auto sc = straight_scenario();
    sc.vessel_start.eta << 100.0, 200.0, 0.0;
    EnvConfig cfg = obstacle_free({});
    Env clipped(cfg);
    EXPECT_NEAR(std::abs(clipped.reset(sc).nav[3]), cfg.nav_scale.clip, 1e-12);
    cfg.nav_scale.clip = 0.0;
    Env raw(cfg);
    EXPECT_NEAR(std::abs(raw.reset(sc).nav[3]), 200.0 / cfg.nav_scale.cross_track, 1e-6);
}

TEST(Env, StartNearGoalEndsAtReset) {
    Env env(obstacle_free({}));
    auto sc = straight_scenario(200.0);
    sc.vessel_start.eta << 196.0, 0.0, 0.0;
    env.reset(sc);
    EXPECT_TRUE(env.done());
    EXPECT_EQ(env.info().reason, Termination::goal);
    EXPECT_THROW(env.step({0.0, 0.0}), UsageError);
}

TEST(Env, StepBeforeReset) {
    Env env(EnvConfig{});
    EXPECT_THROW(env.step({0.0, 0.0}), UsageError);
}

TEST(Env, Timeout) {
    EnvConfig cfg = obstacle_free({});
    cfg.max_steps = 3;
    Env env(cfg);
    env.reset(straight_scenario());
    int steps = 0;
    while (!env.done()) {
        env.step({1.0, 0.0});
        ++steps;
    }
    EXPECT_EQ(steps, 3);
    EXPECT_EQ(env.info().reason, Termination::timeout);
    EXPECT_THROW(env.step({0.0, 0.0}), UsageError);
}

TEST(Env, Divergence) {
    EnvConfig cfg = obstacle_free({});
    cfg.min_cumulative_reward = -2.5;
    Env env(cfg);
    env.reset(straight_scenario());
    // Standing still costs -1 per step.
    env.step({0.0, 0.0});
    env.step({0.0, 0.0});
    EXPECT_FALSE(env.done());
    const auto r = env.step({0.0, 0.0});
    EXPECT_TRUE(r.done);
    EXPECT_EQ(r.info.reason, Termination::divergence);
    EXPECT_DOUBLE_EQ(r.info.cumulative_reward, -3.0);
}

TEST(Env, CollisionEndsWithPenalty) {
    Env env(EnvConfig{});
    auto sc = straight_scenario();
    sc.obstacles.push_back(world::Obstacle::circle({30.0, 0.0}, 10.0));
    env.reset(sc);
    Env::StepResult r;
    while (!env.done()) {
        r = env.step({1.0, 0.0});
    }
    EXPECT_EQ(r.info.reason, Termination::collision);
    EXPECT_TRUE(r.info.collided);
    EXPECT_EQ(r.reward, -1000.0);
    EXPECT_LT(r.info.t, 40);
}

TEST(Env, FullSpeedOnPathEarnsNearlyOne) {
    Env env(obstacle_free({}));
    auto sc = straight_scenario(2000.0);
    sc.vessel_start.nu[0] = env.config().model.max_surge_speed;
    env.reset(sc);
    const auto r = env.step({1.0, 0.0});
    EXPECT_NEAR(r.reward, 1.0, 1e-6);
    EXPECT_GT(r.info.progress, 0.0);
}

TEST(Env, ConfigJsonRoundTrip) {
    EnvConfig c;
    c.max_steps = 77;
    c.scenario.n_static = 4;
    c.nav_scale.cross_track = 50.0;
    c.nav_scale.clip = 3.0;
    const EnvConfig back = env_config_from_json(env_config_to_json(c));
    EXPECT_EQ(back.max_steps, 77);
    EXPECT_EQ(back.scenario.n_static, 4);
    EXPECT_EQ(back.nav_scale.cross_track, 50.0);
    EXPECT_EQ(back.nav_scale.clip, 3.0);
    EXPECT_EQ(env_config_to_json(back), env_config_to_json(c));
    EXPECT_THROW(env_config_from_json({{"substeps", 0}}), ConfigError);
    EXPECT_THROW(env_config_from_json({{"integrator", "euler"}}), ConfigError);
    EXPECT_THROW(ppo_config_from_json({{"gamma", 1.5}}), ConfigError);
    EXPECT_EQ(ppo_config_from_json(ppo_config_to_json(PpoConfig{})).n_steps, 1024u);
}

TEST(Agent, ModeContracts) {
    auto shallow = shallow_vae();
    vae::VaeSpec deep_spec;
    deep_spec.arch = vae::Arch::deep;
    auto deep = vae::make_vae(deep_spec, 1.0, 1);
    EXPECT_THROW(make_agent(ExtractorMode::shallow_locked, nullptr, 0), ConfigError);
    EXPECT_THROW(make_agent(ExtractorMode::deep_locked, &shallow, 0), ConfigError);
    EXPECT_THROW(make_agent(ExtractorMode::baseline, &shallow, 0), ConfigError);
    EXPECT_THROW(parse_mode("frozen"), ConfigError);
    for (auto m : {ExtractorMode::shallow_locked, ExtractorMode::shallow_unlocked, ExtractorMode::deep_locked,
                   ExtractorMode::deep_unlocked, ExtractorMode::baseline}) {
        EXPECT_EQ(parse_mode(mode_name(m)), m);
    }

    Agent locked = make_agent(ExtractorMode::deep_locked, &deep, 0);
    EXPECT_EQ(nn::parameter_hash(locked.params, "enc."), nn::parameter_hash(deep.params, "enc."));
    for (auto* p : locked.params.with_prefix("enc.")) {
        EXPECT_FALSE(p->trainable);
    }
    Agent base = make_agent(ExtractorMode::baseline, nullptr, 0);
    EXPECT_EQ(base.encoder.arch, vae::Arch::shallow);
    for (auto* p : base.params.with_prefix("enc.")) {
        EXPECT_TRUE(p->trainable);
    }
}

TEST(Ppo, BufferNeedsToBeFull) {
    RolloutBuffer buf(4);
    EnvObservation o;
    o.scan.assign(180, 0.0);
    const double act[2] = {0.0, 0.0};
    buf.add(o, act, 0.0, 0.0, 1.0, false);
    EXPECT_THROW(buf.finish(0.0, 0.99, 0.95), UsageError);
    Agent a = make_agent(ExtractorMode::baseline, nullptr, 0);
    Rng rng(1);
    EXPECT_THROW(ppo_update(a, buf, PpoConfig{}, rng), UsageError);
}

namespace {

RolloutBuffer random_buffer(std::size_t n, Rng& rng, bool zero_advantage) {
    RolloutBuffer buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        EnvObservation o;
        for (double& v : o.nav) {
            v = rng.uniform(-1.0, 1.0);
        }
        o.scan.resize(180);
        for (double& v : o.scan) {
            v = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
        }
        const double act[2] = {rng.normal(), rng.normal()};
        buf.add(o, act, -2.0, 0.0, zero_advantage ? 0.0 : rng.normal(), false);
    }
    buf.finish(0.0, 0.99, 0.95);
    return buf;
}

}  // namespace

TEST(Ppo, LockedEncoderIsUntouched) {
    auto vm = shallow_vae();
    Rng rng(4);
    const auto buf = random_buffer(64, rng, false);
    PpoConfig cfg;
    cfg.batch_size = 16;

    Agent locked = make_agent(ExtractorMode::shallow_locked, &vm, 2);
    const auto before = nn::parameter_hash(locked.params, "enc.");
    const auto pi_before = nn::parameter_hash(locked.params, "pi.");
    Rng r1(1);
    ppo_update(locked, buf, cfg, r1);
    EXPECT_EQ(nn::parameter_hash(locked.params, "enc."), before);
    EXPECT_NE(nn::parameter_hash(locked.params, "pi."), pi_before);

    Agent unlocked = make_agent(ExtractorMode::shallow_unlocked, &vm, 2);
    Rng r2(1);
    ppo_update(unlocked, buf, cfg, r2);
    EXPECT_NE(nn::parameter_hash(unlocked.params, "enc."), before);
}

TEST(Ppo, ZeroAdvantageWithoutEntropyKeepsPolicy) {
    Rng rng(6);
    auto buf = random_buffer(32, rng, true);
    // Returns equal the stored values, advantages vanish.
    for (double a : buf.gae.advantages) {
        ASSERT_EQ(a, 0.0);
    }
    PpoConfig cfg;
    cfg.batch_size = 8;
    cfg.ent_coef = 0.0;
    Agent a = make_agent(ExtractorMode::baseline, nullptr, 3);
    // Old log-probs from the current policy, so every ratio is 1.
    const auto& log_std = a.params.get("log_std").value;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        nn::Tensor nav({1, kNavDim}, std::vector<double>(buf.nav.begin() + i * kNavDim,
                                                         buf.nav.begin() + (i + 1) * kNavDim));
        nn::Tensor scan({1, 1, 180}, std::vector<double>(buf.scans.begin() + i * 180, buf.scans.begin() + (i + 1) * 180));
        const auto out = evaluate_policy(a, nav, scan);
        buf.log_probs[i] = nn::gaussian_log_prob(std::span(&buf.actions[i * kActionDim], kActionDim),
                                                 out.mean.values(), log_std.values());
    }
    const auto pi = nn::parameter_hash(a.params, "pi.");
    const auto ls = nn::parameter_hash(a.params, "log_std");
    Rng r(2);
    const auto st = ppo_update(a, buf, cfg, r);
    EXPECT_EQ(nn::parameter_hash(a.params, "pi."), pi);
    EXPECT_EQ(nn::parameter_hash(a.params, "log_std"), ls);
    EXPECT_EQ(st.clip_fraction, 0.0);
}

TEST(Training, DeterministicAndRespectsLock) {
    auto vm = shallow_vae();
    PpoConfig cfg;
    cfg.n_steps = 256;
    cfg.total_timesteps = 1024;
    EnvConfig env;
    env.scenario.n_static = 2;
    env.scenario.n_dynamic = 2;
    env.max_steps = 150;
    const auto a = train_agent(make_agent(ExtractorMode::shallow_locked, &vm, 1), cfg, env, 9);
    const auto b = train_agent(make_agent(ExtractorMode::shallow_locked, &vm, 1), cfg, env, 9);
    ASSERT_EQ(a.episodes.size(), b.episodes.size());
    ASSERT_GE(a.episodes.size(), 5u);
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        EXPECT_EQ(a.episodes[i].cumulative_reward, b.episodes[i].cumulative_reward);
        EXPECT_EQ(a.episodes[i].steps, b.episodes[i].steps);
        EXPECT_NE(a.episodes[i].reason, Termination::none);
    }
    EXPECT_EQ(nn::parameter_hash(a.agent.params), nn::parameter_hash(b.agent.params));
    EXPECT_EQ(a.updates.size(), 4u);
    EXPECT_EQ(a.encoder_hash_before, a.encoder_hash_after);

    const auto u = train_agent(make_agent(ExtractorMode::shallow_unlocked, &vm, 1), cfg, env, 9);
    EXPECT_NE(u.encoder_hash_before, u.encoder_hash_after);
}

TEST(Evaluation, ImmediateCollisionPolicy) {
    EnvConfig env;
    env.model.hull_radius = 1e5;  // every start already touches an obstacle
    Agent a = make_agent(ExtractorMode::baseline, nullptr, 0);
    const auto rep = evaluate_agent(a, env, 10, 3);
    EXPECT_EQ(rep.collision_rate.mean, 100.0);
    EXPECT_LT(rep.progress.mean, 1.0);
    EXPECT_EQ(rep.duration.mean, 0.0);
}

TEST(Evaluation, DeterministicReportAndCsv) {
    EnvConfig env;
    env.max_steps = 60;
    Agent a = make_agent(ExtractorMode::baseline, nullptr, 4);
    const auto r1 = evaluate_agent(a, env, 6, 11);
    const auto r2 = evaluate_agent(a, env, 6, 11);
    EXPECT_EQ(r1.progress.mean, r2.progress.mean);
    EXPECT_EQ(r1.cross_track.mean, r2.cross_track.mean);
    EXPECT_EQ(r1.duration.mean, r2.duration.mean);
    EXPECT_NEAR(r1.progress.hi - r1.progress.mean, 1.96 * r1.progress.stddev / std::sqrt(6.0), 1e-9);

    const auto dir = std::filesystem::temp_directory_path() / "asvlab_agent_test";
    std::filesystem::remove_all(dir);
    write_report_csv(r1, dir / "report.csv");
    std::ifstream in(dir / "report.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "metric,mean,ci_lo,ci_hi,std,n");
    EXPECT_EQ(lines[1].rfind("progress_pct,", 0), 0u);
    EXPECT_EQ(lines[4].rfind("collision_rate_pct,", 0), 0u);

    write_episode_csv(r1.episodes, dir / "episodes.csv");
    std::ifstream ep(dir / "episodes.csv");
    std::getline(ep, line);
    EXPECT_EQ(line, "episode,steps,progress,mean_cte,cumulative_reward,collision,termination_reason");

    std::vector<TrajectoryPoint> traj;
    Env e(env);
    run_episode(a, e, world::generate_scenario(11, 0, world::ScenarioKind::test, env.scenario), 0, &traj);
    EXPECT_EQ(static_cast<int>(traj.size()), e.info().t + 1);
    write_trajectory_csv(traj, dir / "traj.csv");
    EXPECT_TRUE(std::filesystem::exists(dir / "traj.csv"));
    std::filesystem::remove_all(dir);
}

TEST(Agent, CheckpointRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "asvlab_agentckpt_test";
    std::filesystem::remove_all(dir);
    auto vm = shallow_vae();
    Agent a = make_agent(ExtractorMode::shallow_locked, &vm, 8);
    save_agent(a, dir / "agent.ckpt");
    Agent b = load_agent(dir / "agent.ckpt");
    EXPECT_EQ(b.mode, ExtractorMode::shallow_locked);
    EXPECT_EQ(nn::parameter_hash(b.params), nn::parameter_hash(a.params));
    EXPECT_FALSE(b.params.get("enc.head.w").trainable);
    vae::save_vae(vm, dir / "vae.ckpt");
    EXPECT_THROW(load_agent(dir / "vae.ckpt"), LoadError);
    EXPECT_THROW(load_agent(dir / "nothing.ckpt"), LoadError);
    std::filesystem::remove_all(dir);
}
