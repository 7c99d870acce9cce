// asvlab: dataset generation, VAE training/evaluation, agent training/evaluation
// and CSV export. Every run writes manifest.json next to its outputs; passing
// that manifest back through --config repeats the run exactly.

#include "asvlab/agent.hpp"
#include "asvlab/dataset.hpp"
#include "asvlab/error.hpp"
#include "asvlab/io.hpp"
#include "asvlab/parallel.hpp"
#include "asvlab/stats.hpp"
#include "asvlab/vae.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace asvlab;

namespace {

constexpr int kManifestVersion = 1;

void log(const std::string& command, const std::string& msg) { std::cerr << "[" << command << "] " << msg << '\n'; }

struct Run {
    std::string command;
    std::optional<fs::path> config_path;
    std::optional<std::uint64_t> seed_flag;
    fs::path out = ".";

    json config = json::object();  // resolved parameters, including flag values
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // file name relative to out -> sha256

    /// Loads --config. A manifest contributes its config and seed; any other
    /// JSON document is the parameter document itself.
    void load() {
        if (config_path) {
            const json doc = io::read_json(*config_path);
            if (doc.contains("manifest_version")) {
                if (doc.value("command", "") != command) {
                    throw ConfigError(config_path->string() + " is a manifest for '" + doc.value("command", "?") +
                                      "', not '" + command + "'");
                }
                config = doc.at("config");
                seed = doc.at("seed").get<std::uint64_t>();
            } else {
                config = doc;
                seed = config.value("seed", std::uint64_t{0});
            }
        }
        if (seed_flag) {
            seed = *seed_flag;
        }
        config.erase("seed");
    }

    template <typename T>
    void set(const std::string& key, const std::optional<T>& flag, const T& fallback) {
        if (flag) {
            config[key] = *flag;
        } else if (!config.contains(key)) {
            config[key] = fallback;
        }
    }

    fs::path input(const std::string& key) {
        if (!config.contains(key) || config.at(key).get<std::string>().empty()) {
            throw ConfigError("missing required input '--" + key + "'");
        }
        const fs::path p = config.at(key).get<std::string>();
        if (!fs::exists(p)) {
            throw LoadError("input not found: " + p.string());
        }
        inputs[p.string()] = io::sha256_file(p);
        return p;
    }

    fs::path output(const std::string& name) const { return out / name; }

    /// Hashes an output and its ".json" sidecar when one exists.
    void record(const std::string& name) {
        outputs[name] = io::sha256_file(out / name);
        if (fs::exists(out / (name + ".json"))) {
            outputs[name + ".json"] = io::sha256_file(out / (name + ".json"));
        }
    }

    void write_manifest() const {
        json m;
        m["manifest_version"] = kManifestVersion;
        m["command"] = command;
        m["seed"] = seed;
        m["config"] = config;
        m["config_hash"] = io::sha256_hex(std::span(config.dump().data(), config.dump().size()));
        m["inputs"] = inputs;
        m["outputs"] = outputs;
        io::write_json(out / "manifest.json", m);
    }
};

std::ofstream open_csv(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.precision(9);
    return out;
}

void write_interval(std::ostream& out, const std::string& name, const stats::Interval& iv) {
    out << name << ',' << iv.mean << ',' << iv.lo << ',' << iv.hi << ',' << iv.stddev << ',' << iv.n << '\n';
}

stats::Interval interval_of(const std::vector<double>& v) {
    if (v.size() >= 2) {
        return stats::confidence_interval(v);
    }
    stats::Interval iv;
    iv.n = v.size();
    iv.mean = iv.lo = iv.hi = v.empty() ? 0.0 : v.front();
    return iv;
}

// ---------------------------------------------------------------- gen-data

void gen_data(Run& run) {
    dataset::DatasetConfig cfg = dataset::dataset_config_from_json(run.config.value("dataset", json::object()));
    cfg.seed = run.seed;
    run.config["dataset"] = dataset::dataset_config_to_json(cfg);
    run.config["dataset"].erase("seed");

    log(run.command, "generating " + std::to_string(cfg.n_pilot + cfg.n_synth_mixed + cfg.n_synth_dynamic +
                                                    cfg.n_synth_static) +
                         " base scans");
    const auto ds = dataset::build_dataset(cfg);
    dataset::save_dataset(ds, run.output("dataset.bin"));
    run.record("dataset.bin");
    log(run.command, std::to_string(ds.rows()) + " rows written");
}

// ---------------------------------------------------------------- train-vae

void write_curve(const vae::TrainResult& r, const fs::path& path) {
    auto out = open_csv(path);
    out << "epoch,train_total,train_bce,train_kl,val_total,val_bce,val_kl\n";
    for (const auto& e : r.curve) {
        out << e.epoch << ',' << e.train.total << ',' << e.train.bce << ',' << e.train.kl << ',' << e.val.total << ','
            << e.val.bce << ',' << e.val.kl << '\n';
    }
}

void train_vae(Run& run) {
    const fs::path data = run.input("data");
    const auto ds = dataset::load_dataset(data);
    vae::VaeSpec spec;
    spec.arch = vae::parse_arch(run.config.at("arch").get<std::string>());
    spec.latent_dim = run.config.value("latent_dim", spec.latent_dim);
    spec.input_length = ds.cols;
    run.config["latent_dim"] = spec.latent_dim;
    const double beta = run.config.at("beta").get<double>();
    const int seeds = run.config.at("seeds").get<int>();
    if (seeds < 1) {
        throw ConfigError("--seeds must be >= 1");
    }
    const auto train_cfg = vae::train_config_from_json(run.config.value("train", json::object()));
    run.config["train"] = vae::train_config_to_json(train_cfg);

    std::vector<vae::TrainResult> results(static_cast<std::size_t>(seeds));
    log(run.command, "training " + std::to_string(seeds) + " " + vae::arch_name(spec.arch) + " model(s), beta " +
                         std::to_string(beta));
    parallel_for(results.size(), [&](std::size_t k) {
        results[k] = vae::train_vae(ds, spec, beta, train_cfg, run.seed + k);
    });
    for (std::size_t k = 0; k < results.size(); ++k) {
        const std::string stem = "vae_seed" + std::to_string(k);
        vae::save_vae(results[k].model, run.output(stem + ".ckpt"),
                      {{"seed", run.seed + k}, {"best_epoch", results[k].best_epoch}});
        write_curve(results[k], run.output(stem + "_curve.csv"));
        run.record(stem + ".ckpt");
        run.record(stem + "_curve.csv");
        const auto& last = results[k].curve.back();
        log(run.command, stem + ": best epoch " + std::to_string(results[k].best_epoch) + ", val total " +
                             std::to_string(last.val.total));
    }
}

// ---------------------------------------------------------------- eval-vae

void eval_vae(Run& run) {
    const fs::path data = run.input("data");
    const auto ds = dataset::load_dataset(data);
    const auto ckpts = run.config.at("ckpt").get<std::vector<std::string>>();
    if (ckpts.empty()) {
        throw ConfigError("eval-vae needs at least one --ckpt");
    }
    std::vector<vae::VaeModel> models;
    for (const auto& c : ckpts) {
        run.config["_tmp"] = c;
        models.push_back(vae::load_vae(run.input("_tmp")));
    }
    run.config.erase("_tmp");
    const auto test = ds.indices(dataset::Split::test);

    std::vector<double> total, bce, kl, active;
    auto dims = open_csv(run.output("latent_dims.csv"));
    dims << "model,dim,kl,mu_variance\n";
    for (std::size_t m = 0; m < models.size(); ++m) {
        const auto terms = vae::evaluate_rows(models[m], ds, test);
        total.push_back(terms.total);
        bce.push_back(terms.bce);
        kl.push_back(terms.kl);
        const auto diag = vae::latent_diagnostics(models[m], ds, test);
        active.push_back(static_cast<double>(diag.active_dims));
        for (std::size_t d = 0; d < diag.per_dim_kl.size(); ++d) {
            dims << m << ',' << d << ',' << diag.per_dim_kl[d] << ',' << diag.mu_variance[d] << '\n';
        }
    }
    dims.close();

    auto out = open_csv(run.output("report.csv"));
    out << "metric,mean,ci_lo,ci_hi,std,n\n";
    write_interval(out, "test_total", interval_of(total));
    write_interval(out, "test_bce", interval_of(bce));
    write_interval(out, "test_kl", interval_of(kl));
    write_interval(out, "active_dims", interval_of(active));
    out.close();
    run.record("report.csv");
    run.record("latent_dims.csv");
    const auto t = interval_of(total);
    log(run.command, "test loss " + std::to_string(t.mean) + " +- " + std::to_string(t.stddev) + " over " +
                         std::to_string(models.size()) + " model(s)");
}

// ---------------------------------------------------------------- train-agent

agent::EnvConfig env_from(Run& run) {
    auto env = agent::env_config_from_json(run.config.value("env", json::object()));
    if (run.config.contains("model_file")) {
        env.model = dynamics::load_ship_model(run.input("model_file"));
    }
    run.config["env"] = agent::env_config_to_json(env);
    return env;
}

void write_series(const std::vector<agent::EpisodeRecord>& eps, const fs::path& path, std::size_t window) {
    auto out = open_csv(path);
    out << "episode,progress,progress_smooth,progress_std,collision,collision_smooth,cte,cte_smooth\n";
    if (eps.empty()) {
        return;
    }
    std::vector<double> p, c, e;
    for (const auto& r : eps) {
        p.push_back(r.progress);
        c.push_back(r.collision ? 1.0 : 0.0);
        e.push_back(r.mean_cte);
    }
    const auto sp = stats::smooth(p, window);
    const auto sc = stats::smooth(c, window);
    const auto se = stats::smooth(e, window);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        out << eps[i].episode << ',' << p[i] << ',' << sp.smoothed[i] << ',' << sp.rolling_std[i] << ',' << c[i] << ','
            << sc.smoothed[i] << ',' << e[i] << ',' << se.smoothed[i] << '\n';
    }
}

void train_agent(Run& run) {
    const auto mode = agent::parse_mode(run.config.at("mode").get<std::string>());
    std::optional<vae::VaeModel> encoder;
    if (agent::needs_checkpoint(mode)) {
        encoder = vae::load_vae(run.input("vae"));
    } else {
        run.config.erase("vae");
    }
    const auto env = env_from(run);
    auto ppo = agent::ppo_config_from_json(run.config.value("ppo", json::object()));
    if (run.config.contains("timesteps")) {
        ppo.total_timesteps = run.config.at("timesteps").get<std::int64_t>();
    }
    run.config["timesteps"] = ppo.total_timesteps;
    run.config["ppo"] = agent::ppo_config_to_json(ppo);
    const auto window = run.config.value("smooth_window", std::size_t{100});
    run.config["smooth_window"] = window;

    auto a = agent::make_agent(mode, encoder ? &*encoder : nullptr, run.seed);
    std::int64_t next_log = 0;
    auto result = agent::train_agent(
        std::move(a), ppo, env, run.seed, [&](std::int64_t t, const std::vector<agent::EpisodeRecord>& eps) {
            if (t < next_log) {
                return;
            }
            next_log = t + 50000;
            const std::size_t k = std::min<std::size_t>(eps.size(), 100);
            double prog = 0.0, coll = 0.0;
            for (std::size_t i = eps.size() - k; i < eps.size(); ++i) {
                prog += eps[i].progress;
                coll += eps[i].collision ? 1.0 : 0.0;
            }
            log(run.command, std::to_string(t) + " steps, " + std::to_string(eps.size()) + " episodes" +
                                 (k ? ", last-" + std::to_string(k) + " progress " + std::to_string(prog / k) +
                                          " collisions " + std::to_string(coll / k)
                                    : ""));
        });

    agent::save_agent(result.agent, run.output("agent.ckpt"), {{"seed", run.seed}, {"timesteps", result.timesteps}});
    agent::write_episode_csv(result.episodes, run.output("episodes.csv"));
    write_series(result.episodes, run.output("curves.csv"), window);
    {
        auto out = open_csv(run.output("updates.csv"));
        out << "update,policy_loss,value_loss,entropy,clip_fraction,approx_kl\n";
        for (std::size_t i = 0; i < result.updates.size(); ++i) {
            const auto& u = result.updates[i];
            out << i << ',' << u.policy_loss << ',' << u.value_loss << ',' << u.entropy << ',' << u.clip_fraction
                << ',' << u.approx_kl << '\n';
        }
    }
    for (const char* f : {"agent.ckpt", "episodes.csv", "curves.csv", "updates.csv"}) {
        run.record(f);
    }
    log(run.command, "encoder hash " + result.encoder_hash_before.substr(0, 12) + " -> " +
                         result.encoder_hash_after.substr(0, 12));
}

// ---------------------------------------------------------------- eval-agent

void eval_agent(Run& run) {
    auto a = agent::load_agent(run.input("agent"));
    const auto env = env_from(run);
    const int episodes = run.config.at("episodes").get<int>();
    const int trajectories = run.config.value("trajectories", 0);
    run.config["trajectories"] = trajectories;

    const auto report = agent::evaluate_agent(a, env, episodes, run.seed);
    agent::write_report_csv(report, run.output("report.csv"));
    agent::write_episode_csv(report.episodes, run.output("episodes.csv"));
    run.record("report.csv");
    run.record("episodes.csv");
    agent::Env e(env);
    for (int k = 0; k < std::min(trajectories, episodes); ++k) {
        std::vector<agent::TrajectoryPoint> traj;
        const auto sc = world::generate_scenario(run.seed, static_cast<std::uint64_t>(k), world::ScenarioKind::test,
                                                 e.config().scenario);
        agent::run_episode(a, e, sc, k, &traj);
        const std::string name = "trajectory_" + std::to_string(k) + ".csv";
        agent::write_trajectory_csv(traj, run.output(name));
        run.record(name);
    }
    log(run.command, "progress " + std::to_string(report.progress.mean) + "% [" + std::to_string(report.progress.lo) +
                         ", " + std::to_string(report.progress.hi) + "], collisions " +
                         std::to_string(report.collision_rate.mean) + "%");
}

// ---------------------------------------------------------------- export

void export_cmd(Run& run) {
    const auto what = run.config.at("what").get<std::string>();
    if (what == "scans") {
        const auto ds = dataset::load_dataset(run.input("data"));
        const auto max_rows = run.config.value("max_rows", std::size_t{0});
        run.config["max_rows"] = max_rows;
        dataset::export_csv(ds, run.output("scans.csv"), max_rows);
        run.record("scans.csv");
    } else if (what == "latents") {
        const auto ds = dataset::load_dataset(run.input("data"));
        auto model = vae::load_vae(run.input("ckpt"));
        const auto split_name = run.config.value("split", std::string("test"));
        run.config["split"] = split_name;
        const dataset::Split split = split_name == "train" ? dataset::Split::train
                                     : split_name == "val" ? dataset::Split::val
                                     : split_name == "test"
                                         ? dataset::Split::test
                                         : throw ConfigError("--split must be train, val or test");
        vae::export_latents(model, ds, ds.indices(split), run.output("latents.csv"));
        run.record("latents.csv");
    } else if (what == "scenario") {
        const auto env = env_from(run);
        const auto index = run.config.value("index", std::uint64_t{0});
        run.config["index"] = index;
        const auto sc = world::generate_scenario(run.seed, index, world::ScenarioKind::test, env.scenario);
        io::write_json(run.output("scenario.json"), world::scenario_to_json(sc));
        run.record("scenario.json");
    } else {
        throw ConfigError("--what must be scans, latents or scenario");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asvlab: range-scan autoencoders and path-following agents"};
    app.require_subcommand(1);
    Run run;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", run.config_path, "JSON parameters or a manifest.json from an earlier run");
        sub->add_option("--seed", run.seed_flag, "Master seed");
        sub->add_option("--out", run.out, "Output directory")->capture_default_str();
    };

    auto* gen = app.add_subcommand("gen-data", "Generate the scan dataset");
    common(gen);

    std::optional<std::string> arch, data, mode, vae_ckpt, agent_ckpt, model_file, what, split;
    std::optional<double> beta;
    std::optional<int> seeds, episodes, trajectories;
    std::optional<std::int64_t> timesteps;
    std::vector<std::string> ckpts;
    std::optional<std::string> single_ckpt;
    std::optional<std::size_t> max_rows;
    std::optional<std::uint64_t> index;

    auto* tv = app.add_subcommand("train-vae", "Train VAE models, one per seed");
    common(tv);
    tv->add_option("--arch", arch, "shallow or deep");
    tv->add_option("--beta", beta, "KL weight");
    tv->add_option("--seeds", seeds, "Number of seeds (seed, seed+1, ...)");
    tv->add_option("--data", data, "Dataset file from gen-data");

    auto* ev = app.add_subcommand("eval-vae", "Test-set loss and latent diagnostics");
    common(ev);
    ev->add_option("--ckpt", ckpts, "VAE checkpoint (repeatable)");
    ev->add_option("--data", data, "Dataset file");

    auto* ta = app.add_subcommand("train-agent", "Train a PPO path-following agent");
    common(ta);
    ta->add_option("--mode", mode, "shallow_locked, shallow_unlocked, deep_locked, deep_unlocked or baseline");
    ta->add_option("--vae", vae_ckpt, "Pretrained VAE checkpoint (all modes but baseline)");
    ta->add_option("--timesteps", timesteps, "Total environment steps");
    ta->add_option("--model-file", model_file, "Ship model JSON");

    auto* ea = app.add_subcommand("eval-agent", "Evaluate an agent on test scenarios");
    common(ea);
    ea->add_option("--agent", agent_ckpt, "Agent checkpoint");
    ea->add_option("--episodes", episodes, "Number of test scenarios");
    ea->add_option("--trajectories", trajectories, "Write trajectories of the first n episodes");
    ea->add_option("--model-file", model_file, "Ship model JSON");

    auto* ex = app.add_subcommand("export", "Export scans, latents or a scenario");
    common(ex);
    ex->add_option("--what", what, "scans, latents or scenario");
    ex->add_option("--data", data, "Dataset file");
    ex->add_option("--ckpt", single_ckpt, "VAE checkpoint (latents)");
    ex->add_option("--split", split, "train, val or test (latents)");
    ex->add_option("--max-rows", max_rows, "Row limit for scans, 0 = all");
    ex->add_option("--index", index, "Scenario index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    run.command = sub->get_name();
    try {
        run.load();
        if (run.command == "gen-data") {
            fs::create_directories(run.out);
            gen_data(run);
        } else if (run.command == "train-vae") {
            run.set("arch", arch, std::string("shallow"));
            run.set("beta", beta, 1.0);
            run.set("seeds", seeds, 1);
            run.set("data", data, std::string());
            fs::create_directories(run.out);
            train_vae(run);
        } else if (run.command == "eval-vae") {
            if (!ckpts.empty()) {
                run.config["ckpt"] = ckpts;
            } else if (!run.config.contains("ckpt")) {
                throw ConfigError("missing required input '--ckpt'");
            }
            run.set("data", data, std::string());
            fs::create_directories(run.out);
            eval_vae(run);
        } else if (run.command == "train-agent") {
            run.set("mode", mode, std::string("shallow_locked"));
            if (vae_ckpt) {
                run.config["vae"] = *vae_ckpt;
            }
            if (timesteps) {
                run.config["timesteps"] = *timesteps;
            }
            if (model_file) {
                run.config["model_file"] = *model_file;
            }
            fs::create_directories(run.out);
            train_agent(run);
        } else if (run.command == "eval-agent") {
            run.set("agent", agent_ckpt, std::string());
            run.set("episodes", episodes, 100);
            if (trajectories) {
                run.config["trajectories"] = *trajectories;
            }
            if (model_file) {
                run.config["model_file"] = *model_file;
            }
            fs::create_directories(run.out);
            eval_agent(run);
        } else {
            run.set("what", what, std::string());
            if (data) {
                run.config["data"] = *data;
            }
            if (single_ckpt) {
                run.config["ckpt"] = *single_ckpt;
            }
            if (split) {
                run.config["split"] = *split;
            }
            if (max_rows) {
                run.config["max_rows"] = *max_rows;
            }
            if (index) {
                run.config["index"] = *index;
            }
            fs::create_directories(run.out);
            export_cmd(run);
        }
        run.write_manifest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
