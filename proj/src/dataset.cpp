#include "asvlab/dataset.hpp"

#include "asvlab/error.hpp"
#include "asvlab/io.hpp"
#include "asvlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace asvlab::dataset {

namespace {

using dynamics::Vec2;
using dynamics::VesselState;

constexpr double kPi = std::numbers::pi;
const auto kMagic = io::make_magic("ASVSCAN\0");

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

double positive_poisson(Rng& rng, double mean) {
    std::int64_t k = 0;
    while (k == 0) {
        k = rng.poisson(mean);
    }
    return static_cast<double>(k);
}

void append_scan(std::vector<float>& out, const world::Scan& s) {
    for (double v : s) {
        out.push_back(static_cast<float>(v));
    }
}

/// Yaw command pushing away from whichever side of the bow sees more.
double avoidance_term(const world::Scan& s) {
    const std::size_t n = s.size();
    const std::size_t sector = n / 6;  // 60 degrees each side
    double starboard = 0.0;
    double port = 0.0;
    for (std::size_t k = 1; k <= sector; ++k) {
        starboard += s[k] * s[k];
        port += s[n - k] * s[n - k];
    }
    return (port - starboard) / static_cast<double>(sector);
}

std::vector<float> run_pilot_scenario(std::uint64_t seed, std::uint64_t index, const DatasetConfig& cfg,
                                      const dynamics::ShipModel& model) {
    const auto sc = world::generate_scenario(seed, index, world::ScenarioKind::train, cfg.scenario);
    const dynamics::SimConfig sim;
    const int substeps = std::max(1, static_cast<int>(std::lround(cfg.pilot.control_period / sim.dt)));
    const guidance::GuidanceConfig gcfg;

    std::vector<float> out;
    auto state = sc.vessel_start;
    auto obstacles = sc.obstacles;
    double hint = 0.0;
    for (int t = 0; t < cfg.pilot.max_scans_per_scenario; ++t) {
        const auto s = world::scan(state, obstacles, cfg.sensor);
        append_scan(out, s);
        hint = guidance::closest_param(sc.path, state.position(), hint);
        if (guidance::progress(sc.path, hint) > 0.99 ||
            world::collision_check(state, obstacles, model.hull_radius)) {
            break;
        }
        const double psi_err = guidance::heading_error(sc.path, state, gcfg, hint);
        const double yaw = cfg.pilot.heading_gain * psi_err - cfg.pilot.yaw_rate_gain * state.nu[2] +
                           cfg.pilot.avoidance_gain * avoidance_term(s);
        const auto f = model.from_action(cfg.pilot.surge_action, yaw);
        for (int k = 0; k < substeps; ++k) {
            state = dynamics::step(state, f, model, sim);
        }
        obstacles = world::step_obstacles(std::move(obstacles), substeps * sim.dt);
    }
    return out;
}


}  // namespace

const char* source_name(Source s) {
    switch (s) {
        case Source::pilot: return "pilot";
        case Source::mixed: return "mixed";
        case Source::dynamic_only: return "dynamic_only";
        case Source::static_only: return "static_only";
    }
    return "unknown";
}

nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
    return {
        {"n_pilot", c.n_pilot},
        {"n_synth_mixed", c.n_synth_mixed},
        {"n_synth_dynamic", c.n_synth_dynamic},
        {"n_synth_static", c.n_synth_static},
        {"rotation_copies", c.rotation_copies},
        {"noise_var", c.noise_var},
        {"clip_noise", c.clip_noise},
        {"poisson_mean_static", c.poisson_mean_static},
        {"poisson_mean_dynamic", c.poisson_mean_dynamic},
        {"test_fraction", c.test_fraction},
        {"val_fraction", c.val_fraction},
        {"seed", c.seed},
        {"pilot",
         {{"surge_action", c.pilot.surge_action},
          {"heading_gain", c.pilot.heading_gain},
          {"yaw_rate_gain", c.pilot.yaw_rate_gain},
          {"avoidance_gain", c.pilot.avoidance_gain},
          {"control_period", c.pilot.control_period},
          {"max_scans_per_scenario", c.pilot.max_scans_per_scenario}}},
        {"sensor", world::sensor_config_to_json(c.sensor)},
        {"scenario", world::scenario_config_to_json(c.scenario)},
    };
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig c) {
    c.n_pilot = j.value("n_pilot", c.n_pilot);
    c.n_synth_mixed = j.value("n_synth_mixed", c.n_synth_mixed);
    c.n_synth_dynamic = j.value("n_synth_dynamic", c.n_synth_dynamic);
    c.n_synth_static = j.value("n_synth_static", c.n_synth_static);
    c.rotation_copies = j.value("rotation_copies", c.rotation_copies);
    c.noise_var = j.value("noise_var", c.noise_var);
    c.clip_noise = j.value("clip_noise", c.clip_noise);
    c.poisson_mean_static = j.value("poisson_mean_static", c.poisson_mean_static);
    c.poisson_mean_dynamic = j.value("poisson_mean_dynamic", c.poisson_mean_dynamic);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("pilot")) {
        const auto& p = j.at("pilot");
        c.pilot.surge_action = p.value("surge_action", c.pilot.surge_action);
        c.pilot.heading_gain = p.value("heading_gain", c.pilot.heading_gain);
        c.pilot.yaw_rate_gain = p.value("yaw_rate_gain", c.pilot.yaw_rate_gain);
        c.pilot.avoidance_gain = p.value("avoidance_gain", c.pilot.avoidance_gain);
        c.pilot.control_period = p.value("control_period", c.pilot.control_period);
        c.pilot.max_scans_per_scenario = p.value("max_scans_per_scenario", c.pilot.max_scans_per_scenario);
    }
    if (j.contains("sensor")) {
        c.sensor = world::sensor_config_from_json(j.at("sensor"), c.sensor);
    }
    if (j.contains("scenario")) {
        c.scenario = world::scenario_config_from_json(j.at("scenario"), c.scenario);
    }
    if (c.n_pilot < 0 || c.n_synth_mixed < 0 || c.n_synth_dynamic < 0 || c.n_synth_static < 0 ||
        c.rotation_copies < 0) {
        throw ConfigError("dataset config: counts must be non-negative");
    }
    if (c.noise_var < 0.0) {
        throw ConfigError("dataset config: noise_var must be >= 0");
    }
    if (c.test_fraction < 0.0 || c.test_fraction > 1.0 || c.val_fraction < 0.0 || c.val_fraction > 1.0) {
        throw ConfigError("dataset config: split fractions must lie in [0, 1]");
    }
    if (c.pilot.max_scans_per_scenario < 1 || c.pilot.control_period <= 0.0) {
        throw ConfigError("dataset config: pilot needs max_scans_per_scenario >= 1 and control_period > 0");
    }
    return c;
}

std::vector<std::size_t> ScanDataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<float> generate_pilot_scans(std::uint64_t seed, int n, const DatasetConfig& cfg) {
    const auto model = dynamics::default_ship_model();
    const std::uint64_t scenario_seed = substream_seed(seed, streams::pilot);
    const std::size_t cols = static_cast<std::size_t>(cfg.sensor.n_rays);
    const std::size_t wanted = static_cast<std::size_t>(std::max(0, n)) * cols;
    std::vector<float> out;
    out.reserve(wanted);
    const std::size_t batch = std::max<std::size_t>(4, 2 * worker_count());
    std::uint64_t next = 0;
    while (out.size() < wanted) {
        std::vector<std::vector<float>> runs(batch);
        parallel_for(batch, [&](std::size_t i) { runs[i] = run_pilot_scenario(scenario_seed, next + i, cfg, model); });
        next += batch;
        for (const auto& r : runs) {
            const std::size_t take = std::min(r.size(), wanted - out.size());
            out.insert(out.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(take));
            if (out.size() == wanted) {
                break;
            }
        }
    }
    return out;
}

std::vector<world::Obstacle> generate_synthetic_obstacles(Rng& rng, SceneKind kind, const DatasetConfig& cfg) {
    int n_static = 0;
    int n_dynamic = 0;
    switch (kind) {
        case SceneKind::mixed: n_static = 3; n_dynamic = 2; break;
        case SceneKind::dynamic_only: n_dynamic = 5; break;
        case SceneKind::static_only: n_static = 5; break;
    }
    const double half = cfg.sensor.max_range;
    const VesselState vessel;
    std::vector<world::Obstacle> obstacles;
    auto place = [&](auto make) {
        for (;;) {
            world::Obstacle o = make(Vec2(rng.uniform(-half, half), rng.uniform(-half, half)));
            if (world::distance_to(o, vessel.position()) > 0.0) {
                obstacles.push_back(std::move(o));
                return;
            }
        }
    };
    for (int i = 0; i < n_static; ++i) {
        place([&](Vec2 c) { return world::Obstacle::circle(c, positive_poisson(rng, cfg.poisson_mean_static)); });
    }
    for (int i = 0; i < n_dynamic; ++i) {
        place([&](Vec2 c) {
            const double size = positive_poisson(rng, cfg.poisson_mean_dynamic);
            auto o = world::Obstacle::rectangle(c, 2.0 * size, size, rng.uniform(0.0, 2.0 * kPi));
            o.dynamic = true;
            o.speed = rng.uniform(cfg.scenario.min_dynamic_speed, cfg.scenario.max_dynamic_speed);
            return o;
        });
    }
    return obstacles;
}

world::Scan generate_synthetic_scene(Rng& rng, SceneKind kind, const DatasetConfig& cfg) {
    return world::scan(VesselState{}, generate_synthetic_obstacles(rng, kind, cfg), cfg.sensor);
}

std::vector<float> generate_synthetic_scans(std::uint64_t seed, SceneKind kind, int n, const DatasetConfig& cfg) {
    const std::uint64_t stream = kind == SceneKind::mixed          ? streams::synth_mixed
                                 : kind == SceneKind::dynamic_only ? streams::synth_dynamic
                                                                   : streams::synth_static;
    const std::size_t cols = static_cast<std::size_t>(cfg.sensor.n_rays);
    std::vector<float> out(static_cast<std::size_t>(std::max(0, n)) * cols);
    parallel_for(static_cast<std::size_t>(std::max(0, n)), [&](std::size_t i) {
        Rng rng(seed, stream, i);
        const auto s = generate_synthetic_scene(rng, kind, cfg);
        std::transform(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(i * cols),
                       [](double v) { return static_cast<float>(v); });
    });
    return out;
}

std::vector<float> augment_rotations(std::span<const float> samples, std::size_t cols, int copies,
                                     std::uint64_t seed) {
    if (copies < 0) {
        throw ConfigError("augment_rotations: copies must be >= 0");
    }
    if (cols == 0 || samples.size() % cols != 0) {
        throw ShapeError("augment_rotations: sample buffer is not a whole number of rows");
    }
    const std::size_t rows = samples.size() / cols;
    const std::size_t per = static_cast<std::size_t>(copies) + 1;
    std::vector<float> out(rows * per * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        Rng rng(seed, streams::rotation, i);
        const float* src = samples.data() + i * cols;
        float* dst = out.data() + i * per * cols;
        std::copy(src, src + cols, dst);
        for (std::size_t c = 1; c < per; ++c) {
            const auto shift = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(cols) - 1));
            float* row = dst + c * cols;
            for (std::size_t k = 0; k < cols; ++k) {
                row[(k + shift) % cols] = src[k];
            }
        }
    }
    return out;
}

std::vector<Split> split_dataset(std::size_t rows, double test_fraction, double val_fraction, std::uint64_t seed) {
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows)));
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rows - n_test)));
    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        order[i] = i;
    }
    Rng rng(seed, streams::split);
    rng.shuffle(order);
    std::vector<Split> out(rows, Split::train);
    for (std::size_t k = 0; k < n_test; ++k) {
        out[order[k]] = Split::test;
    }
    for (std::size_t k = n_test; k < n_test + n_val; ++k) {
        out[order[k]] = Split::val;
    }
    return out;
}

NoiseStats add_noise(ScanDataset& ds, double noise_var, bool clip, std::uint64_t seed) {
    if (noise_var < 0.0) {
        throw ConfigError("add_noise: noise_var must be >= 0");
    }
    NoiseStats stats;
    if (noise_var == 0.0) {
        return stats;
    }
    const double sd = std::sqrt(noise_var);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        if (ds.split[i] != Split::train) {
            continue;
        }
        Rng rng(seed, streams::noise, i);
        float* row = ds.samples.data() + i * ds.cols;
        for (std::size_t k = 0; k < ds.cols; ++k) {
            const double e = rng.normal(0.0, sd);
            sum += e;
            sum_sq += e * e;
            ++stats.count;
            double v = static_cast<double>(row[k]) + e;
            if (clip) {
                v = std::clamp(v, 0.0, 1.0);
            }
            row[k] = static_cast<float>(v);
        }
    }
    if (stats.count > 1) {
        const double n = static_cast<double>(stats.count);
        stats.mean = sum / n;
        stats.stddev = std::sqrt(std::max(0.0, (sum_sq - n * stats.mean * stats.mean) / (n - 1.0)));
    }
    return stats;
}

ScanDataset build_dataset(const DatasetConfig& cfg) {
    ScanDataset ds;
    ds.cols = static_cast<std::size_t>(cfg.sensor.n_rays);

    struct Part {
        Source source;
        std::vector<float> rows;
    };
    std::vector<Part> parts;
    parts.push_back({Source::pilot, generate_pilot_scans(cfg.seed, cfg.n_pilot, cfg)});
    parts.push_back({Source::mixed, generate_synthetic_scans(cfg.seed, SceneKind::mixed, cfg.n_synth_mixed, cfg)});
    parts.push_back({Source::dynamic_only,
                     generate_synthetic_scans(cfg.seed, SceneKind::dynamic_only, cfg.n_synth_dynamic, cfg)});
    parts.push_back({Source::static_only,
                     generate_synthetic_scans(cfg.seed, SceneKind::static_only, cfg.n_synth_static, cfg)});

    std::vector<float> base;
    std::vector<Source> base_source;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& p : parts) {
        base.insert(base.end(), p.rows.begin(), p.rows.end());
        const std::size_t n = p.rows.size() / ds.cols;
        base_source.insert(base_source.end(), n, p.source);
        counts[source_name(p.source)] = n * static_cast<std::size_t>(cfg.rotation_copies + 1);
    }
    std::size_t zero_rows = 0;
    for (std::size_t i = 0; i < parts[0].rows.size() / ds.cols; ++i) {
        const float* r = parts[0].rows.data() + i * ds.cols;
        zero_rows += std::all_of(r, r + ds.cols, [](float v) { return v == 0.0f; }) ? 1 : 0;
    }

    ds.samples = augment_rotations(base, ds.cols, cfg.rotation_copies, cfg.seed);
    for (Source s : base_source) {
        ds.source.insert(ds.source.end(), static_cast<std::size_t>(cfg.rotation_copies) + 1, s);
    }
    ds.split = split_dataset(ds.rows(), cfg.test_fraction, cfg.val_fraction, cfg.seed);
    const auto noise = add_noise(ds, cfg.noise_var, cfg.clip_noise, cfg.seed);

    ds.meta = {
        {"seed", cfg.seed},
        {"config", dataset_config_to_json(cfg)},
        {"source_counts", counts},
        {"pilot_zero_scan_fraction",
         parts[0].rows.empty() ? 0.0 : static_cast<double>(zero_rows) / static_cast<double>(parts[0].rows.size() / ds.cols)},
        {"split_counts",
         {{"train", ds.indices(Split::train).size()},
          {"val", ds.indices(Split::val).size()},
          {"test", ds.indices(Split::test).size()}}},
        {"noise", {{"count", noise.count}, {"mean", noise.mean}, {"stddev_pre_clip", noise.stddev}}},
    };
    return ds;
}

void save_dataset(const ScanDataset& ds, const std::filesystem::path& path) {
    if (ds.source.size() != ds.rows() || ds.split.size() != ds.rows()) {
        throw ShapeError("save_dataset: per-row metadata does not match the sample count");
    }
    io::BinaryWriter w;
    w.header({kMagic, kDatasetVersion, static_cast<std::uint32_t>(ds.rows()), static_cast<std::uint32_t>(ds.cols)});
    for (float v : ds.samples) {
        w.f32(v);
    }
    w.save(path);

    nlohmann::json sources = nlohmann::json::array();
    for (Source s : ds.source) {
        sources.push_back(static_cast<int>(s));
    }
    nlohmann::json splits = {{"train", ds.indices(Split::train)},
                             {"val", ds.indices(Split::val)},
                             {"test", ds.indices(Split::test)}};
    io::write_json(sidecar_path(path), {{"format", "asvlab-scan-dataset"},
                                        {"version", kDatasetVersion},
                                        {"rows", ds.rows()},
                                        {"cols", ds.cols},
                                        {"source_codes", {"pilot", "mixed", "dynamic_only", "static_only"}},
                                        {"meta", ds.meta},
                                        {"sources", sources},
                                        {"split", splits}});
}

ScanDataset load_dataset(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    const auto h = r.header(kMagic, kDatasetVersion);
    const std::size_t expected = static_cast<std::size_t>(h.rows) * h.cols * sizeof(float);
    if (r.remaining() != expected) {
        throw LoadError(path.string() + ": expected " + std::to_string(expected) + " data bytes for " +
                        std::to_string(h.rows) + "x" + std::to_string(h.cols) + ", found " +
                        std::to_string(r.remaining()));
    }
    ScanDataset ds;
    ds.cols = h.cols;
    ds.samples.resize(static_cast<std::size_t>(h.rows) * h.cols);
    for (float& v : ds.samples) {
        v = r.f32();
    }

    const auto side = io::read_json(sidecar_path(path));
    try {
        if (side.at("rows").get<std::size_t>() != h.rows || side.at("cols").get<std::size_t>() != h.cols) {
            throw LoadError(sidecar_path(path).string() + ": shape disagrees with " + path.string());
        }
        ds.meta = side.value("meta", nlohmann::json::object());
        const auto& sources = side.at("sources");
        if (sources.size() != h.rows) {
            throw LoadError(sidecar_path(path).string() + ": 'sources' has " + std::to_string(sources.size()) +
                            " entries for " + std::to_string(h.rows) + " rows");
        }
        for (const auto& s : sources) {
            const int code = s.get<int>();
            if (code < 0 || code > 3) {
                throw LoadError(sidecar_path(path).string() + ": unknown source code " + std::to_string(code));
            }
            ds.source.push_back(static_cast<Source>(code));
        }
        std::vector<int> seen(h.rows, 0);
        ds.split.assign(h.rows, Split::train);
        const std::pair<const char*, Split> names[] = {
            {"train", Split::train}, {"val", Split::val}, {"test", Split::test}};
        for (const auto& [name, s] : names) {
            for (const auto& idx : side.at("split").at(name)) {
                const auto i = idx.get<std::size_t>();
                if (i >= h.rows) {
                    throw LoadError(sidecar_path(path).string() + ": split index " + std::to_string(i) + " out of range");
                }
                ++seen[i];
                ds.split[i] = s;
            }
        }
        if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
            throw LoadError(sidecar_path(path).string() + ": split does not cover every row exactly once");
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(sidecar_path(path).string() + ": " + e.what());
    }
    return ds;
}

void export_csv(const ScanDataset& ds, const std::filesystem::path& path, std::size_t max_rows) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "row,source,split";
    for (std::size_t k = 0; k < ds.cols; ++k) {
        out << ",x" << k;
    }
    out << '\n';
    const char* split_names[] = {"train", "val", "test"};
    const std::size_t n = max_rows == 0 ? ds.rows() : std::min(max_rows, ds.rows());
    out.precision(9);
    for (std::size_t i = 0; i < n; ++i) {
        out << i << ',' << source_name(ds.source[i]) << ',' << split_names[static_cast<int>(ds.split[i])];
        for (float v : ds.row(i)) {
            out << ',' << v;
        }
        out << '\n';
    }
}

}  // namespace asvlab::dataset
