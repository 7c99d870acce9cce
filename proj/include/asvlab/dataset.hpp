// Range-scan dataset: pilot-driven and synthetic scans, rotation
// augmentation, train/val/test split and training-set noise.
//
// File format: "ASVSCAN\0" header (u32 version, u32 rows, u32 cols) followed
// by rows*cols little-endian float32 values, plus a JSON sidecar
// (<file>.json) holding metadata, per-row source categories and the split.
#pragma once

#include "asvlab/world.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace asvlab::dataset {

inline constexpr std::uint32_t kDatasetVersion = 1;

enum class Source : std::uint8_t { pilot, mixed, dynamic_only, static_only };
enum class Split : std::uint8_t { train, val, test };
enum class SceneKind { mixed, dynamic_only, static_only };

const char* source_name(Source s);

struct PilotConfig {
    double surge_action = 0.7;      // constant normalized surge command
    double heading_gain = 2.0;      // yaw action per rad of heading error
    double yaw_rate_gain = 3.0;     // yaw action per rad/s of yaw rate
    double avoidance_gain = 3.0;    // yaw action per unit of front-sector imbalance
    double control_period = 1.0;    // s between recorded scans
    int max_scans_per_scenario = 500;
};

struct DatasetConfig {
    int n_pilot = 10000;
    int n_synth_mixed = 5000;
    int n_synth_dynamic = 2500;
    int n_synth_static = 2500;
    int rotation_copies = 2;
    double noise_var = 0.007;
    bool clip_noise = true;
    double poisson_mean_static = 25.0;
    double poisson_mean_dynamic = 10.0;
    double test_fraction = 0.3;
    double val_fraction = 0.2;  // of the non-test rows
    std::uint64_t seed = 0;
    PilotConfig pilot;
    world::SensorConfig sensor;
    world::ScenarioConfig scenario;
};

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig base = {});

/// Row-major N x cols scans stored as float32, the on-disk precision, so a
/// save/load round trip is bit-exact.
struct ScanDataset {
    std::size_t cols = 180;
    std::vector<float> samples;
    std::vector<Source> source;
    std::vector<Split> split;
    nlohmann::json meta = nlohmann::json::object();

    std::size_t rows() const { return cols == 0 ? 0 : samples.size() / cols; }
    std::span<const float> row(std::size_t i) const { return {samples.data() + i * cols, cols}; }
    std::vector<std::size_t> indices(Split s) const;
};

/// Scans recorded while a heading-keeping pilot with reactive avoidance
/// drives generated scenarios, at most max_scans_per_scenario per scenario.
std::vector<float> generate_pilot_scans(std::uint64_t seed, int n, const DatasetConfig& cfg);

/// Obstacles of one synthetic scene around a vessel at the origin: centres
/// uniform over the square of side 2 max_range, none containing the origin.
std::vector<world::Obstacle> generate_synthetic_obstacles(Rng& rng, SceneKind kind, const DatasetConfig& cfg);
/// Scan of a frozen synthetic scene, vessel at the origin with heading 0.
world::Scan generate_synthetic_scene(Rng& rng, SceneKind kind, const DatasetConfig& cfg);
std::vector<float> generate_synthetic_scans(std::uint64_t seed, SceneKind kind, int n, const DatasetConfig& cfg);

/// Row i becomes rows (copies+1)i .. (copies+1)i+copies: the original, then
/// circular shifts by independent uniform integers in [1, cols-1].
std::vector<float> augment_rotations(std::span<const float> samples, std::size_t cols, int copies,
                                     std::uint64_t seed);

/// Random assignment: round(test_fraction N) test rows, then
/// round(val_fraction * rest) validation rows, the remainder training.
std::vector<Split> split_dataset(std::size_t rows, double test_fraction, double val_fraction, std::uint64_t seed);

struct NoiseStats {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // empirical, before clipping
};

/// Adds i.i.d. N(0, noise_var) to every element of the training rows, then
/// clips to [0, 1] when `clip` is set.
NoiseStats add_noise(ScanDataset& ds, double noise_var, bool clip, std::uint64_t seed);

ScanDataset build_dataset(const DatasetConfig& cfg);

void save_dataset(const ScanDataset& ds, const std::filesystem::path& path);
/// Throws LoadError on missing files, bad magic/version, truncation or an
/// inconsistent sidecar.
ScanDataset load_dataset(const std::filesystem::path& path);

/// Inspection export: header "row,source,split,x0..x{cols-1}".
void export_csv(const ScanDataset& ds, const std::filesystem::path& path, std::size_t max_rows = 0);

}  // namespace asvlab::dataset
