// Obstacles, ray-cast range sensing, collision checks and scenario generation.
#pragma once

#include "asvlab/dynamics.hpp"
#include "asvlab/guidance.hpp"
#include "asvlab/rng.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include <json.hpp>

namespace asvlab::world {

using dynamics::Vec2;
using dynamics::VesselState;

struct Circle {
    Vec2 center = Vec2::Zero();
    double radius = 1.0;
};

/// Convex polygon, vertices with positive orientation in (x_n, y_n)
/// coordinates: cross(v1 - v0, v2 - v1) > 0.
struct Polygon {
    std::vector<Vec2> vertices;
};

struct Obstacle {
    std::variant<Circle, Polygon> shape;
    bool dynamic = false;
    double speed = 0.0;    // m/s, dynamic only
    double heading = 0.0;  // rad, dynamic only

    Vec2 centroid() const;
    double bounding_radius() const;

    static Obstacle circle(Vec2 center, double radius);
    /// Rectangle centred at `center`, long axis along `heading`.
    static Obstacle rectangle(Vec2 center, double length, double width, double heading);
};

/// Throws ConfigError if radius <= 0 or the polygon is not convex / has
/// fewer than three vertices / has the wrong orientation.
void validate(const Obstacle& obstacle);

struct SensorConfig {
    int n_rays = 180;
    double max_range = 150.0;   // x_max [m], measured from the hull surface
    double hull_radius = 5.0;   // rays start at the vessel origin
    double spacing() const;
};

/// Ring-ordered normalized ranges: index 0 at the bow, indices increasing
/// clockwise seen from above (positive heading direction). 0 = nothing in
/// range, 1 = contact with the hull:
///   x_k = 1 - clamp(d_k - hull_radius, 0, max_range) / max_range
using Scan = std::vector<double>;

std::optional<double> ray_circle(const Vec2& origin, const Vec2& direction, const Circle& circle);
std::optional<double> ray_polygon(const Vec2& origin, const Vec2& direction, const Polygon& polygon);
std::optional<double> ray_obstacle(const Vec2& origin, const Vec2& direction, const Obstacle& obstacle);

/// Raw distances from the vessel origin per ray, clamped to
/// max_range + hull_radius.
std::vector<double> ranges(const VesselState& state, const std::vector<Obstacle>& obstacles,
                           const SensorConfig& cfg = {});
Scan scan(const VesselState& state, const std::vector<Obstacle>& obstacles, const SensorConfig& cfg = {});

std::vector<Obstacle> step_obstacles(std::vector<Obstacle> obstacles, double dt);

/// Closed condition: touching at exactly hull_radius counts as collision.
bool collision_check(const VesselState& state, const std::vector<Obstacle>& obstacles, double hull_radius);
/// Distance from a point to the obstacle boundary, 0 when inside.
double distance_to(const Obstacle& obstacle, const Vec2& point);

struct Scenario {
    guidance::Path path;
    std::vector<Obstacle> obstacles;
    VesselState vessel_start;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
};

enum class ScenarioKind { train, test };

struct ScenarioConfig {
    int n_static = 11;
    int n_dynamic = 17;
    double static_radius_mean = 25.0;  // Poisson mean [m]
    double dynamic_size_mean = 10.0;   // Poisson mean [m]
    double min_dynamic_speed = 0.1;
    double max_dynamic_speed = 0.2;
    double static_lateral = 50.0;    // |offset| bound from the path [m]
    double dynamic_lateral = 100.0;
    double placement_begin = 0.1;    // fraction of L
    double placement_end = 0.9;
    double start_lateral = 10.0;     // start perturbation [m]
    double start_heading = 0.5;      // start heading perturbation [rad]
    double start_clearance = 20.0;   // extra clearance around the start [m]
    double hull_radius = 5.0;
    int max_attempts = 100;
    guidance::PathGenConfig path;
};

/// Deterministic in (seed, index, kind); train and test kinds draw from
/// independent streams. Throws ConfigError after max_attempts failed
/// placements.
Scenario generate_scenario(std::uint64_t seed, std::uint64_t index, ScenarioKind kind,
                           const ScenarioConfig& cfg = {});

nlohmann::json obstacle_to_json(const Obstacle& o);
Obstacle obstacle_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

nlohmann::json scenario_config_to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j, ScenarioConfig base = {});

nlohmann::json sensor_config_to_json(const SensorConfig& s);
/// Throws ConfigError for non-positive ray counts or ranges.
SensorConfig sensor_config_from_json(const nlohmann::json& j, SensorConfig base = {});

}  // namespace asvlab::world
