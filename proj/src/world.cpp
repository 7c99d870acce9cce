#include "asvlab/world.hpp"

#include "asvlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace asvlab::world {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (a + t * ab - p).norm();
}

bool inside_polygon(const Polygon& poly, const Vec2& p) {
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& a = v[i];
        const Vec2& b = v[(i + 1) % v.size()];
        if (cross(b - a, p - a) < 0.0) {
            return false;
        }
    }
    return true;
}

}  // namespace

Vec2 Obstacle::centroid() const {
    return std::visit(overloaded{
                          [](const Circle& c) -> Vec2 { return c.center; },
                          [](const Polygon& p) -> Vec2 {
                              Vec2 sum = Vec2::Zero();
                              for (const auto& v : p.vertices) {
                                  sum += v;
                              }
                              return sum / static_cast<double>(p.vertices.size());
                          },
                      },
                      shape);
}

double Obstacle::bounding_radius() const {
    return std::visit(overloaded{
                          [](const Circle& c) { return c.radius; },
                          [this](const Polygon& p) {
                              const Vec2 c = centroid();
                              double r = 0.0;
                              for (const auto& v : p.vertices) {
                                  r = std::max(r, (v - c).norm());
                              }
                              return r;
                          },
                      },
                      shape);
}

Obstacle Obstacle::circle(Vec2 center, double radius) {
    Obstacle o;
    o.shape = Circle{center, radius};
    return o;
}

Obstacle Obstacle::rectangle(Vec2 center, double length, double width, double heading) {
    const Vec2 along(std::cos(heading), std::sin(heading));
    const Vec2 across(-along.y(), along.x());
    const double hl = 0.5 * length;
    const double hw = 0.5 * width;
    Polygon p;
    p.vertices = {center - hl * along - hw * across, center + hl * along - hw * across,
                  center + hl * along + hw * across, center - hl * along + hw * across};
    Obstacle o;
    o.shape = std::move(p);
    o.heading = heading;
    return o;
}

void validate(const Obstacle& obstacle) {
    std::visit(overloaded{
                   [](const Circle& c) {
                       if (!(c.radius > 0.0) || !c.center.allFinite()) {
                           throw ConfigError("circle obstacle needs a finite center and positive radius");
                       }
                   },
                   [](const Polygon& p) {
                       const auto& v = p.vertices;
                       if (v.size() < 3) {
                           throw ConfigError("polygon obstacle needs at least three vertices");
                       }
                       for (std::size_t i = 0; i < v.size(); ++i) {
                           const Vec2& a = v[i];
                           const Vec2& b = v[(i + 1) % v.size()];
                           const Vec2& c = v[(i + 2) % v.size()];
                           if (!(cross(b - a, c - b) > 0.0)) {
                               throw ConfigError("polygon obstacle must be convex with positive orientation");
                           }
                       }
                   },
               },
               obstacle.shape);
}

double SensorConfig::spacing() const { return 2.0 * kPi / static_cast<double>(n_rays); }

std::optional<double> ray_circle(const Vec2& origin, const Vec2& direction, const Circle& circle) {
    const Vec2 m = origin - circle.center;
    const double b = m.dot(direction);
    const double c = m.squaredNorm() - circle.radius * circle.radius;
    const double disc = b * b - c;
    if (disc < 0.0) {
        return std::nullopt;
    }
    const double root = std::sqrt(disc);
    const double t1 = -b - root;
    if (t1 >= 0.0) {
        return t1;
    }
    const double t2 = -b + root;
    if (t2 >= 0.0) {
        return t2;
    }
    return std::nullopt;
}

std::optional<double> ray_polygon(const Vec2& origin, const Vec2& direction, const Polygon& polygon) {
    std::optional<double> best;
    const auto& v = polygon.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& a = v[i];
        const Vec2 e = v[(i + 1) % v.size()] - a;
        const double denom = cross(direction, e);
        if (std::abs(denom) < 1e-15) {
            continue;  // parallel
        }
        const Vec2 ao = a - origin;
        const double t = cross(ao, e) / denom;
        const double u = cross(ao, direction) / denom;
        if (t >= 0.0 && u >= 0.0 && u <= 1.0 && (!best || t < *best)) {
            best = t;
        }
    }
    return best;
}

std::optional<double> ray_obstacle(const Vec2& origin, const Vec2& direction, const Obstacle& obstacle) {
    return std::visit(overloaded{
                          [&](const Circle& c) { return ray_circle(origin, direction, c); },
                          [&](const Polygon& p) { return ray_polygon(origin, direction, p); },
                      },
                      obstacle.shape);
}

std::vector<double> ranges(const VesselState& state, const std::vector<Obstacle>& obstacles,
                           const SensorConfig& cfg) {
    const Vec2 origin = state.position();
    const double reach = cfg.max_range + cfg.hull_radius;
    std::vector<const Obstacle*> visible;
    for (const auto& o : obstacles) {
        if ((o.centroid() - origin).norm() - o.bounding_radius() <= reach) {
            visible.push_back(&o);
        }
    }
    std::vector<double> out(static_cast<std::size_t>(cfg.n_rays), reach);
    const double spacing = cfg.spacing();
    for (int k = 0; k < cfg.n_rays; ++k) {
        const double angle = state.heading() + spacing * k;
        const Vec2 dir(std::cos(angle), std::sin(angle));
        double& d = out[static_cast<std::size_t>(k)];
        for (const Obstacle* o : visible) {
            if (auto t = ray_obstacle(origin, dir, *o); t && *t < d) {
                d = *t;
            }
        }
    }
    return out;
}

Scan scan(const VesselState& state, const std::vector<Obstacle>& obstacles, const SensorConfig& cfg) {
    Scan out = ranges(state, obstacles, cfg);
    for (double& x : out) {
        x = 1.0 - std::clamp(x - cfg.hull_radius, 0.0, cfg.max_range) / cfg.max_range;
    }
    return out;
}

std::vector<Obstacle> step_obstacles(std::vector<Obstacle> obstacles, double dt) {
    for (auto& o : obstacles) {
        if (!o.dynamic) {
            continue;
        }
        const Vec2 delta = o.speed * dt * Vec2(std::cos(o.heading), std::sin(o.heading));
        std::visit(overloaded{
                       [&](Circle& c) { c.center += delta; },
                       [&](Polygon& p) {
                           for (auto& v : p.vertices) {
                               v += delta;
                           }
                       },
                   },
                   o.shape);
    }
    return obstacles;
}

double distance_to(const Obstacle& obstacle, const Vec2& point) {
    return std::visit(overloaded{
                          [&](const Circle& c) { return std::max(0.0, (point - c.center).norm() - c.radius); },
                          [&](const Polygon& p) {
                              if (inside_polygon(p, point)) {
                                  return 0.0;
                              }
                              double d = std::numeric_limits<double>::infinity();
                              const auto& v = p.vertices;
                              for (std::size_t i = 0; i < v.size(); ++i) {
                                  d = std::min(d, segment_distance(point, v[i], v[(i + 1) % v.size()]));
                              }
                              return d;
                          },
                      },
                      obstacle.shape);
}

bool collision_check(const VesselState& state, const std::vector<Obstacle>& obstacles, double hull_radius) {
    const Vec2 p = state.position();
    return std::any_of(obstacles.begin(), obstacles.end(),
                       [&](const Obstacle& o) { return distance_to(o, p) <= hull_radius; });
}

Scenario generate_scenario(std::uint64_t seed, std::uint64_t index, ScenarioKind kind,
                           const ScenarioConfig& cfg) {
    if (cfg.n_static < 0 || cfg.n_dynamic < 0 || cfg.max_dynamic_speed < cfg.min_dynamic_speed) {
        throw ConfigError("scenario config is inconsistent");
    }
    const std::uint64_t stream = kind == ScenarioKind::train ? streams::train_scenario : streams::test_scenario;
    Rng rng(seed, stream, index);

    Scenario sc;
    sc.seed = seed;
    sc.index = index;
    sc.path = guidance::generate_path(rng, cfg.path);
    const double length = sc.path.length();

    const double lateral = rng.uniform(-cfg.start_lateral, cfg.start_lateral);
    const double gamma0 = sc.path.angle(0.0);
    const Vec2 normal(-std::sin(gamma0), std::cos(gamma0));
    sc.vessel_start.eta.head<2>() = sc.path.point(0.0) + lateral * normal;
    sc.vessel_start.eta[2] = dynamics::wrap_angle(gamma0 + rng.uniform(-cfg.start_heading, cfg.start_heading));
    sc.vessel_start.nu.setZero();

    auto positive_poisson = [&](double mean) {
        std::int64_t k = 0;
        while (k == 0) {
            k = rng.poisson(mean);
        }
        return static_cast<double>(k);
    };

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        sc.obstacles.clear();
        for (int i = 0; i < cfg.n_static; ++i) {
            const double s = rng.uniform(cfg.placement_begin, cfg.placement_end) * length;
            const double off = rng.uniform(-cfg.static_lateral, cfg.static_lateral);
            const double g = sc.path.angle(s);
            const Vec2 c = sc.path.point(s) + off * Vec2(-std::sin(g), std::cos(g));
            sc.obstacles.push_back(Obstacle::circle(c, positive_poisson(cfg.static_radius_mean)));
        }
        for (int i = 0; i < cfg.n_dynamic; ++i) {
            const double s = rng.uniform(cfg.placement_begin, cfg.placement_end) * length;
            const double off = rng.uniform(-cfg.dynamic_lateral, cfg.dynamic_lateral);
            const double g = sc.path.angle(s);
            const Vec2 c = sc.path.point(s) + off * Vec2(-std::sin(g), std::cos(g));
            const double size = positive_poisson(cfg.dynamic_size_mean);
            const double heading = rng.uniform(-kPi, kPi);
            Obstacle o = Obstacle::rectangle(c, 2.0 * size, size, heading);
            o.dynamic = true;
            o.speed = rng.uniform(cfg.min_dynamic_speed, cfg.max_dynamic_speed);
            sc.obstacles.push_back(std::move(o));
        }
        if (!collision_check(sc.vessel_start, sc.obstacles, cfg.hull_radius + cfg.start_clearance)) {
            return sc;
        }
    }
    throw ConfigError("scenario generation: vessel start collides after " + std::to_string(cfg.max_attempts) +
                      " placement attempts");
}

namespace {

nlohmann::json vec_json(const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); }
Vec2 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

nlohmann::json obstacle_to_json(const Obstacle& o) {
    nlohmann::json j;
    std::visit(overloaded{
                   [&](const Circle& c) {
                       j["type"] = "circle";
                       j["center"] = vec_json(c.center);
                       j["radius"] = c.radius;
                   },
                   [&](const Polygon& p) {
                       j["type"] = "polygon";
                       j["vertices"] = nlohmann::json::array();
                       for (const auto& v : p.vertices) {
                           j["vertices"].push_back(vec_json(v));
                       }
                   },
               },
               o.shape);
    j["dynamic"] = o.dynamic;
    j["speed"] = o.speed;
    j["heading"] = o.heading;
    return j;
}

Obstacle obstacle_from_json(const nlohmann::json& j) {
    Obstacle o;
    const auto type = j.at("type").get<std::string>();
    if (type == "circle") {
        o.shape = Circle{vec_from(j.at("center")), j.at("radius").get<double>()};
    } else if (type == "polygon") {
        Polygon p;
        for (const auto& v : j.at("vertices")) {
            p.vertices.push_back(vec_from(v));
        }
        o.shape = std::move(p);
    } else {
        throw LoadError("unknown obstacle type '" + type + "'");
    }
    o.dynamic = j.value("dynamic", false);
    o.speed = j.value("speed", 0.0);
    o.heading = j.value("heading", 0.0);
    validate(o);
    return o;
}

nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json j;
    j["seed"] = s.seed;
    j["index"] = s.index;
    j["waypoints"] = nlohmann::json::array();
    for (const auto& w : s.path.waypoints()) {
        j["waypoints"].push_back(vec_json(w));
    }
    const auto& pc = s.path.config();
    j["path_config"] = {{"fillet_radius", pc.fillet_radius},
                        {"table_spacing", pc.table_spacing},
                        {"hint_window", pc.hint_window}};
    j["obstacles"] = nlohmann::json::array();
    for (const auto& o : s.obstacles) {
        j["obstacles"].push_back(obstacle_to_json(o));
    }
    const auto& st = s.vessel_start;
    j["vessel_start"] = {{"eta", {st.eta[0], st.eta[1], st.eta[2]}}, {"nu", {st.nu[0], st.nu[1], st.nu[2]}}};
    return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.index = j.value("index", std::uint64_t{0});
    std::vector<Vec2> wps;
    for (const auto& w : j.at("waypoints")) {
        wps.push_back(vec_from(w));
    }
    guidance::PathConfig pc;
    if (j.contains("path_config")) {
        const auto& c = j.at("path_config");
        pc.fillet_radius = c.value("fillet_radius", pc.fillet_radius);
        pc.table_spacing = c.value("table_spacing", pc.table_spacing);
        pc.hint_window = c.value("hint_window", pc.hint_window);
    }
    s.path = guidance::build_path(wps, pc);
    for (const auto& o : j.at("obstacles")) {
        s.obstacles.push_back(obstacle_from_json(o));
    }
    const auto& st = j.at("vessel_start");
    for (int i = 0; i < 3; ++i) {
        s.vessel_start.eta[i] = st.at("eta").at(static_cast<std::size_t>(i)).get<double>();
        s.vessel_start.nu[i] = st.at("nu").at(static_cast<std::size_t>(i)).get<double>();
    }
    return s;
}

nlohmann::json scenario_config_to_json(const ScenarioConfig& c) {
    return {
        {"n_static", c.n_static},
        {"n_dynamic", c.n_dynamic},
        {"static_radius_mean", c.static_radius_mean},
        {"dynamic_size_mean", c.dynamic_size_mean},
        {"min_dynamic_speed", c.min_dynamic_speed},
        {"max_dynamic_speed", c.max_dynamic_speed},
        {"static_lateral", c.static_lateral},
        {"dynamic_lateral", c.dynamic_lateral},
        {"placement_begin", c.placement_begin},
        {"placement_end", c.placement_end},
        {"start_lateral", c.start_lateral},
        {"start_heading", c.start_heading},
        {"start_clearance", c.start_clearance},
        {"hull_radius", c.hull_radius},
        {"max_attempts", c.max_attempts},
        {"path",
         {{"min_waypoints", c.path.min_waypoints},
          {"max_waypoints", c.path.max_waypoints},
          {"min_segment", c.path.min_segment},
          {"max_segment", c.path.max_segment},
          {"max_turn", c.path.max_turn},
          {"fillet_radius", c.path.path.fillet_radius},
          {"table_spacing", c.path.path.table_spacing},
          {"hint_window", c.path.path.hint_window}}},
    };
}

ScenarioConfig scenario_config_from_json(const nlohmann::json& j, ScenarioConfig c) {
    c.n_static = j.value("n_static", c.n_static);
    c.n_dynamic = j.value("n_dynamic", c.n_dynamic);
    c.static_radius_mean = j.value("static_radius_mean", c.static_radius_mean);
    c.dynamic_size_mean = j.value("dynamic_size_mean", c.dynamic_size_mean);
    c.min_dynamic_speed = j.value("min_dynamic_speed", c.min_dynamic_speed);
    c.max_dynamic_speed = j.value("max_dynamic_speed", c.max_dynamic_speed);
    c.static_lateral = j.value("static_lateral", c.static_lateral);
    c.dynamic_lateral = j.value("dynamic_lateral", c.dynamic_lateral);
    c.placement_begin = j.value("placement_begin", c.placement_begin);
    c.placement_end = j.value("placement_end", c.placement_end);
    c.start_lateral = j.value("start_lateral", c.start_lateral);
    c.start_heading = j.value("start_heading", c.start_heading);
    c.start_clearance = j.value("start_clearance", c.start_clearance);
    c.hull_radius = j.value("hull_radius", c.hull_radius);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    if (j.contains("path")) {
        const auto& p = j.at("path");
        c.path.min_waypoints = p.value("min_waypoints", c.path.min_waypoints);
        c.path.max_waypoints = p.value("max_waypoints", c.path.max_waypoints);
        c.path.min_segment = p.value("min_segment", c.path.min_segment);
        c.path.max_segment = p.value("max_segment", c.path.max_segment);
        c.path.max_turn = p.value("max_turn", c.path.max_turn);
        c.path.path.fillet_radius = p.value("fillet_radius", c.path.path.fillet_radius);
        c.path.path.table_spacing = p.value("table_spacing", c.path.path.table_spacing);
        c.path.path.hint_window = p.value("hint_window", c.path.path.hint_window);
    }
    return c;
}

nlohmann::json sensor_config_to_json(const SensorConfig& s) {
    return {{"n_rays", s.n_rays}, {"max_range", s.max_range}, {"hull_radius", s.hull_radius}};
}

SensorConfig sensor_config_from_json(const nlohmann::json& j, SensorConfig s) {
    s.n_rays = j.value("n_rays", s.n_rays);
    s.max_range = j.value("max_range", s.max_range);
    s.hull_radius = j.value("hull_radius", s.hull_radius);
    if (s.n_rays < 1 || s.max_range <= 0.0 || s.hull_radius < 0.0) {
        throw ConfigError("sensor config: n_rays >= 1, max_range > 0 and hull_radius >= 0 required");
    }
    return s;
}

}  // namespace asvlab::world
