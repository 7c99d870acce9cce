// Path representation and line-of-sight guidance features.
#pragma once

#include "asvlab/dynamics.hpp"
#include "asvlab/rng.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace asvlab::guidance {

using dynamics::Vec2;
using dynamics::VesselState;

struct PathConfig {
    double fillet_radius = 20.0;  // corner smoothing radius [m]
    double table_spacing = 1.0;   // dense lookup spacing [m]
    double hint_window = 200.0;   // forward search window for hinted lookups [m]
};

struct GuidanceConfig {
    double lookahead = 50.0;   // Delta_LA [m]
    double end_radius = 5.0;   // goal tolerance [m]
};

struct PathGenConfig {
    int min_waypoints = 2;  // intermediate waypoints, inclusive range
    int max_waypoints = 6;
    double min_segment = 50.0;
    double max_segment = 100.0;
    double max_turn = 1.0;  // rad, per waypoint
    PathConfig path;
};

/// Arc-length parameterized planar curve: straight legs joined by circular
/// fillets. Immutable once built.
class Path {
public:
    struct Sample {
        double s;
        Vec2 point;
        double angle;  // path angle, unwrapped along the table
    };

    const std::vector<Vec2>& waypoints() const { return waypoints_; }
    double length() const { return length_; }
    const std::vector<Sample>& table() const { return table_; }
    const PathConfig& config() const { return config_; }

    /// p_d(s); s is clamped to [0, L].
    Vec2 point(double s) const;
    /// gamma_p(s) wrapped to (-pi, pi]; s clamped to [0, L].
    double angle(double s) const;

private:
    friend Path build_path(const std::vector<Vec2>&, const PathConfig&);

    struct Piece {
        bool arc = false;
        double s0 = 0.0;
        double length = 0.0;
        Vec2 start;       // line start
        Vec2 direction;   // line unit direction
        Vec2 center;      // arc
        double radius = 0.0;
        double phi0 = 0.0;  // polar angle of the arc start about center
        double turn = 1.0;  // +1: heading increases along the arc
    };
    const Piece& piece_at(double s) const;

    std::vector<Vec2> waypoints_;
    std::vector<Piece> pieces_;
    std::vector<Sample> table_;
    double length_ = 0.0;
    PathConfig config_;
};

/// Throws ConfigError on fewer than two waypoints or coincident neighbours.
Path build_path(const std::vector<Vec2>& waypoints, const PathConfig& cfg = {});

/// Parameter of the closest path point. Without a hint the search is global;
/// with a hint it covers [hint, hint + window] and never returns less than
/// the hint.
double closest_param(const Path& path, const Vec2& position, std::optional<double> hint = std::nullopt);

double cross_track_error(const Path& path, const Vec2& position);
/// Cross-track error for an already computed closest parameter.
double cross_track_error_at(const Path& path, const Vec2& position, double s_closest);

double heading_error(const Path& path, const VesselState& state, const GuidanceConfig& cfg,
                     std::optional<double> s_closest = std::nullopt);
double lookahead_heading_error(const Path& path, const VesselState& state, const GuidanceConfig& cfg,
                               std::optional<double> s_closest = std::nullopt);

double progress(const Path& path, double s_closest);

struct NavFeatures {
    double u = 0.0;
    double v = 0.0;
    double r = 0.0;
    double cross_track = 0.0;
    double heading_error = 0.0;
    double lookahead_heading_error = 0.0;
};

NavFeatures nav_features(const Path& path, const VesselState& state, const GuidanceConfig& cfg,
                         double s_closest);

Path generate_path(Rng& rng, const PathGenConfig& cfg = {});

/// CSV with header "x_n,y_n", one waypoint per row.
void save_waypoints_csv(const Path& path, const std::filesystem::path& file);
std::vector<Vec2> load_waypoints_csv(const std::filesystem::path& file);

}  // namespace asvlab::guidance
