#include "asvlab/guidance.hpp"

#include "asvlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace asvlab::guidance {

using dynamics::wrap_angle;

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

const Path::Piece& Path::piece_at(double s) const {
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                               [](double value, const Piece& p) { return value < p.s0; });
    if (it == pieces_.begin()) {
        return pieces_.front();
    }
    return *std::prev(it);
}

Vec2 Path::point(double s) const {
    s = std::clamp(s, 0.0, length_);
    const Piece& p = piece_at(s);
    const double local = std::clamp(s - p.s0, 0.0, p.length);
    if (!p.arc) {
        return p.start + local * p.direction;
    }
    const double phi = p.phi0 + p.turn * local / p.radius;
    return p.center + p.radius * Vec2(std::cos(phi), std::sin(phi));
}

double Path::angle(double s) const {
    s = std::clamp(s, 0.0, length_);
    const Piece& p = piece_at(s);
    if (!p.arc) {
        return std::atan2(p.direction.y(), p.direction.x());
    }
    const double local = std::clamp(s - p.s0, 0.0, p.length);
    const double phi = p.phi0 + p.turn * local / p.radius;
    return wrap_angle(phi + p.turn * 0.5 * kPi);
}

Path build_path(const std::vector<Vec2>& waypoints, const PathConfig& cfg) {
    if (waypoints.size() < 2) {
        throw ConfigError("path needs at least two waypoints");
    }
    if (!(cfg.table_spacing > 0.0) || cfg.fillet_radius < 0.0) {
        throw ConfigError("path config: spacing must be positive and fillet radius non-negative");
    }
    const std::size_t n = waypoints.size();
    std::vector<Vec2> dirs(n - 1);
    std::vector<double> lens(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const Vec2 d = waypoints[i + 1] - waypoints[i];
        lens[i] = d.norm();
        if (!(lens[i] > 1e-9)) {
            throw ConfigError("path waypoints " + std::to_string(i) + " and " + std::to_string(i + 1) +
                              " coincide");
        }
        dirs[i] = d / lens[i];
    }

    // Tangent length of the fillet at each interior waypoint.
    std::vector<double> tangent(n, 0.0);
    std::vector<double> radius(n, 0.0);
    std::vector<double> turn_angle(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double theta = std::atan2(cross(dirs[i - 1], dirs[i]), dirs[i - 1].dot(dirs[i]));
        turn_angle[i] = theta;
        const double abs_theta = std::abs(theta);
        if (abs_theta < 1e-12 || abs_theta > kPi - 1e-9 || cfg.fillet_radius == 0.0) {
            continue;
        }
        const double half_tan = std::tan(0.5 * abs_theta);
        const double t_max = 0.5 * std::min(lens[i - 1], lens[i]);
        const double rho = std::min(cfg.fillet_radius, t_max / half_tan);
        radius[i] = rho;
        tangent[i] = rho * half_tan;
    }

    Path path;
    path.waypoints_ = waypoints;
    path.config_ = cfg;
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const Vec2 a = waypoints[i] + tangent[i] * dirs[i];
        const double leg = lens[i] - tangent[i] - tangent[i + 1];
        if (leg > 1e-12) {
            Path::Piece line;
            line.arc = false;
            line.s0 = s;
            line.length = leg;
            line.start = a;
            line.direction = dirs[i];
            path.pieces_.push_back(line);
            s += leg;
        }
        const std::size_t corner = i + 1;
        if (corner + 1 < n && radius[corner] > 0.0) {
            const double theta = turn_angle[corner];
            const double sign = theta > 0.0 ? 1.0 : -1.0;
            const Vec2& d = dirs[i];
            const Vec2 p1 = waypoints[corner] - tangent[corner] * d;
            const Vec2 normal = sign > 0.0 ? Vec2(-d.y(), d.x()) : Vec2(d.y(), -d.x());
            Path::Piece arc;
            arc.arc = true;
            arc.s0 = s;
            arc.radius = radius[corner];
            arc.length = radius[corner] * std::abs(theta);
            arc.center = p1 + radius[corner] * normal;
            const Vec2 rel = p1 - arc.center;
            arc.phi0 = std::atan2(rel.y(), rel.x());
            arc.turn = sign;
            path.pieces_.push_back(arc);
            s += arc.length;
        }
    }
    path.length_ = s;

    const auto count = static_cast<std::size_t>(std::ceil(s / cfg.table_spacing));
    path.table_.reserve(count + 1);
    double unwrapped = 0.0;
    for (std::size_t k = 0; k <= count; ++k) {
        const double sk = std::min(s, static_cast<double>(k) * cfg.table_spacing);
        const double a = path.angle(sk);
        if (k == 0) {
            unwrapped = a;
        } else {
            unwrapped += wrap_angle(a - wrap_angle(unwrapped));
        }
        path.table_.push_back({sk, path.point(sk), unwrapped});
    }
    return path;
}

namespace {

double ternary_refine(const Path& path, const Vec2& position, double lo, double hi) {
    // Bisection on the sign of d/ds |p(s) - x|^2 / 2 = t(s) . (p(s) - x) when
    // the bracket holds a sign change; it resolves the minimizer to rounding
    // level, where comparing flat squared distances cannot.
    auto slope = [&](double s) {
        const double a = path.angle(s);
        return Vec2(std::cos(a), std::sin(a)).dot(path.point(s) - position);
    };
    if (slope(lo) < 0.0 && slope(hi) > 0.0) {
        for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (slope(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }
    auto dist2 = [&](double s) { return (path.point(s) - position).squaredNorm(); };
    for (int it = 0; it < 100 && hi - lo > 1e-9; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (dist2(m1) <= dist2(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    return 0.5 * (lo + hi);
}

/// Minimizer over table entries [first, last], refining every table-local
/// minimum that is within one spacing of the best sample.
double search_table(const Path& path, const Vec2& position, std::size_t first, std::size_t last) {
    const auto& table = path.table();
    std::vector<double> d(last - first + 1);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = first; k <= last; ++k) {
        d[k - first] = (table[k].point - position).norm();
        best = std::min(best, d[k - first]);
    }
    const double slack = path.config().table_spacing;
    double best_s = table[first].s;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = first; k <= last; ++k) {
        const double dk = d[k - first];
        if (dk > best + slack) {
            continue;
        }
        const bool left_ok = k == first || d[k - first - 1] >= dk;
        const bool right_ok = k == last || d[k - first + 1] >= dk;
        if (!left_ok || !right_ok) {
            continue;
        }
        const double lo = k == first ? table[first].s : table[k - 1].s;
        const double hi = k == last ? table[last].s : table[k + 1].s;
        const double s = ternary_refine(path, position, lo, hi);
        const double ds = (path.point(s) - position).norm();
        if (ds < best_d) {
            best_d = ds;
            best_s = s;
        }
    }
    return best_s;
}

}  // namespace

double closest_param(const Path& path, const Vec2& position, std::optional<double> hint) {
    const auto& table = path.table();
    if (!hint) {
        return search_table(path, position, 0, table.size() - 1);
    }
    const double h = std::clamp(*hint, 0.0, path.length());
    const double spacing = path.config().table_spacing;
    auto first = static_cast<std::size_t>(std::floor(h / spacing));
    auto last = static_cast<std::size_t>(std::ceil((h + path.config().hint_window) / spacing));
    first = std::min(first, table.size() - 1);
    last = std::min(last, table.size() - 1);
    const double s = search_table(path, position, first, last);
    return std::max(s, h);
}

double cross_track_error_at(const Path& path, const Vec2& position, double s_closest) {
    return (position - path.point(s_closest)).norm();
}

double cross_track_error(const Path& path, const Vec2& position) {
    return cross_track_error_at(path, position, closest_param(path, position));
}

double heading_error(const Path& path, const VesselState& state, const GuidanceConfig& cfg,
                     std::optional<double> s_closest) {
    const double s = s_closest ? *s_closest : closest_param(path, state.position());
    const Vec2 target = path.point(std::min(s + cfg.lookahead, path.length()));
    const Vec2 delta = target - state.position();
    return wrap_angle(std::atan2(delta.y(), delta.x()) - state.heading());
}

double lookahead_heading_error(const Path& path, const VesselState& state, const GuidanceConfig& cfg,
                               std::optional<double> s_closest) {
    const double s = s_closest ? *s_closest : closest_param(path, state.position());
    return wrap_angle(path.angle(std::min(s + cfg.lookahead, path.length())) - state.heading());
}

double progress(const Path& path, double s_closest) {
    return std::clamp(s_closest / path.length(), 0.0, 1.0);
}

NavFeatures nav_features(const Path& path, const VesselState& state, const GuidanceConfig& cfg,
                         double s_closest) {
    NavFeatures f;
    f.u = state.nu[0];
    f.v = state.nu[1];
    f.r = state.nu[2];
    f.cross_track = cross_track_error_at(path, state.position(), s_closest);
    f.heading_error = heading_error(path, state, cfg, s_closest);
    f.lookahead_heading_error = lookahead_heading_error(path, state, cfg, s_closest);
    return f;
}

Path generate_path(Rng& rng, const PathGenConfig& cfg) {
    if (cfg.min_waypoints < 0 || cfg.max_waypoints < cfg.min_waypoints || !(cfg.min_segment > 0.0) ||
        cfg.max_segment < cfg.min_segment) {
        throw ConfigError("path generator config is inconsistent");
    }
    const auto intermediate = rng.integer(cfg.min_waypoints, cfg.max_waypoints);
    double heading = rng.uniform(-kPi, kPi);
    std::vector<Vec2> wps;
    wps.emplace_back(0.0, 0.0);
    for (std::int64_t i = 0; i <= intermediate; ++i) {
        const double len = rng.uniform(cfg.min_segment, cfg.max_segment);
        wps.push_back(wps.back() + len * Vec2(std::cos(heading), std::sin(heading)));
        heading += rng.uniform(-cfg.max_turn, cfg.max_turn);
    }
    return build_path(wps, cfg.path);
}

void save_waypoints_csv(const Path& path, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) {
        throw std::runtime_error("cannot write " + file.string());
    }
    out << "x_n,y_n\n" << std::setprecision(17);
    for (const auto& w : path.waypoints()) {
        out << w.x() << ',' << w.y() << '\n';
    }
}

std::vector<Vec2> load_waypoints_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw LoadError("cannot open waypoint file " + file.string());
    }
    std::vector<Vec2> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || (lineno == 1 && line.rfind("x_n", 0) == 0)) {
            continue;
        }
        std::istringstream ss(line);
        double x = 0.0;
        double y = 0.0;
        char comma = 0;
        if (!(ss >> x >> comma >> y) || comma != ',') {
            throw LoadError(file.string() + ":" + std::to_string(lineno) + ": malformed waypoint row");
        }
        out.emplace_back(x, y);
    }
    return out;
}

}  // namespace asvlab::guidance
