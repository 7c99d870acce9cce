#include "asvlab/dynamics.hpp"

#include "asvlab/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace asvlab::dynamics {

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a, two_pi);
    if (w <= -std::numbers::pi) {
        w += two_pi;
    } else if (w > std::numbers::pi) {
        w -= two_pi;
    }
    return w;
}

Mat3 rotation_matrix(double psi) {
    const double c = std::cos(psi);
    const double s = std::sin(psi);
    Mat3 r;
    r << c, -s, 0.0,
         s, c, 0.0,
         0.0, 0.0, 1.0;
    return r;
}

void ShipModel::finalize() {
    if (!mass.allFinite() || !linear_damping.allFinite() || !quadratic_damping.allFinite() ||
        !actuation.allFinite()) {
        throw ConfigError("ship model '" + name + "': non-finite coefficient");
    }
    if ((mass - mass.transpose()).cwiseAbs().maxCoeff() > 1e-9 * mass.cwiseAbs().maxCoeff()) {
        throw ConfigError("ship model '" + name + "': mass matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> mass_eig(mass);
    if (mass_eig.eigenvalues().minCoeff() <= 0.0) {
        throw ConfigError("ship model '" + name + "': mass matrix is not positive definite");
    }
    const Mat3 d_sym = 0.5 * (linear_damping + linear_damping.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> damp_eig(d_sym);
    if (damp_eig.eigenvalues().minCoeff() < -1e-12) {
        throw ConfigError("ship model '" + name + "': linear damping is not dissipative");
    }
    if ((quadratic_damping.array() < 0.0).any()) {
        throw ConfigError("ship model '" + name + "': quadratic damping must be non-negative");
    }
    if (!(max_surge_force > 0.0) || !(max_yaw_moment > 0.0) || !(hull_radius > 0.0)) {
        throw ConfigError("ship model '" + name + "': actuator limits and hull radius must be positive");
    }
    mass_inverse = mass.inverse();

    if (!(max_surge_speed > 0.0)) {
        // Pure surge: d u + q u|u| = b T.
        const double d = linear_damping(0, 0);
        const double q = quadratic_damping[0];
        const double force = actuation(0, 0) * max_surge_force;
        if (q > 0.0) {
            max_surge_speed = (-d + std::sqrt(d * d + 4.0 * q * force)) / (2.0 * q);
        } else if (d > 0.0) {
            max_surge_speed = force / d;
        } else {
            throw ConfigError("ship model '" + name + "': surge is undamped, cannot derive u_max");
        }
    }
}

Mat3 ShipModel::coriolis(const Vec3& nu) const {
    const double m11 = mass(0, 0);
    const double m22 = mass(1, 1);
    const double m23 = 0.5 * (mass(1, 2) + mass(2, 1));
    const double a = m22 * nu[1] + m23 * nu[2];
    const double b = m11 * nu[0];
    Mat3 c;
    c << 0.0, 0.0, -a,
         0.0, 0.0, b,
         a, -b, 0.0;
    return c;
}

Mat3 ShipModel::damping(const Vec3& nu) const {
    Mat3 d = linear_damping;
    for (int i = 0; i < 3; ++i) {
        d(i, i) += quadratic_damping[i] * std::abs(nu[i]);
    }
    return d;
}

ControlInput ShipModel::saturate(const ControlInput& f) const {
    return {std::clamp(f.surge_force, -max_surge_force, max_surge_force),
            std::clamp(f.yaw_moment, -max_yaw_moment, max_yaw_moment)};
}

ControlInput ShipModel::from_action(double a_surge, double a_yaw) const {
    return {std::clamp(a_surge, -1.0, 1.0) * max_surge_force,
            std::clamp(a_yaw, -1.0, 1.0) * max_yaw_moment};
}

StateDerivative derivatives(const VesselState& state, const ControlInput& f, const ShipModel& model) {
    const Eigen::Vector2d forces(f.surge_force, f.yaw_moment);
    const Vec3& nu = state.nu;
    StateDerivative out;
    out.eta_dot = rotation_matrix(state.eta[2]) * nu;
    out.nu_dot = model.mass_inverse *
                 (model.actuation * forces - model.coriolis(nu) * nu - model.damping(nu) * nu);
    return out;
}

namespace {

VesselState offset(const VesselState& s, const StateDerivative& k, double h) {
    VesselState out;
    out.eta = s.eta + h * k.eta_dot;
    out.nu = s.nu + h * k.nu_dot;
    return out;
}

}  // namespace

VesselState step(const VesselState& state, const ControlInput& f, const ShipModel& model,
                 const SimConfig& cfg) {
    const ControlInput fs = model.saturate(f);
    const double h = cfg.dt;
    VesselState next;
    switch (cfg.integrator) {
        case Integrator::rk4: {
            const auto k1 = derivatives(state, fs, model);
            const auto k2 = derivatives(offset(state, k1, 0.5 * h), fs, model);
            const auto k3 = derivatives(offset(state, k2, 0.5 * h), fs, model);
            const auto k4 = derivatives(offset(state, k3, h), fs, model);
            next.eta = state.eta + (h / 6.0) * (k1.eta_dot + 2.0 * k2.eta_dot + 2.0 * k3.eta_dot + k4.eta_dot);
            next.nu = state.nu + (h / 6.0) * (k1.nu_dot + 2.0 * k2.nu_dot + 2.0 * k3.nu_dot + k4.nu_dot);
            break;
        }
        case Integrator::semi_implicit_euler: {
            // Linearly implicit in C and D: (M + h(C + D)) nu' = M nu + h B f.
            // Skew C drops out of the energy balance, so zero control never
            // adds energy for any h.
            const Mat3 a = model.mass + h * (model.coriolis(state.nu) + model.damping(state.nu));
            const Vec3 rhs = model.mass * state.nu + h * (model.actuation * Vec2(fs.surge_force, fs.yaw_moment));
            next.nu = a.partialPivLu().solve(rhs);
            next.eta = state.eta + h * (rotation_matrix(state.eta[2]) * next.nu);
            break;
        }
    }
    if (!next.finite()) {
        throw SimulationFault("vessel state became non-finite during integration");
    }
    next.eta[2] = wrap_angle(next.eta[2]);
    return next;
}

namespace {

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from_json(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) {
        throw ConfigError(std::string("ship model: missing key '") + key + "'");
    }
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != static_cast<std::size_t>(R * C)) {
        throw ConfigError(std::string("ship model: '") + key + "' must be a row-major array of " +
                          std::to_string(R * C) + " numbers");
    }
    Eigen::Matrix<double, R, C> m;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            m(r, c) = arr.at(static_cast<std::size_t>(r * C + c)).get<double>();
        }
    }
    return m;
}

template <typename Derived>
nlohmann::json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            arr.push_back(m(r, c));
        }
    }
    return arr;
}

}  // namespace

ShipModel ship_model_from_json(const nlohmann::json& j) {
    ShipModel m;
    m.name = j.value("name", std::string("unnamed"));
    m.mass = matrix_from_json<3, 3>(j, "mass_matrix");
    m.linear_damping = matrix_from_json<3, 3>(j, "linear_damping");
    if (j.contains("quadratic_damping")) {
        m.quadratic_damping = matrix_from_json<3, 1>(j, "quadratic_damping");
    }
    m.actuation = matrix_from_json<3, 2>(j, "actuation");
    m.max_surge_force = j.at("max_surge_force").get<double>();
    m.max_yaw_moment = j.at("max_yaw_moment").get<double>();
    m.max_surge_speed = j.value("max_surge_speed", 0.0);
    m.hull_radius = j.value("hull_radius", 5.0);
    m.finalize();
    return m;
}

nlohmann::json ship_model_to_json(const ShipModel& m) {
    return {
        {"name", m.name},
        {"mass_matrix", matrix_to_json(m.mass)},
        {"linear_damping", matrix_to_json(m.linear_damping)},
        {"quadratic_damping", matrix_to_json(m.quadratic_damping)},
        {"actuation", matrix_to_json(m.actuation)},
        {"max_surge_force", m.max_surge_force},
        {"max_yaw_moment", m.max_yaw_moment},
        {"max_surge_speed", m.max_surge_speed},
        {"hull_radius", m.hull_radius},
    };
}

ShipModel load_ship_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open ship model file: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("ship model file " + path.string() + ": " + e.what());
    }
    return ship_model_from_json(j);
}

ShipModel default_ship_model() {
    // Keep in sync with config/cybership2.json.
    static const nlohmann::json kDefault = {
        {"name", "CyberShip-II-like"},
        {"mass_matrix", {25.8, 0.0, 0.0,
                         0.0, 33.8, 1.0948,
                         0.0, 1.0948, 2.76}},
        {"linear_damping", {1.0, 0.0, 0.0,
                            0.0, 60.0, 0.0,
                            0.0, 0.0, 20.0}},
        {"quadratic_damping", {0.0, 0.0, 0.0}},
        {"actuation", {1.0, 0.0,
                       0.0, 0.0,
                       0.0, 1.0}},
        {"max_surge_force", 2.0},
        {"max_yaw_moment", 0.7},
        {"hull_radius", 5.0},
    };
    return ship_model_from_json(kDefault);
}

}  // namespace asvlab::dynamics
