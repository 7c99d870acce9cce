// 3-DOF surge/sway/yaw surface vessel model.
//
//   eta_dot = R(psi) nu
//   M nu_dot + C(nu) nu + D(nu) nu = B f
//
// with eta = [x_n, y_n, psi] (north, east, heading) and nu = [u, v, r] in
// the body frame. Coefficients are loaded from a JSON model file.
#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <filesystem>
#include <string>

#include <json.hpp>

namespace asvlab::dynamics {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

struct VesselState {
    Vec3 eta = Vec3::Zero();  // [x_n m, y_n m, psi rad]
    Vec3 nu = Vec3::Zero();   // [u m/s, v m/s, r rad/s]

    Vec2 position() const { return eta.head<2>(); }
    double heading() const { return eta[2]; }
    bool finite() const { return eta.allFinite() && nu.allFinite(); }
};

struct ControlInput {
    double surge_force = 0.0;  // T_u [N]
    double yaw_moment = 0.0;   // T_r [N m]
};

struct ShipModel {
    std::string name;
    Mat3 mass = Mat3::Identity();            // rigid body + added mass
    Mat3 linear_damping = Mat3::Zero();
    Vec3 quadratic_damping = Vec3::Zero();   // diagonal |nu_i| nu_i coefficients
    Mat32 actuation = Mat32::Zero();
    double max_surge_force = 1.0;
    double max_yaw_moment = 1.0;
    double max_surge_speed = 1.0;  // steady state at full surge force
    double hull_radius = 5.0;

    /// Cached inverse; filled by finalize().
    Mat3 mass_inverse = Mat3::Identity();

    /// Validates invariants, caches M^-1 and fills max_surge_speed when it
    /// was not given explicitly (non-positive). Throws ConfigError.
    void finalize();

    /// Coriolis-centripetal matrix derived from the (symmetric) mass matrix.
    /// Skew-symmetric by construction, so nu^T C(nu) nu == 0.
    Mat3 coriolis(const Vec3& nu) const;
    Mat3 damping(const Vec3& nu) const;

    ControlInput saturate(const ControlInput& f) const;
    /// Affine map from a normalized action in [-1,1]^2 (clamped) to forces.
    ControlInput from_action(double a_surge, double a_yaw) const;

    double kinetic_energy(const Vec3& nu) const { return 0.5 * nu.dot(mass * nu); }
};

/// Default "CyberShip-II-like" coefficients, identical to config/cybership2.json.
ShipModel default_ship_model();
ShipModel ship_model_from_json(const nlohmann::json& j);
nlohmann::json ship_model_to_json(const ShipModel& m);
ShipModel load_ship_model(const std::filesystem::path& path);

enum class Integrator { rk4, semi_implicit_euler };

struct SimConfig {
    double dt = 0.1;
    Integrator integrator = Integrator::rk4;
};

Mat3 rotation_matrix(double psi);

struct StateDerivative {
    Vec3 eta_dot;
    Vec3 nu_dot;
};

StateDerivative derivatives(const VesselState& state, const ControlInput& f, const ShipModel& model);

/// Advances the state by cfg.dt. The control is saturated before use.
/// Throws SimulationFault if the result is not finite.
VesselState step(const VesselState& state, const ControlInput& f, const ShipModel& model,
                 const SimConfig& cfg);

}  // namespace asvlab::dynamics
