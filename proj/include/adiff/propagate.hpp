#pragma once

#include <Eigen/Dense>
#include <array>

#include "adiff/model.hpp"

namespace adiff {

/// Reduced state (theta, q, I, p); time is the independent variable.
using State4 = std::array<double, 4>;

inline State4 to_state(const PhasePoint& x) { return {x.theta, x.q, x.I, x.p}; }
inline PhasePoint to_point(double t, const State4& y) { return {t, y[0], y[1], y[2], y[3]}; }

/// Number of uniform steps of size at most h_max covering |t1 - t0|.
int step_count(double t0, double t1, double h_max);

/// Plain flow from t0 to t1 (either direction) with uniform steps no larger than h_max.
State4 propagate(const ModelParams& params, double t0, State4 y, double t1, double h_max);

struct Propagation {
    State4 y{};
    /// Integral of the reduced Lagrangian (level a) from t0 to t1, signed with the direction of time.
    double action = 0.0;
    /// Derivative of y(t1) with respect to y(t0).
    Eigen::Matrix4d phi = Eigen::Matrix4d::Identity();
};

/// Flow with the reduced action integral and, optionally, the variational equations.
Propagation propagate_full(const ModelParams& params, double a, double t0, const State4& y0, double t1,
                           double h_max, bool with_phi);

/// Right-hand side (theta', q', I', p') and its Jacobian.
State4 field4(const ModelParams& params, double t, const State4& y);
Eigen::Matrix4d field_jacobian(const ModelParams& params, double t, const State4& y);

/// Throws NonFinite if any component is not finite.
void check_finite(const State4& y, double t, const char* where);

}  // namespace adiff
