#include "adiff/propagate.hpp"

#include <cmath>
#include <sstream>

#include "adiff/errors.hpp"
#include "adiff/rk8.hpp"

namespace adiff {

int step_count(double t0, double t1, double h_max) {
    const double span = std::abs(t1 - t0);
    if (span == 0.0) return 0;
    // Tolerate span/h_max landing a hair above an integer.
    return std::max(1, static_cast<int>(std::ceil(span / h_max - 1e-9)));
}

void check_finite(const State4& y, double t, const char* where) {
    for (double v : y) {
        if (!std::isfinite(v) || std::abs(v) > 1e12) {
            std::ostringstream os;
            os << where << ": state left the representable range at t=" << t;
            throw NonFinite(os.str());
        }
    }
}

State4 field4(const ModelParams& params, double t, const State4& y) {
    const PotentialJet w = potential_gradient(params, t, y[0], y[1]);
    return {y[2], y[3], -w.w_theta, -w.w_q};
}

Eigen::Matrix4d field_jacobian(const ModelParams& params, double t, const State4& y) {
    const PotentialJet w = potential_jet(params, t, y[0], y[1]);
    Eigen::Matrix4d j = Eigen::Matrix4d::Zero();
    j(0, 2) = 1.0;
    j(1, 3) = 1.0;
    j(2, 0) = -w.w_thth;
    j(2, 1) = -w.w_thq;
    j(3, 0) = -w.w_thq;
    j(3, 1) = -w.w_qq;
    return j;
}

State4 propagate(const ModelParams& params, double t0, State4 y, double t1, double h_max) {
    const int n = step_count(t0, t1, h_max);
    if (n == 0) return y;
    const double h = (t1 - t0) / n;
    auto f = [&params](double t, const State4& s, State4& ds) { ds = field4(params, t, s); };
    for (int i = 0; i < n; ++i) rk8::step<4>(f, t0 + i * h, y, h);
    check_finite(y, t1, "propagate");
    return y;
}

Propagation propagate_full(const ModelParams& params, double a, double t0, const State4& y0, double t1,
                           double h_max, bool with_phi) {
    Propagation out;
    const int n = step_count(t0, t1, h_max);
    if (n == 0) {
        out.y = y0;
        return out;
    }
    const double h = (t1 - t0) / n;
    if (!with_phi) {
        // (theta, q, I, p, action)
        std::array<double, 5> s{y0[0], y0[1], y0[2], y0[3], 0.0};
        auto f = [&params, a](double t, const std::array<double, 5>& u, std::array<double, 5>& du) {
            const PotentialJet w = potential_gradient(params, t, u[0], u[1]);
            du[0] = u[2];
            du[1] = u[3];
            du[2] = -w.w_theta;
            du[3] = -w.w_q;
            const double d = u[2] - a;
            du[4] = 0.5 * u[3] * u[3] + 0.5 * d * d - w.w;
        };
        for (int i = 0; i < n; ++i) rk8::step<5>(f, t0 + i * h, s, h);
        out.y = {s[0], s[1], s[2], s[3]};
        out.action = s[4];
        check_finite(out.y, t1, "propagate_full");
        return out;
    }
    // (theta, q, I, p, action, phi column-major 4x4)
    std::array<double, 21> s{};
    for (int i = 0; i < 4; ++i) s[i] = y0[i];
    for (int c = 0; c < 4; ++c) s[5 + 4 * c + c] = 1.0;
    auto f = [&params, a](double t, const std::array<double, 21>& u, std::array<double, 21>& du) {
        const PotentialJet w = potential_jet(params, t, u[0], u[1]);
        du[0] = u[2];
        du[1] = u[3];
        du[2] = -w.w_theta;
        du[3] = -w.w_q;
        const double d = u[2] - a;
        du[4] = 0.5 * u[3] * u[3] + 0.5 * d * d - w.w;
        for (int c = 0; c < 4; ++c) {
            const double* p = &u[5 + 4 * c];
            double* dp = &du[5 + 4 * c];
            dp[0] = p[2];
            dp[1] = p[3];
            dp[2] = -w.w_thth * p[0] - w.w_thq * p[1];
            dp[3] = -w.w_thq * p[0] - w.w_qq * p[1];
        }
    };
    for (int i = 0; i < n; ++i) rk8::step<21>(f, t0 + i * h, s, h);
    out.y = {s[0], s[1], s[2], s[3]};
    out.action = s[4];
    for (int c = 0; c < 4; ++c)
        for (int r = 0; r < 4; ++r) out.phi(r, c) = s[5 + 4 * c + r];
    check_finite(out.y, t1, "propagate_full");
    return out;
}

}  // namespace adiff
