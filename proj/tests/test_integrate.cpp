#include <cmath>
#include <sstream>

#include "adiff/errors.hpp"
#include "adiff/integrate.hpp"
#include "adiff/pendulum.hpp"
#include "adiff/propagate.hpp"
#include "doctest.h"

using namespace adiff;

namespace {

ModelParams make(double eps, double mu) {
    ModelParams p;
    p.epsilon = eps;
    p.mu = mu;
    return p;
}

double pendulum_energy(double eps, const PhasePoint& x) {
    const double s = std::sin(kPi * x.q);
    return 0.5 * x.p * x.p - 2.0 * eps * s * s;
}

double max_energy_defect(const OrbitSegment& seg, double eps) {
    const double e0 = pendulum_energy(eps, seg.samples.front());
    double m = 0.0;
    for (const auto& x : seg.samples) m = std::max(m, std::abs(pendulum_energy(eps, x) - e0));
    return m;
}

}  // namespace

TEST_CASE("flow stays on the torus family when mu = 0") {
    const double a = 0.37;
    const OrbitSegment seg = flow(make(0.25, 0.0), {0.0, 0.2, 0.0, a, 0.0}, 100.0, 1e-3);
    REQUIRE(seg.samples.size() == 100001);
    double dev = 0.0;
    for (const auto& x : seg.samples) dev = std::max({dev, std::abs(x.q), std::abs(x.p), std::abs(x.I - a)});
    CHECK(dev <= 1e-12);
    CHECK(seg.samples.back().theta == doctest::Approx(0.2 + 100 * a).epsilon(1e-12));
}

TEST_CASE("sample times are exact multiples of the step") {
    const OrbitSegment seg = flow(make(0.25, 0.01), {1.5, 0, 0.3, 0.1, 0.2}, 2.0, 0.01);
    REQUIRE(seg.samples.size() == 201);
    for (std::size_t i = 0; i < seg.samples.size(); ++i) CHECK(seg.samples[i].t == 1.5 + i * 0.01);
    const OrbitSegment part = flow(make(0.25, 0.01), {0, 0, 0.3, 0.1, 0.2}, 0.105, 0.01);
    REQUIRE(part.samples.size() == 12);
    CHECK(part.samples.back().t == doctest::Approx(0.105).epsilon(1e-15));
}

TEST_CASE("pendulum energy is conserved") {
    for (const PhasePoint x0 : {PhasePoint{0, 0, 0.5, 0, 0}, PhasePoint{0, 0, 0.2, 0, 0.4}, PhasePoint{0, 0, 0.1, 0, 1.3}}) {
        const OrbitSegment seg = flow(make(0.25, 0.0), x0, 100.0, 1e-3);
        CHECK(max_energy_defect(seg, 0.25) <= 1e-10);
    }
}

TEST_CASE("flow tracks the analytic separatrix") {
    const double eps = 0.25, delta = 1e-3;
    const OrbitSegment seg =
        flow(make(eps, 0.0), {0, 0, delta, 0, pendulum::s0_prime(eps, delta)}, 6.0, 1e-3);
    // Time of the q = 1/2 crossing from the analytic inverse at the last sample below 1/2.
    double t_half = NAN;
    for (std::size_t i = 1; i < seg.samples.size(); ++i) {
        const auto& a = seg.samples[i - 1];
        if (a.q < 0.5 && seg.samples[i].q >= 0.5) {
            t_half = a.t - std::log(std::tan(0.5 * kPi * a.q)) / (kTwoPi * std::sqrt(eps));
            break;
        }
    }
    REQUIRE(std::isfinite(t_half));
    double dev = 0.0;
    for (const auto& x : seg.samples) {
        if (x.q < 0.1 || x.q > 0.9) continue;
        dev = std::max(dev, std::abs(x.q - pendulum::separatrix_q(eps, t_half, 0.5, x.t)));
    }
    CHECK(dev <= 1e-6);
}

TEST_CASE("action integral examples") {
    const ModelParams p0 = make(0.25, 0.0);
    const OrbitSegment torus = flow(make(0.25, 0.003), {0, 0.1, 0, 0.6, 0}, 10.0, 1e-3);
    CHECK(std::abs(action_integral(torus, 0.6)) <= 1e-12);

    const double eps = 0.25, delta = 1e-3, lambda = kTwoPi * std::sqrt(eps);
    const double transit = 2.0 * std::log(1.0 / std::tan(0.5 * kPi * delta)) / lambda;
    const OrbitSegment sep = flow(p0, {0, 0, delta, 0, pendulum::s0_prime(eps, delta)}, transit, 1e-3);
    CHECK(sep.samples.back().q == doctest::Approx(1.0 - delta).epsilon(1e-9));
    const double expect = pendulum::s0(eps, 1.0 - delta) - pendulum::s0(eps, delta);
    CHECK(std::abs(action_integral(sep, 0.0) - expect) <= 1e-6 * expect);

    const OrbitSegment gen = flow(make(0.25, 0.01), {0.2, 0.3, 0.1, 0.45, 0.6}, 3.7, 1e-3);
    const double a = 0.45, b = 0.8;
    const double dtheta = gen.samples.back().theta - gen.samples.front().theta;
    const double lhs = action_integral(gen, a) - action_integral(gen, b);
    const double rhs = -(a - b) * dtheta + 0.5 * (a * a - b * b) * gen.duration();
    CHECK(std::abs(lhs - rhs) <= 1e-10);
}

TEST_CASE("Newton-Cotes weights integrate polynomials exactly") {
    for (int n : {1, 2, 3, 5, 6, 7, 11, 12, 13, 20}) {
        const std::vector<double> w = newton_cotes_weights(n);
        for (int deg = 0; deg <= std::min(n, 6); ++deg) {
            double s = 0.0;
            for (int i = 0; i <= n; ++i) s += w[i] * std::pow(static_cast<double>(i), deg);
            CHECK(s == doctest::Approx(std::pow(static_cast<double>(n), deg + 1) / (deg + 1)).epsilon(1e-12));
        }
    }
}

TEST_CASE("integrator order is at least six") {
    for (double eps : {0.0625, 0.25}) {
        const PhasePoint x0{0, 0, 0.1, 0, 2.2 * std::sqrt(eps)};
        const double coarse = max_energy_defect(flow(make(eps, 0.0), x0, 10.0, 0.2), eps);
        const double fine = max_energy_defect(flow(make(eps, 0.0), x0, 10.0, 0.1), eps);
        CHECK(fine > 0.0);
        CHECK(coarse / fine >= 32.0);
    }
}

TEST_CASE("action variable is conserved when mu = 0") {
    const OrbitSegment seg = flow(make(0.25, 0.0), {0, 0.3, 0.4, -0.2, 0.5}, 1000.0, 1e-3);
    double dev = 0.0;
    for (const auto& x : seg.samples) dev = std::max(dev, std::abs(x.I + 0.2));
    CHECK(dev <= 1e-9);
}

TEST_CASE("time reversal") {
    const ModelParams p = make(0.25, 0.01);
    const PhasePoint x0{0.3, 0.2, 0.4, 0.5, 0.7};
    const OrbitSegment fwd = flow(p, x0, 10.0, 1e-3);
    const OrbitSegment back = flow_signed(p, fwd.samples.back(), -10.0, 1e-3);
    const PhasePoint& x = back.samples.back();
    CHECK(std::abs(x.t - x0.t) <= 1e-12);
    CHECK(std::abs(x.theta - x0.theta) <= 1e-9);
    CHECK(std::abs(x.q - x0.q) <= 1e-9);
    CHECK(std::abs(x.I - x0.I) <= 1e-9);
    CHECK(std::abs(x.p - x0.p) <= 1e-9);
}

TEST_CASE("variational equations match finite differences") {
    const ModelParams p = make(0.25, 0.05);
    const State4 y0{0.3, 0.2, 0.4, 0.6};
    const Propagation pr = propagate_full(p, 0.4, 0.1, y0, 1.6, 0.01, true);
    const double h = 1e-6;
    for (int c = 0; c < 4; ++c) {
        State4 a = y0, b = y0;
        a[c] += h;
        b[c] -= h;
        const State4 ya = propagate(p, 0.1, a, 1.6, 0.01);
        const State4 yb = propagate(p, 0.1, b, 1.6, 0.01);
        for (int r = 0; r < 4; ++r) CHECK(pr.phi(r, c) == doctest::Approx((ya[r] - yb[r]) / (2 * h)).epsilon(1e-6));
    }
    const Propagation plain = propagate_full(p, 0.4, 0.1, y0, 1.6, 0.01, false);
    CHECK(plain.action == doctest::Approx(pr.action).epsilon(1e-14));
    OrbitSegment seg = flow(p, to_point(0.1, y0), 1.5, 1e-3);
    CHECK(action_integral(seg, 0.4) == doctest::Approx(pr.action).epsilon(1e-10));
}

TEST_CASE("errors and export") {
    CHECK_THROWS_AS(flow(make(0.25, 0.0), {}, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(flow(make(0.25, 0.0), {}, -1.0, 0.1), DomainError);
    CHECK_THROWS_AS(flow(make(0.25, 0.0), {0, 0, 0.1, 0, 1e300}, 1e4, 100.0), NonFinite);
    CHECK_THROWS_AS(flow(make(0.25, 0.0), {0, 0, NAN, 0, 0.1}, 1.0, 0.1), NonFinite);
    const OrbitSegment seg = flow(make(0.25, 0.0), {0, 0, 0.1, 0, 0.2}, 0.002, 1e-3);
    std::ostringstream os;
    write_csv(os, seg);
    const std::string text = os.str();
    CHECK(text.rfind("t,theta,q,I,p\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
