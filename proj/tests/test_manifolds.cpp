#include <cmath>
#include <sstream>

#include "adiff/errors.hpp"
#include "adiff/integrate.hpp"
#include "adiff/manifolds.hpp"
#include "adiff/pendulum.hpp"
#include "doctest.h"

using namespace adiff;

namespace {

ModelParams make(double eps, double mu) {
    ModelParams p;
    p.epsilon = eps;
    p.mu = mu;
    return p;
}

GridResolution small_grid() { return {16, 16, 33}; }

double max_s0_defect(double mu, double a) {
    const ModelParams p = make(0.25, mu);
    double m = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            for (double q : {0.25, 0.5, -0.5, 0.75}) {
                const ManifoldPoint s = shoot_manifold_point(p, a, Branch::Plus, i / 6.0, j / 6.0, q);
                m = std::max(m, std::abs(s.value - pendulum::s0(0.25, q)));
            }
    return m;
}

}  // namespace

TEST_CASE("finite-difference weights are exact on polynomials") {
    std::vector<double> nodes;
    for (int i = 0; i < 9; ++i) nodes.push_back(0.1 * i - 0.3);
    for (double x0 : {-0.3, 0.0, 0.17, 0.5}) {
        const std::vector<double> w = fd_weights(x0, nodes);
        for (int deg = 0; deg <= 8; ++deg) {
            double s = 0.0;
            for (int i = 0; i < 9; ++i) s += w[i] * std::pow(nodes[i], deg);
            const double expect = deg == 0 ? 0.0 : deg * std::pow(x0, deg - 1);
            CHECK(s == doctest::Approx(expect).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("periodic differentiation is spectral") {
    for (int n : {16, 17, 32}) {
        const std::vector<double> d = periodic_derivative_matrix(n);
        double err = 0.0;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int m = 0; m < n; ++m) s += d[j * n + m] * std::sin(kTwoPi * 3 * m / n + 0.4);
            err = std::max(err, std::abs(s - 3 * kTwoPi * std::cos(kTwoPi * 3 * j / n + 0.4)));
        }
        CHECK(err <= 1e-11);
    }
}

TEST_CASE("unperturbed manifolds are the separatrix graphs") {
    const ModelParams p = make(0.25, 0.0);
    for (double q : {-0.75, -0.5, -0.1, 0.03, 0.5, 0.75}) {
        const ManifoldPoint up = shoot_manifold_point(p, 0.3, Branch::Plus, 0.2, 0.7, q);
        const ManifoldPoint down = shoot_manifold_point(p, 0.3, Branch::Minus, 0.2, 0.7, q);
        CHECK(std::abs(up.value - pendulum::s0(0.25, q)) <= 1e-8);
        CHECK(std::abs(down.value + pendulum::s0(0.25, q)) <= 1e-8);
        CHECK(std::abs(up.p - std::copysign(1.0, q) * std::abs(pendulum::s0_prime(0.25, q))) <= 1e-8);
        CHECK(std::abs(down.p + up.p) <= 1e-8);
        CHECK(std::abs(up.I - 0.3) <= 1e-12);
        CHECK(std::abs(up.hessian[2][2] - pendulum::s0_second(0.25, std::abs(q))) <= 1e-6);
    }
    const ManifoldPoint torus = shoot_manifold_point(p, 0.3, Branch::Plus, 0.2, 0.7, 0.0);
    CHECK(torus.value == 0.0);
    CHECK(torus.I == 0.3);
    CHECK_THROWS_AS(shoot_manifold_point(p, 0.3, Branch::Plus, 0.2, 0.7, 1.0), DomainError);
}

TEST_CASE("unperturbed grid equals plus or minus S0") {
    const GeneratingFunctionGrid up = compute_generating_function(make(0.25, 0.0), 0.4, Branch::Plus, small_grid());
    const GeneratingFunctionGrid down = compute_generating_function(make(0.25, 0.0), 0.4, Branch::Minus, small_grid());
    double err = 0.0;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            for (int k = 0; k < 33; ++k) {
                const double s0 = pendulum::s0(0.25, up.q_node(k));
                err = std::max({err, std::abs(up.at(i, j, k) - s0), std::abs(down.at(i, j, k) + s0)});
            }
    CHECK(err <= 1e-8);
    CHECK(up.at(3, 5, 16) == 0.0);
    CHECK(up.hj_residual <= 5e-6);
    CHECK_THROWS_AS(compute_generating_function(make(0.25, 0.0), 0.4, Branch::Plus, {8, 16, 33}), DomainError);
}

TEST_CASE("perturbed grid solves the Hamilton-Jacobi equation") {
    const GeneratingFunctionGrid g = compute_generating_function(make(0.25, 1e-3), 1.0, Branch::Plus, small_grid());
    CHECK(g.hj_residual <= 5e-6);
    CHECK(g.at(0, 0, 16) == 0.0);
    std::ostringstream os;
    write_csv(os, g);
    CHECK(os.str().rfind("t,theta,q,S\n", 0) == 0);
}

TEST_CASE("manifold deviation from S0 is first order in mu") {
    const double d1 = max_s0_defect(1e-3, 0.6);
    const double d2 = max_s0_defect(5e-4, 0.6);
    CHECK(d1 / d2 >= 1.6);
    CHECK(d1 / d2 <= 2.5);
}

TEST_CASE("shooting Hessian matches finite differences of the gradient") {
    const ModelParams p = make(0.25, 0.02);
    const double h = 1e-5;
    const ManifoldPoint c = shoot_manifold_point(p, 0.7, Branch::Minus, 0.3, 0.1, -0.4);
    const std::array<double, 3> x{0.3, 0.1, -0.4};
    for (int d = 0; d < 3; ++d) {
        std::array<double, 3> lo = x, hi = x;
        lo[d] -= h;
        hi[d] += h;
        const ManifoldPoint a = shoot_manifold_point(p, 0.7, Branch::Minus, hi[0], hi[1], hi[2]);
        const ManifoldPoint b = shoot_manifold_point(p, 0.7, Branch::Minus, lo[0], lo[1], lo[2]);
        CHECK((a.value - b.value) / (2 * h) == doctest::Approx(c.gradient()[d]).epsilon(1e-6));
        for (int r = 0; r < 3; ++r)
            CHECK((a.gradient()[r] - b.gradient()[r]) / (2 * h) == doctest::Approx(c.hessian[r][d]).epsilon(1e-5));
    }
}

TEST_CASE("section splitting") {
    SUBCASE("unperturbed splitting is constant") {
        const SplittingField f = splitting_delta(make(0.25, 0.0), 1.0, small_grid());
        for (double t : {0.0, 0.13, 0.77})
            for (double th : {-0.9, 0.2, 0.6}) {
                CHECK(std::abs(f.value(t, th) - 2.0 * pendulum::s0(0.25, 0.5)) <= 1e-8);
                CHECK(std::abs(f.gradient(t, th)[0]) <= 1e-8);
                CHECK(std::abs(f.gradient(t, th)[1]) <= 1e-8);
            }
    }
    SUBCASE("first-order agreement with the Melnikov integral") {
        for (double mu : {1e-3, 5e-4}) {
            const ModelParams p = make(0.25, mu);
            double defect = 0.0;
            for (double t : {0.0, 0.3})
                for (double th : {0.1, 0.55}) {
                    const SigmaJet s = sigma_jet(p, 1.0, 1.0, t, th);
                    defect = std::max(defect, std::abs(s.jet.value - 2.0 * pendulum::s0(0.25, 0.5) -
                                                       mu * melnikov_closed_form(0.25, 1.0, t, th)));
                }
            CHECK(defect <= 0.2 * mu * mu);
        }
    }
    SUBCASE("interpolation between nodes") {
        const ModelParams p = make(0.25, 1e-3);
        const SplittingField f = splitting_delta(p, 1.0, small_grid());
        CHECK(f.value(0.25, 0.5) == doctest::Approx(f.node(4, 8)).epsilon(1e-15));
        for (double t : {0.07, 0.61})
            for (double th : {0.33, 0.9}) {
                const SigmaJet s = sigma_jet(p, 1.0, 1.0, t, th);
                // Cubic Hermite error at h = 1/16 for a mu-sized first harmonic.
                CHECK(std::abs(f.value(t, th) - s.jet.value) <= 5e-9);
                CHECK(std::abs(f.gradient(t, th)[0] - s.jet.grad[0]) <= 5e-7);
                CHECK(std::abs(f.gradient(t, th)[1] - s.jet.grad[1]) <= 5e-7);
            }
        std::ostringstream os;
        write_csv(os, f);
        CHECK(os.str().rfind("t,theta,sigma\n", 0) == 0);
    }
}

TEST_CASE("sigma with equal levels is the section splitting") {
    const ModelParams p = make(0.25, 1e-3);
    const SplittingField d = splitting_delta(p, 0.8, small_grid());
    const SplittingField s = sigma(p, 0.8, 0.8, small_grid());
    for (std::size_t k = 0; k < d.periodic.size(); ++k) CHECK(s.periodic[k] == d.periodic[k]);
    CHECK_THROWS_AS(sigma(p, 0.8, 0.95, small_grid()), DomainError);
}

TEST_CASE("unperturbed sigma is affine") {
    const SplittingField s = sigma(make(0.25, 0.0), 0.5, 0.52, small_grid());
    for (double th : {-0.5, 0.0, 0.7}) {
        const double expect = 2.0 * pendulum::s0(0.25, 0.5) - 0.02 * th - 0.5 * (0.25 - 0.52 * 0.52) * 0.4;
        CHECK(std::abs(s.value(0.4, th) - expect) <= 1e-8);
    }
    CHECK_THROWS_AS(find_link(make(0.25, 0.0), 0.5, 0.52), NoCriticalPoint);
}

TEST_CASE("homoclinic link and the matching condition") {
    const ModelParams p = make(0.25, 1e-3);
    const Link l = find_link(p, 1.0, 1.0);
    CHECK(l.classification == CriticalClass::Minimum);
    CHECK(l.isolated);
    CHECK(torus_distance(l.t, l.theta, 0.5, 0.5) <= 1e-3);
    CHECK(l.gradient_norm <= 1e-10);
    CHECK(std::abs(l.plus.p - l.minus.p) <= 1e-6);
    CHECK(std::abs(l.plus.I - l.minus.I) <= 1e-9);
}

TEST_CASE("heteroclinic link near the homoclinic one") {
    const ModelParams p = make(0.25, 1e-3);
    const Link base = find_link(p, 1.0, 1.0);
    const Link l = find_link(p, 1.0, 1.0 + 5e-4);
    CHECK(l.classification == CriticalClass::Minimum);
    CHECK(l.isolated);
    CHECK(torus_distance(l.t, l.theta, base.t, base.theta) <= 5.0 * (5e-4 / 1e-3 + 1e-3));
    CHECK(std::abs(l.plus.p - l.minus.p) <= 1e-6);

    // The stable side of the link point is a true orbit that lands on T(a'). Forward flow along a stable
    // manifold amplifies the 1e-12 shooting miss by exp(lambda t), which bounds the usable horizon.
    const double dur = l.minus.seed.duration + 1.0;
    const OrbitSegment seg = flow(p, {l.t, l.theta, -0.5, l.minus.I, l.minus.p}, dur, 1e-3);
    const PhasePoint& end = seg.samples.back();
    CHECK(std::abs(end.q) <= 1e-5);
    CHECK(std::abs(end.p) <= 3e-5);
    CHECK(std::abs(eval_H(p, end) - 0.5 * l.a_prime * l.a_prime) <= 1e-6);
    CHECK(std::abs(end.I - l.a_prime) <= 1e-6);
}

TEST_CASE("wide gaps have no link") {
    CHECK_THROWS_AS(find_link(make(0.25, 1e-3), 0.5, 0.55), NoCriticalPoint);
    CHECK_THROWS_AS(find_link(make(0.25, 1e-3), 0.5, 0.7), DomainError);
}

TEST_CASE("chains") {
    const ModelParams p = make(0.25, 1e-3);
    SUBCASE("degenerate interval") {
        const ChainSchedule c = build_chain(p, 0.3, 0.3, 1.0);
        CHECK(c.k() == 0);
        CHECK(c.links.empty());
    }
    SUBCASE("no perturbation") {
        try {
            build_chain(make(0.25, 0.0), 0.0, 0.01, 1.0);
            FAIL("expected ChainBroken");
        } catch (const ChainBroken& e) {
            CHECK(e.link() == 1);
        }
        CHECK_THROWS_AS(build_chain(p, 0.2, 0.1, 1.0), DomainError);
        CHECK_THROWS_AS(build_chain(p, 0.1, 0.2, 0.0), DomainError);
    }
    SUBCASE("uniform links with verified minima") {
        const ChainSchedule c = build_chain(p, 0.2, 0.204, 1.0);
        REQUIRE(c.k() == 4);
        CHECK(c.c_used == 1.0);
        for (int i = 0; i < c.k(); ++i) {
            CHECK(c.levels[i + 1] - c.levels[i] <= c.c_used * p.mu * (1 + 1e-12));
            CHECK(c.links[i].isolated);
            CHECK(c.links[i].classification == CriticalClass::Minimum);
        }
        const ChainSchedule half = build_chain(make(0.25, 5e-4), 0.2, 0.204, 1.0);
        CHECK(half.k() == 8);
        // Sub-chains reuse the same links.
        const ChainSchedule sub = build_chain(p, c.levels[1], c.levels[3], 1.0);
        REQUIRE(sub.k() == 2);
        CHECK(std::abs(sub.links[0].t - c.links[1].t) <= 1e-9);
        CHECK(std::abs(sub.links[1].theta - c.links[2].theta) <= 1e-9);
    }
    SUBCASE("spacing refinement") {
        const ChainSchedule c = build_chain(p, 0.2, 0.204, 8.0);
        CHECK(c.c_used < 8.0);
        CHECK(c.c_used >= 1.0);
        CHECK(c.k() == static_cast<int>(std::ceil(0.004 / (c.c_used * p.mu) - 1e-9)));
    }
}

TEST_CASE("link threshold brackets the largest working spacing") {
    const ModelParams p = make(0.25, 1e-3);
    const double c = link_threshold(p, 0.2, 0.25, 4.0, 8);
    CHECK(c > 0.25);
    CHECK(c < 4.0);
    CHECK_NOTHROW(find_link(p, 0.2, 0.2 + c * p.mu));
    CHECK_THROWS(find_link(p, 0.2, 0.2 + (c + 0.05) * p.mu));
}
