#include <cmath>

#include "adiff/errors.hpp"
#include "adiff/model.hpp"
#include "adiff/pendulum.hpp"
#include "doctest.h"

using namespace adiff;
using namespace adiff::pendulum;

TEST_CASE("s0 values") {
    CHECK(s0(0.25, 0.0) == 0.0);
    CHECK(s0(0.25, 0.5) == doctest::Approx(0.3183098861837907).epsilon(1e-14));
    CHECK(s0(0.25, 1.0) == doctest::Approx(0.6366197723675814).epsilon(1e-14));
    CHECK(s0(0.0625, 0.5) == doctest::Approx(0.5 / kPi).epsilon(1e-14));
}

TEST_CASE("separatrix_q") {
    const double eps = 0.25;
    for (double q : {0.1, 0.5, 0.83}) CHECK(separatrix_q(eps, 1.3, q, 1.3) == doctest::Approx(q).epsilon(1e-15));
    CHECK(1.0 - separatrix_q(eps, 0.0, 0.5, 5.0) <= 2e-6);
    CHECK(1.0 - separatrix_q(eps, 0.0, 0.5, 5.0) > 0.0);
    CHECK(separatrix_q(eps, 0.0, 0.5, -40.0) < 1e-20);
    double prev = -1.0;
    for (double s = -6.0; s <= 6.0; s += 0.37) {
        const double q = separatrix_q(eps, 0.0, 0.5, s);
        CHECK(q > prev);
        prev = q;
        CHECK(std::abs(q + separatrix_q(eps, 0.0, 0.5, -s) - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(separatrix_q(eps, 0.0, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(separatrix_q(eps, 0.0, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(separatrix_p(eps, 0.0, -0.2, 1.0), DomainError);
}

TEST_CASE("separatrix_p") {
    const double eps = 0.25;
    CHECK(separatrix_p(eps, 0.0, 0.5, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(separatrix_p(eps, 0.0, 0.5, 60.0) < 1e-30);
    CHECK(separatrix_p(eps, 0.0, 0.5, -60.0) < 1e-30);
    const double h = 1e-5;
    for (double s = -3.0; s <= 3.0; s += 0.25) {
        for (double eps2 : {0.0625, 0.25, 0.7}) {
            const double fd = (separatrix_q(eps2, 0.2, 0.3, s + h) - separatrix_q(eps2, 0.2, 0.3, s - h)) / (2 * h);
            CHECK(std::abs(fd - separatrix_p(eps2, 0.2, 0.3, s)) <= 1e-8);
        }
    }
}

TEST_CASE("graph invariance, energy and Hamilton-Jacobi at mu = 0") {
    ModelParams p;
    p.epsilon = 0.25;
    p.mu = 0.0;
    const double a = 0.4;
    for (int i = 1; i <= 200; ++i) {
        const double q = i / 201.0;
        const double pq = s0_prime(p.epsilon, q);
        const Tangent v = vector_field(p, {0.3, 0.7, q, a, pq});
        // Tangency of the field to the graph p = S0'(q).
        CHECK(std::abs(v[4] - s0_second(p.epsilon, q) * v[2]) <= 1e-10);
        const double s = std::sin(kPi * q);
        CHECK(std::abs(0.5 * pq * pq - 2.0 * p.epsilon * s * s) <= 1e-12);
        // d_t S0 = 0 and d_theta S0 = 0, so the residual is H(t, theta, q, a, S0') - a^2/2.
        CHECK(std::abs(eval_H(p, {0.3, 0.7, q, a, pq}) - 0.5 * a * a) <= 1e-12);
    }
}
