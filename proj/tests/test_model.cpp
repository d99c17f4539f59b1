#include <cmath>
#include <random>

#include "adiff/errors.hpp"
#include "adiff/model.hpp"
#include "doctest.h"

using namespace adiff;

namespace {

ModelParams make(double eps, double mu, Perturbation f = Perturbation::arnold()) {
    ModelParams p;
    p.epsilon = eps;
    p.mu = mu;
    p.perturbation = std::move(f);
    return p;
}

PhasePoint random_point(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ang(-3.0, 3.0), mom(-1.5, 1.5);
    return {ang(rng), ang(rng), ang(rng), mom(rng), mom(rng)};
}

}  // namespace

TEST_CASE("eval_H examples") {
    CHECK(eval_H(make(0.25, 0.0), {0, 0, 0, 0.7, 0}) == doctest::Approx(0.245).epsilon(1e-15));
    CHECK(eval_H(make(0.25, 0.0), {0, 0, 0.5, 0, 0}) == doctest::Approx(-0.5).epsilon(1e-15));
    // 0.5 + 0.25 (cos(pi) - 1)(1 + 0.001 (1 + 1))
    CHECK(std::abs(eval_H(make(0.25, 0.001), {0, 0, 0.5, 1, 0}) - (-0.001)) < 1e-15);
}

TEST_CASE("eval_L and the reduced Lagrangian") {
    const ModelParams p = make(0.25, 0.0);
    CHECK(eval_L(make(0.25, 0.3), 0.2, 0.1, 0.0, 0.8, 0.0) == doctest::Approx(0.32));
    CHECK(eval_L(p, 0, 0, 0.5, 0, 0) == doctest::Approx(0.5));
    CHECK(eval_L(p, 0, 0, 0.25, 1, 1) == doctest::Approx(1.25));
    for (double a : {0.0, 0.3, 1.0}) {
        CHECK(std::abs(reduced_lagrangian(make(0.25, 0.01), a, 0.3, 0.2, 0.0, a, 0.0)) < 1e-15);
    }
    CHECK(reduced_lagrangian(p, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5) ==
          doctest::Approx(eval_L(p, 0.1, 0.2, 0.3, 0.4, 0.5)).epsilon(1e-15));
    CHECK(reduced_lagrangian(p, 1.0, 0, 0, 0, 0, 0) == doctest::Approx(0.5));
    // Identity with eval_L away from the torus.
    const ModelParams q = make(0.25, 0.002);
    CHECK(reduced_lagrangian(q, 0.4, 0.1, 0.7, 0.3, 0.9, -0.2) ==
          doctest::Approx(eval_L(q, 0.1, 0.7, 0.3, 0.9, -0.2) - 0.4 * 0.9 + 0.08).epsilon(1e-14));
}

TEST_CASE("vector_field examples") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) CHECK(vector_field(make(0.25, 0.0), random_point(rng))[3] == 0.0);
    for (double mu : {0.0, 0.001, 0.5}) {
        const Tangent v = vector_field(make(0.25, mu), {0.37, 0.81, 2.0, 0.6, 0.0});
        CHECK(v[0] == 1.0);
        CHECK(v[1] == doctest::Approx(0.6));
        CHECK(v[2] == 0.0);
        CHECK(std::abs(v[3]) < 1e-14);
        CHECK(std::abs(v[4]) < 1e-14);
    }
    const Tangent v = vector_field(make(0.25, 0.0), {0, 0, 0.25, 0, 0});
    CHECK(v[4] == doctest::Approx(1.5707963267948966).epsilon(1e-14));
}

TEST_CASE("vector_field matches finite differences of eval_H") {
    std::mt19937_64 rng(11);
    Perturbation f({{1, 0, 0, 1.0, 0.0}, {0, 1, 0, 1.0, 0.0}, {1, -2, 1, 0.4, 0.3}});
    const ModelParams p = make(0.25, 0.2, f);
    const double h = 1e-6;
    for (int i = 0; i < 100; ++i) {
        const PhasePoint x = random_point(rng);
        const Tangent v = vector_field(p, x);
        auto dH = [&](int comp) {
            PhasePoint a = x, b = x;
            double* pa = comp == 0 ? &a.theta : comp == 1 ? &a.q : comp == 2 ? &a.I : &a.p;
            double* pb = comp == 0 ? &b.theta : comp == 1 ? &b.q : comp == 2 ? &b.I : &b.p;
            *pa += h;
            *pb -= h;
            return (eval_H(p, a) - eval_H(p, b)) / (2 * h);
        };
        const double expect[4] = {dH(2), dH(3), -dH(0), -dH(1)};
        for (int c = 0; c < 4; ++c) {
            const double got = v[c + 1];
            CHECK(std::abs(got - expect[c]) <= 1e-6 * std::max(1.0, std::abs(expect[c])));
        }
    }
}

TEST_CASE("potential jet second derivatives match finite differences") {
    std::mt19937_64 rng(5);
    Perturbation f({{1, 0, 0, 1.0, 0.0}, {0, 1, 0, 1.0, 0.0}, {2, 1, -1, 0.3, 1.1}});
    const ModelParams p = make(0.16, 0.3, f);
    const double h = 1e-5;
    for (int i = 0; i < 30; ++i) {
        const PhasePoint x = random_point(rng);
        const PotentialJet w = potential_jet(p, x.t, x.theta, x.q);
        const PotentialJet tp = potential_jet(p, x.t + h, x.theta, x.q), tm = potential_jet(p, x.t - h, x.theta, x.q);
        const PotentialJet ap = potential_jet(p, x.t, x.theta + h, x.q), am = potential_jet(p, x.t, x.theta - h, x.q);
        const PotentialJet qp = potential_jet(p, x.t, x.theta, x.q + h), qm = potential_jet(p, x.t, x.theta, x.q - h);
        CHECK(w.w_tt == doctest::Approx((tp.w_t - tm.w_t) / (2 * h)).epsilon(1e-6).scale(1));
        CHECK(w.w_ttheta == doctest::Approx((tp.w_theta - tm.w_theta) / (2 * h)).epsilon(1e-6).scale(1));
        CHECK(w.w_tq == doctest::Approx((qp.w_t - qm.w_t) / (2 * h)).epsilon(1e-6).scale(1));
        CHECK(w.w_thth == doctest::Approx((ap.w_theta - am.w_theta) / (2 * h)).epsilon(1e-6).scale(1));
        CHECK(w.w_thq == doctest::Approx((qp.w_theta - qm.w_theta) / (2 * h)).epsilon(1e-6).scale(1));
        CHECK(w.w_qq == doctest::Approx((qp.w_q - qm.w_q) / (2 * h)).epsilon(1e-6).scale(1));
        const PotentialJet g = potential_gradient(p, x.t, x.theta, x.q);
        CHECK(g.w == doctest::Approx(w.w).epsilon(1e-14));
        CHECK(g.w_q == doctest::Approx(w.w_q).epsilon(1e-14));
    }
}

TEST_CASE("torus family is invariant for every mu") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        PhasePoint x = random_point(rng);
        x.q = std::round(x.q);
        x.p = 0.0;
        const Tangent v = vector_field(make(0.25, 0.7), x);
        CHECK(std::abs(v[3]) < 1e-13);
        CHECK(std::abs(v[4]) < 1e-13);
    }
}

TEST_CASE("wrap is idempotent and H is periodic") {
    std::mt19937_64 rng(13);
    const ModelParams p = make(0.25, 0.1);
    for (int i = 0; i < 100; ++i) {
        const PhasePoint x = random_point(rng);
        const PhasePoint w = wrap(x);
        const PhasePoint ww = wrap(w);
        CHECK(w.t >= 0.0);
        CHECK(w.t < 1.0);
        CHECK(w.theta < 1.0);
        CHECK(w.q < 1.0);
        CHECK(ww.t == w.t);
        CHECK(ww.theta == w.theta);
        CHECK(ww.q == w.q);
        CHECK(eval_H(p, w) == doctest::Approx(eval_H(p, x)).epsilon(1e-12));
    }
    CHECK(wrap_unit(-1e-18) == 0.0);
    CHECK(wrap_unit(-0.25) == 0.75);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(make(0.0, 0.0).validate(), DomainError);
    CHECK_THROWS_AS(make(-1.0, 0.0).validate(), DomainError);
    CHECK_THROWS_AS(make(0.25, -1e-3).validate(), DomainError);
    CHECK_THROWS_AS(make(0.25, NAN).validate(), DomainError);
    CHECK_NOTHROW(make(0.25, 0.0).validate());
    CHECK(Perturbation::arnold().is_arnold());
    CHECK_FALSE(Perturbation({{1, 0, 0, 1.0, 0.0}}).is_arnold());
}
