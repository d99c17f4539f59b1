#include <cmath>

#include "adiff/errors.hpp"
#include "adiff/experiments.hpp"
#include "doctest.h"

using namespace adiff;

namespace {

ModelParams make(double eps, double mu) {
    ModelParams p;
    p.epsilon = eps;
    p.mu = mu;
    return p;
}

std::vector<ScalingSample> synthetic(double (*law)(double)) {
    std::vector<ScalingSample> s;
    for (double mu : {3.2e-3, 4e-4, 1.6e-3, 8e-4}) s.push_back({mu, law(mu), law(mu)});
    return s;
}

}  // namespace

TEST_CASE("scaling fit recovers the log law") {
    const ScalingFit f = fit_scaling(synthetic([](double mu) { return 5.0 * std::abs(std::log(mu)) / mu; }));
    CHECK(std::abs(f.C1 - 5.0) <= 0.05);
    CHECK(f.preferred == 1);
    CHECK(f.rms1 <= 1e-12);
    CHECK(f.samples.front().mu == doctest::Approx(4e-4));
    CHECK(f.decreasing());
}

TEST_CASE("scaling fit recovers the inverse square law") {
    const ScalingFit f = fit_scaling(synthetic([](double mu) { return 3.0 / (mu * mu); }));
    CHECK(std::abs(f.C2 - 3.0) <= 0.03);
    CHECK(f.preferred == 2);
}

TEST_CASE("scaling fit preconditions") {
    CHECK_THROWS_AS(fit_scaling({{1e-3, 1.0, 1.0}, {2e-3, 1.0, 1.0}}), DomainError);
    CHECK_THROWS_AS(fit_scaling({{1e-3, 1.0, 1.0}, {2e-3, -1.0, 1.0}, {4e-3, 1.0, 1.0}}), DomainError);
    const ModelParams p = make(0.25, 0.0);
    CHECK_THROWS_AS(time_scaling(p, {1e-3, 2e-3, 3e-3}, 0.0, 0.1), DomainError);
    CHECK_THROWS_AS(time_scaling(p, {1e-3, 2e-3, 3e-3, 4e-3}, 0.0, 0.1), DomainError);
}

TEST_CASE("time scaling with every run failing reports the failure") {
    const ModelParams p = make(0.25, 0.0);
    CHECK_THROWS_AS(time_scaling(p, {1e-3, 2e-3, 4e-3, 8e-3}, 0.0, 0.1, DriftOptions{.c = 0.8, .mu_max = 1e-3}),
                    NumericalError);
}

TEST_CASE("gap report arithmetic") {
    const auto rows = gap_report({1e-2, 1e-4}, 1.0);
    CHECK(rows[0].gap == doctest::Approx(0.1));
    CHECK(rows[0].step == doctest::Approx(0.01));
    CHECK(rows[0].ratio == doctest::Approx(10.0));
    CHECK(rows[1].ratio == doctest::Approx(100.0));
    const auto many = gap_report({1e-1, 1e-2, 1e-3, 1e-4, 1e-5}, 0.7);
    for (std::size_t i = 0; i + 1 < many.size(); ++i) CHECK(many[i + 1].ratio > many[i].ratio);
    CHECK_THROWS_AS(gap_report({0.0}, 1.0), DomainError);
    CHECK_THROWS_AS(gap_report({1e-3}, 0.0), DomainError);
}

TEST_CASE("decay fit on exact exponentials") {
    const DecayFit f = fit_decay({10, 20, 40}, {2.0 * std::exp(-5.0), 2.0 * std::exp(-10.0), 2.0 * std::exp(-20.0)});
    CHECK(f.rate == doctest::Approx(0.5));
    CHECK(f.log_prefactor == doctest::Approx(std::log(2.0)));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_decay({1, 2}, {1.0, 0.0}), DomainError);
    CHECK_THROWS_AS(fit_decay({1, 1}, {1.0, 2.0}), DomainError);
}

TEST_CASE("drift run annotates the failing stage") {
    try {
        drift_run(make(0.25, 0.0), 0.0, 0.1);
        FAIL("expected failure");
    } catch (const StageError& e) {
        CHECK(e.stage() == "chain");
        CHECK(e.kind() == "ChainBroken");
        CHECK(e.category() == ErrorCategory::Numerical);
    }
    CHECK_THROWS_AS(drift_run(make(0.25, 0.2), 0.0, 0.1), DomainError);
    try {
        drift_run(make(0.25, 0.0), 0.2, 0.2);
        FAIL("expected failure");
    } catch (const StageError& e) {
        CHECK(e.stage() == "seed");
        CHECK(e.kind() == "NoCriticalPoint");
    }
}

TEST_CASE("drift run with equal levels gives the homoclinic orbit") {
    const DriftResult r = drift_run(make(0.25, 1e-3), 0.4, 0.4);
    CHECK(r.schedule.k() == 0);
    CHECK(r.orbit.segments.size() == 2);
    CHECK(r.orbit.max_junction_defect <= 1e-6);
}

TEST_CASE("short drift run") {
    const DriftResult r = drift_run(make(0.25, 5e-3), 0.1, 0.13);
    CHECK(r.orbit.I_min <= 0.1 + r.orbit.margin);
    CHECK(r.orbit.I_max >= 0.13 - r.orbit.margin);
    CHECK(r.orbit.max_junction_defect <= 1e-6);
    CHECK(r.orbit.reintegration_error <= 1e-5);
    CHECK(r.minimum.gradient_norm <= 1e-8);
}

TEST_CASE("anti-integrable defect decays with the dwell") {
    const ModelParams p = make(0.01, 1e-3);
    JunctionVariables jv;
    jv.t = {0.1, 0.3};
    jv.theta = {0.0, 0.0};
    std::vector<double> taus, defects;
    for (int tau : {6, 12}) {
        const AntiIntegrableSample s = anti_integrable_defect(p, 0.0, jv, tau);
        taus.push_back(tau);
        defects.push_back(s.defect);
    }
    CHECK(std::abs(defects[1]) < std::abs(defects[0]));
    const DecayFit f = fit_decay(taus, defects);
    CHECK(f.rate > 0.0);
    CHECK_THROWS_AS(anti_integrable_defect(p, 0.0, JunctionVariables{}, 10), DomainError);
}
