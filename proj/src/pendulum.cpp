#include "adiff/pendulum.hpp"

#include <cmath>
#include <string>

#include "adiff/errors.hpp"
#include "adiff/model.hpp"

namespace adiff::pendulum {

double s0(double epsilon, double q) {
    const double s = std::sin(0.5 * kPi * q);
    // 1 - cos(pi q) = 2 sin^2(pi q / 2)
    return 2.0 * std::sqrt(epsilon) / kPi * 2.0 * s * s;
}

double s0_prime(double epsilon, double q) { return 2.0 * std::sqrt(epsilon) * std::sin(kPi * q); }

double s0_second(double epsilon, double q) { return kTwoPi * std::sqrt(epsilon) * std::cos(kPi * q); }

namespace {
void check_anchor(double q_anchor) {
    if (!(q_anchor > 0.0 && q_anchor < 1.0)) {
        throw DomainError("separatrix anchor must lie in (0,1), got " + std::to_string(q_anchor));
    }
}
}  // namespace

double separatrix_q(double epsilon, double t_anchor, double q_anchor, double s) {
    check_anchor(q_anchor);
    const double lambda = kTwoPi * std::sqrt(epsilon);
    return 2.0 / kPi * std::atan(std::exp(lambda * (s - t_anchor)) * std::tan(0.5 * kPi * q_anchor));
}

double separatrix_p(double epsilon, double t_anchor, double q_anchor, double s) {
    check_anchor(q_anchor);
    const double lambda = kTwoPi * std::sqrt(epsilon);
    // sin(pi q) with q = (2/pi) atan(x) equals 2x / (1 + x^2); avoids cancellation near q = 1.
    const double x = std::exp(lambda * (s - t_anchor)) * std::tan(0.5 * kPi * q_anchor);
    if (!std::isfinite(x)) return 0.0;
    return 2.0 * std::sqrt(epsilon) * 2.0 * x / (1.0 + x * x);
}

double separatrix_potential(double epsilon, double s) {
    const double c = 1.0 / std::cosh(kTwoPi * std::sqrt(epsilon) * s);
    return 2.0 * c * c;
}

}  // namespace adiff::pendulum
