#include "adiff/integrate.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include <boost/math/quadrature/gauss.hpp>

#include "adiff/errors.hpp"
#include "adiff/propagate.hpp"
#include "adiff/rk8.hpp"

namespace adiff {

namespace {

// Integral over [alpha, beta] of the Lagrange basis polynomials on nodes 0..m.
std::vector<double> lagrange_weights(int m, double alpha, double beta) {
    std::vector<double> w(m + 1, 0.0);
    for (int j = 0; j <= m; ++j) {
        std::vector<double> coef{1.0};
        double denom = 1.0;
        for (int i = 0; i <= m; ++i) {
            if (i == j) continue;
            std::vector<double> next(coef.size() + 1, 0.0);
            for (std::size_t k = 0; k < coef.size(); ++k) {
                next[k + 1] += coef[k];
                next[k] -= i * coef[k];
            }
            coef = std::move(next);
            denom *= (j - i);
        }
        double s = 0.0;
        for (std::size_t k = 0; k < coef.size(); ++k) {
            const double e = static_cast<double>(k + 1);
            s += coef[k] * (std::pow(beta, e) - std::pow(alpha, e)) / e;
        }
        w[j] = s / denom;
    }
    return w;
}

OrbitSegment run_flow(const ModelParams& params, const PhasePoint& x0, double duration, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw DomainError("flow step must be positive");
    if (!std::isfinite(duration)) throw DomainError("flow duration must be finite");
    params.validate();
    const double span = std::abs(duration);
    const double dir = duration < 0.0 ? -1.0 : 1.0;
    const double ratio = span / step;
    long n_full = static_cast<long>(std::floor(ratio));
    double last = 0.0;
    if (std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio)) {
        n_full = static_cast<long>(std::round(ratio));
    } else {
        last = span - n_full * step;
    }
    OrbitSegment seg;
    seg.params = params;
    seg.step = step;
    seg.samples.reserve(static_cast<std::size_t>(n_full) + 2);
    seg.samples.push_back(x0);
    State4 y = to_state(x0);
    auto f = [&params](double t, const State4& s, State4& ds) { ds = field4(params, t, s); };
    const double h = dir * step;
    for (long i = 0; i < n_full; ++i) {
        const double t = x0.t + i * h;
        rk8::step<4>(f, t, y, h);
        check_finite(y, t + h, "flow");
        seg.samples.push_back(to_point(x0.t + (i + 1) * h, y));
    }
    if (last > 0.0) {
        const double t = x0.t + n_full * h;
        rk8::step<4>(f, t, y, dir * last);
        check_finite(y, x0.t + duration, "flow");
        seg.samples.push_back(to_point(x0.t + duration, y));
    }
    return seg;
}

}  // namespace

OrbitSegment flow(const ModelParams& params, const PhasePoint& x0, double duration, double step) {
    if (duration < 0.0) throw DomainError("flow duration must be non-negative");
    return run_flow(params, x0, duration, step);
}

OrbitSegment flow_signed(const ModelParams& params, const PhasePoint& x0, double duration, double step) {
    return run_flow(params, x0, duration, step);
}

std::vector<double> newton_cotes_weights(int n) {
    std::vector<double> w(n + 1, 0.0);
    if (n <= 0) return w;
    if (n < 6) {
        return lagrange_weights(n, 0.0, n);
    }
    static const std::vector<double> block = lagrange_weights(6, 0.0, 6.0);
    const int blocks = n / 6;
    for (int b = 0; b < blocks; ++b)
        for (int j = 0; j <= 6; ++j) w[6 * b + j] += block[j];
    const int rem = n - 6 * blocks;
    if (rem > 0) {
        // Last rem intervals from the interpolant through the final seven samples.
        const std::vector<double> tail = lagrange_weights(6, 6.0 - rem, 6.0);
        for (int j = 0; j <= 6; ++j) w[n - 6 + j] += tail[j];
    }
    return w;
}

double action_integral(const OrbitSegment& segment, double a) {
    const auto& s = segment.samples;
    if (s.empty()) throw DomainError("action_integral needs a nonempty segment");
    const int n = static_cast<int>(s.size()) - 1;
    if (n == 0) return 0.0;
    auto integrand = [&](const PhasePoint& x) {
        return reduced_lagrangian(segment.params, a, x.t, x.theta, x.q, x.I, x.p);
    };
    const double h_full = s[1].t - s[0].t;
    const double h_last = s[n].t - s[n - 1].t;
    if (n >= 2 && std::abs(h_last - h_full) > 1e-12 * std::abs(h_full)) {
        // Shortened final step: uniform rule up to n-1, then a cubic over the last interval.
        OrbitSegment head = segment;
        head.samples.pop_back();
        const double uniform = action_integral(head, a);
        const int m = std::min(3, n);
        std::vector<double> x(m + 1), y(m + 1);
        for (int j = 0; j <= m; ++j) {
            x[j] = s[n - m + j].t;
            y[j] = integrand(s[n - m + j]);
        }
        auto interp = [&](double tt) {
            double v = 0.0;
            for (int j = 0; j <= m; ++j) {
                double l = 1.0;
                for (int i = 0; i <= m; ++i)
                    if (i != j) l *= (tt - x[i]) / (x[j] - x[i]);
                v += y[j] * l;
            }
            return v;
        };
        const double lo = s[n - 1].t, hi = s[n].t;
        const double sign = hi >= lo ? 1.0 : -1.0;
        return uniform + sign * boost::math::quadrature::gauss<double, 4>::integrate(interp, std::min(lo, hi),
                                                                                      std::max(lo, hi));
    }
    const std::vector<double> w = newton_cotes_weights(n);
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) sum += w[i] * integrand(s[i]);
    return sum * h_full;
}

void write_csv(std::ostream& os, const std::vector<PhasePoint>& samples) {
    os << "t,theta,q,I,p\n";
    os << std::setprecision(17);
    for (const auto& x : samples) os << x.t << ',' << x.theta << ',' << x.q << ',' << x.I << ',' << x.p << '\n';
}

void write_csv(std::ostream& os, const OrbitSegment& segment) { write_csv(os, segment.samples); }

}  // namespace adiff
