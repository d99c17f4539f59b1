#include "adiff/melnikov.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include <boost/math/quadrature/gauss.hpp>

#include "adiff/errors.hpp"

namespace adiff {

namespace {

using GL16 = boost::math::quadrature::gauss<double, 16>;

// Separatrix through q_anchor in (0,1) at s = 0: returns q(s) and 1 - cos(2 pi q(s)).
struct SepPoint {
    double q;
    double potential;
};

SepPoint sep_point(double lambda, double tan_half, double s) {
    const double x = std::exp(lambda * s) * tan_half;
    if (!std::isfinite(x)) return {1.0, 0.0};
    const double sin_pq = 2.0 * x / (1.0 + x * x);
    return {2.0 / kPi * std::atan(x), 2.0 * sin_pq * sin_pq};
}

double amplitude_sum(const Perturbation& f) {
    double s = 0.0;
    for (const auto& m : f.terms()) s += std::abs(m.amplitude);
    return s;
}

// Integrates eps * F and its (t, theta) derivatives along the separatrix over [lo, hi].
Jet2 integrate_span(const ModelParams& params, double a, double t, double theta, double tan_half, double lo,
                    double hi, bool derivs) {
    const double lambda = params.lyapunov();
    const double width = 0.25 / params.sqrt_epsilon();
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / width - 1e-12)));
    const double h = (hi - lo) / panels;
    const auto& x = GL16::abscissa();
    const auto& w = GL16::weights();
    Jet2 acc;
    auto add = [&](double s, double weight) {
        const SepPoint sp = sep_point(lambda, tan_half, s);
        if (sp.potential == 0.0) return;
        const double ts = t + s, ths = theta + a * s;
        if (!derivs) {
            acc.value += weight * sp.potential * params.perturbation.value(ts, ths, sp.q);
            return;
        }
        const Jet3 j = params.perturbation.jet(ts, ths, sp.q);
        const double c = weight * sp.potential;
        acc.value += c * j.value;
        acc.grad[0] += c * j.grad[0];
        acc.grad[1] += c * j.grad[1];
        acc.hess[0][0] += c * j.hess[0][0];
        acc.hess[0][1] += c * j.hess[0][1];
        acc.hess[1][1] += c * j.hess[1][1];
    };
    for (int p = 0; p < panels; ++p) {
        const double mid = lo + (p + 0.5) * h;
        const double half = 0.5 * h;
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (x[k] == 0.0) {
                add(mid, half * w[k]);
            } else {
                add(mid - half * x[k], half * w[k]);
                add(mid + half * x[k], half * w[k]);
            }
        }
    }
    const double eps = params.epsilon;
    acc.value *= eps;
    acc.grad[0] *= eps;
    acc.grad[1] *= eps;
    acc.hess[0][0] *= eps;
    acc.hess[0][1] *= eps;
    acc.hess[1][1] *= eps;
    acc.hess[1][0] = acc.hess[0][1];
    return acc;
}

double base_window(const ModelParams& params, const MelnikovOptions& opt) {
    return opt.window_scale * std::max(8.0, 12.0 / params.lyapunov());
}

// Window length on one side such that the integrand bound at the cut is below tolerance.
double side_length(const ModelParams& params, double tan_half, double direction, const MelnikovOptions& opt) {
    const double lambda = params.lyapunov();
    const double bound_scale = params.epsilon * amplitude_sum(params.perturbation) / (2.0 * lambda);
    double len = base_window(params, opt);
    for (int d = 0; d <= opt.max_doublings; ++d) {
        const SepPoint sp = sep_point(lambda, tan_half, direction * len);
        // The potential factor decays like exp(-2 lambda |s|) toward the torus.
        const double tail = bound_scale * sp.potential;
        if (tail <= opt.tail_tolerance) return len;
        len *= 2.0;
    }
    throw NonConvergence("Melnikov tail bound above tolerance at the maximum truncation length");
}

void check_params(const ModelParams& params) { params.validate(); }

}  // namespace

double melnikov_plus(const ModelParams& params, double a, double t, double theta, double q,
                     const MelnikovOptions& opt) {
    check_params(params);
    if (!(q > 0.0 && q < 1.0)) throw DomainError("melnikov_plus needs q in (0,1), got " + std::to_string(q));
    if (params.perturbation.empty()) return 0.0;
    const double tan_half = std::tan(0.5 * kPi * q);
    const double len = side_length(params, tan_half, -1.0, opt);
    return integrate_span(params, a, t, theta, tan_half, -len, 0.0, false).value;
}

double melnikov_minus(const ModelParams& params, double a, double t, double theta, double q,
                      const MelnikovOptions& opt) {
    check_params(params);
    if (!(q > -1.0 && q < 1.0) || q == 0.0) {
        throw DomainError("melnikov_minus needs q in (-1,0) or (0,1), got " + std::to_string(q));
    }
    if (params.perturbation.empty()) return 0.0;
    const double anchor = q < 0.0 ? q + 1.0 : q;
    const double tan_half = std::tan(0.5 * kPi * anchor);
    const double len = side_length(params, tan_half, 1.0, opt);
    return integrate_span(params, a, t, theta, tan_half, 0.0, len, false).value;
}

Jet2 melnikov_jet(const ModelParams& params, double a, double t, double theta, const MelnikovOptions& opt) {
    check_params(params);
    if (params.perturbation.empty()) return {};
    const double len_lo = side_length(params, 1.0, -1.0, opt);
    const double len_hi = side_length(params, 1.0, 1.0, opt);
    Jet2 lo = integrate_span(params, a, t, theta, 1.0, -len_lo, 0.0, true);
    const Jet2 hi = integrate_span(params, a, t, theta, 1.0, 0.0, len_hi, true);
    lo.value += hi.value;
    for (int i = 0; i < 2; ++i) {
        lo.grad[i] += hi.grad[i];
        for (int j = 0; j < 2; ++j) lo.hess[i][j] += hi.hess[i][j];
    }
    return lo;
}

double melnikov_total(const ModelParams& params, double a, double t, double theta, const MelnikovOptions& opt) {
    check_params(params);
    if (params.perturbation.empty()) return 0.0;
    const double len_lo = side_length(params, 1.0, -1.0, opt);
    const double len_hi = side_length(params, 1.0, 1.0, opt);
    return integrate_span(params, a, t, theta, 1.0, -len_lo, 0.0, false).value +
           integrate_span(params, a, t, theta, 1.0, 0.0, len_hi, false).value;
}

double melnikov_theta_coefficient(double epsilon, double a) {
    const double k = kPi / (2.0 * std::sqrt(epsilon));
    if (std::abs(k * a) < 1e-8) return 1.0 / k;  // removable singularity of a / sinh(k a)
    return a / std::sinh(k * a);
}

double melnikov_time_coefficient(double epsilon) { return 1.0 / std::sinh(kPi / (2.0 * std::sqrt(epsilon))); }

double melnikov_closed_form(double epsilon, double a, double t, double theta) {
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    return melnikov_theta_coefficient(epsilon, a) * std::cos(kTwoPi * theta) +
           melnikov_time_coefficient(epsilon) * std::cos(kTwoPi * t);
}

double melnikov_closed_form(const ModelParams& params, double a, double t, double theta) {
    if (!params.perturbation.is_arnold()) {
        throw UnsupportedPerturbation("the closed form is available only for f = cos(2 pi theta) + cos(2 pi t)");
    }
    return melnikov_closed_form(params.epsilon, a, t, theta);
}

Jet2 melnikov_closed_form_jet(double epsilon, double a, double t, double theta) {
    const double A = melnikov_theta_coefficient(epsilon, a);
    const double B = melnikov_time_coefficient(epsilon);
    const double ct = std::cos(kTwoPi * t), st = std::sin(kTwoPi * t);
    const double cth = std::cos(kTwoPi * theta), sth = std::sin(kTwoPi * theta);
    Jet2 j;
    j.value = A * cth + B * ct;
    j.grad = {-kTwoPi * B * st, -kTwoPi * A * sth};
    j.hess[0][0] = -kTwoPi * kTwoPi * B * ct;
    j.hess[1][1] = -kTwoPi * kTwoPi * A * cth;
    return j;
}

std::size_t MelnikovField::index(int i, int j) const {
    const int ii = ((i % n) + n) % n;
    const int jj = ((j % n) + n) % n;
    return static_cast<std::size_t>(ii) * n + jj;
}

double MelnikovField::mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

MelnikovField melnikov_field(const ModelParams& params, double a, int n, const MelnikovOptions& opt) {
    if (n < 4) throw DomainError("Melnikov field needs at least 4 nodes per side");
    check_params(params);
    MelnikovField field;
    field.params = params;
    field.a = a;
    field.n = n;
    const std::size_t total = static_cast<std::size_t>(n) * n;
    field.values.assign(total, 0.0);
    field.grad_t.assign(total, 0.0);
    field.grad_theta.assign(total, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const Jet2 jet = melnikov_jet(params, a, static_cast<double>(i) / n, static_cast<double>(j) / n, opt);
            const std::size_t k = field.index(i, j);
            field.values[k] = jet.value;
            field.grad_t[k] = jet.grad[0];
            field.grad_theta[k] = jet.grad[1];
        }
    }
    return field;
}

std::string to_string(CriticalClass c) {
    switch (c) {
        case CriticalClass::Minimum: return "minimum";
        case CriticalClass::Maximum: return "maximum";
        case CriticalClass::Saddle: return "saddle";
        case CriticalClass::Degenerate: return "degenerate";
    }
    return "degenerate";
}

CriticalClass classify(const std::array<std::array<double, 2>, 2>& h, double det_tolerance) {
    const double det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if (std::abs(det) <= det_tolerance) return CriticalClass::Degenerate;
    if (det < 0.0) return CriticalClass::Saddle;
    return h[0][0] + h[1][1] > 0.0 ? CriticalClass::Minimum : CriticalClass::Maximum;
}

double torus_distance(double t1, double th1, double t2, double th2) {
    auto d = [](double x) {
        double r = x - std::round(x);
        return std::abs(r);
    };
    return std::hypot(d(t1 - t2), d(th1 - th2));
}

CriticalPointReport critical_points(const MelnikovField& field, const MelnikovOptions& opt) {
    CriticalPointReport report;
    const int n = field.n;
    double scale = 0.0;
    for (std::size_t k = 0; k < field.values.size(); ++k) {
        scale = std::max({scale, std::abs(field.values[k]), std::abs(field.grad_t[k]), std::abs(field.grad_theta[k])});
    }
    if (scale <= 1e-14) {
        report.degenerate_field = true;
        return report;
    }
    auto changes = [&](const std::vector<double>& g, int i, int j) {
        const double v[4] = {g[field.index(i, j)], g[field.index(i + 1, j)], g[field.index(i, j + 1)],
                             g[field.index(i + 1, j + 1)]};
        return *std::min_element(v, v + 4) <= 0.0 && *std::max_element(v, v + 4) >= 0.0;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (!changes(field.grad_t, i, j) || !changes(field.grad_theta, i, j)) continue;
            double t = (i + 0.5) / n, th = (j + 0.5) / n;
            bool ok = false;
            Jet2 jet;
            for (int it = 0; it < 50; ++it) {
                jet = melnikov_jet(field.params, field.a, t, th, opt);
                const double gn = std::hypot(jet.grad[0], jet.grad[1]);
                if (gn <= 1e-10) {
                    ok = true;
                    break;
                }
                const double det = jet.hess[0][0] * jet.hess[1][1] - jet.hess[0][1] * jet.hess[1][0];
                if (std::abs(det) < 1e-300) break;
                double dt = -(jet.hess[1][1] * jet.grad[0] - jet.hess[0][1] * jet.grad[1]) / det;
                double dth = -(-jet.hess[1][0] * jet.grad[0] + jet.hess[0][0] * jet.grad[1]) / det;
                // Keep each step within one cell so refinement stays near its seed.
                const double cap = 1.0 / n;
                const double len = std::hypot(dt, dth);
                if (len > cap) {
                    dt *= cap / len;
                    dth *= cap / len;
                }
                t += dt;
                th += dth;
            }
            if (!ok) {
                ++report.newton_divergences;
                continue;
            }
            t = wrap_unit(t);
            th = wrap_unit(th);
            bool dup = false;
            for (const auto& p : report.points) {
                if (torus_distance(p.t, p.theta, t, th) <= 1e-6) {
                    dup = true;
                    break;
                }
            }
            if (dup) continue;
            CriticalPoint cp;
            cp.t = t;
            cp.theta = th;
            cp.value = jet.value;
            cp.hessian = jet.hess;
            cp.gradient_norm = std::hypot(jet.grad[0], jet.grad[1]);
            cp.classification = classify(jet.hess);
            cp.nondegenerate = cp.classification != CriticalClass::Degenerate;
            report.points.push_back(cp);
        }
    }
    std::sort(report.points.begin(), report.points.end(), [](const CriticalPoint& x, const CriticalPoint& y) {
        return x.t != y.t ? x.t < y.t : x.theta < y.theta;
    });
    return report;
}

void write_csv(std::ostream& os, const MelnikovField& field) {
    os << "t,theta,M\n" << std::setprecision(17);
    for (int i = 0; i < field.n; ++i)
        for (int j = 0; j < field.n; ++j)
            os << static_cast<double>(i) / field.n << ',' << static_cast<double>(j) / field.n << ','
               << field.at(i, j) << '\n';
}

}  // namespace adiff
