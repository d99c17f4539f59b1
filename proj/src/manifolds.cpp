#include "adiff/manifolds.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "adiff/errors.hpp"
#include "adiff/parallel.hpp"
#include "adiff/pendulum.hpp"
#include "adiff/propagate.hpp"

namespace adiff {

std::string to_string(Branch b) { return b == Branch::Plus ? "plus" : "minus"; }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Launch {
    double sign = 1.0;    // side of the torus, sign of q
    double delta = 0.0;   // launch distance |q|
    double dir = 1.0;     // +1 integrates forward to the node (Plus), -1 backward (Minus)
};

Launch launch_geometry(const ModelParams& params, Branch branch, double q, const ShootingOptions& opt) {
    Launch l;
    l.sign = q > 0.0 ? 1.0 : -1.0;
    l.delta = opt.offset_scale * 2.0 * params.sqrt_epsilon();
    if (std::abs(q) <= 2.0 * l.delta) l.delta = 0.5 * std::abs(q);
    l.dir = branch == Branch::Plus ? 1.0 : -1.0;
    return l;
}

// Unperturbed time of flight from |q| = delta to |q|.
double flight_time(double lambda, double delta, double q) {
    return std::log(std::tan(0.5 * kPi * std::abs(q)) / std::tan(0.5 * kPi * delta)) / lambda;
}

struct Trial {
    double duration = 0.0;
    double launch_theta = 0.0;
    double launch_time = 0.0;
    State4 launch{};
    Propagation prop;
    Eigen::Vector2d miss = Eigen::Vector2d::Constant(kInf);
    bool ok = false;

    double residual() const { return ok ? miss.cwiseAbs().maxCoeff() : kInf; }
};

class Shooter {
public:
    Shooter(const ModelParams& params, double a, Branch branch, double t, double theta, double q,
            const ShootingOptions& opt)
        : params_(params), a_(a), t_(t), theta_(theta), q_(q), opt_(opt),
          geo_(launch_geometry(params, branch, q, opt)), lambda_(params.lyapunov()) {}

    Trial evaluate(double duration, double launch_theta) const {
        Trial tr;
        tr.duration = duration;
        tr.launch_theta = launch_theta;
        tr.launch_time = t_ - geo_.dir * duration;
        tr.launch = {launch_theta, geo_.sign * geo_.delta, a_, geo_.dir * geo_.sign * lambda_ * geo_.delta};
        try {
            tr.prop = propagate_full(params_, a_, tr.launch_time, tr.launch, t_, opt_.step, true);
        } catch (const NumericalError&) {
            return tr;
        }
        tr.miss = {tr.prop.y[0] - theta_, tr.prop.y[1] - q_};
        tr.ok = std::isfinite(tr.miss[0]) && std::isfinite(tr.miss[1]);
        return tr;
    }

    // Columns: derivative of the node state with respect to the duration and the launch angle.
    Eigen::Matrix<double, 4, 2> tangents(const Trial& tr) const {
        const State4 f = field4(params_, tr.launch_time, tr.launch);
        const Eigen::Vector4d fl(f[0], f[1], f[2], f[3]);
        Eigen::Matrix<double, 4, 2> v;
        v.col(0) = geo_.dir * (tr.prop.phi * fl);
        v.col(1) = tr.prop.phi.col(0);
        return v;
    }

    Trial newton(Trial tr) const {
        for (int it = 0; it < opt_.max_iterations && tr.residual() > opt_.tolerance; ++it) {
            const Eigen::Matrix<double, 4, 2> v = tangents(tr);
            const Eigen::Matrix2d jac = v.topRows<2>();
            if (std::abs(jac.determinant()) < 1e-300) break;
            Eigen::Vector2d dx = -jac.partialPivLu().solve(tr.miss);
            double scale = 1.0;
            if (std::abs(dx[0]) > 0.5) scale = std::min(scale, 0.5 / std::abs(dx[0]));
            if (std::abs(dx[1]) > 0.1) scale = std::min(scale, 0.1 / std::abs(dx[1]));
            dx *= scale;
            bool accepted = false;
            double s = 1.0;
            for (int k = 0; k < 12 && !accepted; ++k, s *= 0.5) {
                const double dur = tr.duration + s * dx[0];
                if (dur <= 0.0) continue;
                Trial cand = evaluate(dur, tr.launch_theta + s * dx[1]);
                if (cand.residual() < tr.residual()) {
                    tr = std::move(cand);
                    accepted = true;
                }
            }
            if (!accepted) break;
        }
        return tr;
    }

    ShootingSeed default_seed() const {
        const double d = flight_time(lambda_, geo_.delta, q_);
        return {d, theta_ - geo_.dir * a_ * d};
    }

    const Launch& geometry() const { return geo_; }

private:
    const ModelParams& params_;
    double a_, t_, theta_, q_;
    ShootingOptions opt_;
    Launch geo_;
    double lambda_;
};

ManifoldPoint torus_point(const ModelParams& params, double a, Branch branch, double t, double theta) {
    ManifoldPoint m;
    m.a = a;
    m.branch = branch;
    m.t = t;
    m.theta = theta;
    m.q = 0.0;
    m.value = 0.0;
    m.I = a;
    m.p = 0.0;
    m.energy = 0.5 * a * a;
    // Only the unperturbed transverse curvature is known in closed form at the torus.
    m.hessian[2][2] = (branch == Branch::Plus ? 1.0 : -1.0) * params.lyapunov();
    return m;
}

}  // namespace

ShootingSeed separatrix_seed(const ModelParams& params, double a, Branch branch, double theta, double q,
                             const ShootingOptions& opt) {
    const Launch g = launch_geometry(params, branch, q, opt);
    const double d = flight_time(params.lyapunov(), g.delta, q);
    return {d, theta - g.dir * a * d};
}

ManifoldPoint shoot_manifold_point(const ModelParams& params, double a, Branch branch, double t, double theta,
                                   double q, const ShootingOptions& opt, const std::optional<ShootingSeed>& seed) {
    params.validate();
    if (!(std::abs(q) < 1.0) || !std::isfinite(t) || !std::isfinite(theta) || !std::isfinite(a))
        throw DomainError("manifold point requires finite (t, theta, a) and q in (-1, 1)");
    if (q == 0.0) return torus_point(params, a, branch, t, theta);

    const Shooter shooter(params, a, branch, t, theta, q, opt);
    const ShootingSeed base = shooter.default_seed();
    Trial best;
    auto attempt = [&](const ShootingSeed& s) {
        Trial tr = shooter.newton(shooter.evaluate(s.duration, s.launch_theta));
        if (tr.residual() < best.residual()) best = std::move(tr);
        return best.residual() <= opt.tolerance;
    };
    bool done = false;
    if (seed) done = attempt(*seed);
    if (!done) done = attempt(base);
    for (int k = 1; k <= opt.restarts && !done; ++k) {
        const double sgn = (k % 2 == 1) ? 1.0 : -1.0;
        const double dur = base.duration * (1.0 + 0.08 * sgn * ((k + 1) / 2));
        const double th = base.launch_theta - 0.025 * sgn * ((k + 1) / 2);
        done = attempt({dur, th});
    }
    if (!(best.residual() <= opt.accept)) {
        std::ostringstream os;
        os << to_string(branch) << " manifold of T(" << a << ") missed (t=" << t << ", theta=" << theta
           << ", q=" << q << ") by " << best.residual();
        throw ShootingFailure(os.str());
    }

    const Launch& g = shooter.geometry();
    const State4& y = best.prop.y;
    ManifoldPoint m;
    m.a = a;
    m.branch = branch;
    m.t = t;
    m.theta = theta;
    m.q = q;
    const double tail = pendulum::s0(params.epsilon, g.delta);
    m.value = (branch == Branch::Plus ? tail : -tail) + best.prop.action;
    m.I = y[2];
    m.p = y[3];
    m.energy = eval_H(params, to_point(t, y));
    m.seed = {best.duration, best.launch_theta};
    m.residual = best.residual();

    // The two launch tangents span the manifold slice at time t; (I, p) over (theta, q) gives S's Hessian.
    const Eigen::Matrix<double, 4, 2> v = shooter.tangents(best);
    const Eigen::Matrix2d slope = v.bottomRows<2>() * v.topRows<2>().inverse();
    const double s_thth = slope(0, 0), s_qq = slope(1, 1);
    const double s_thq = 0.5 * (slope(0, 1) + slope(1, 0));
    const PotentialJet w = potential_jet(params, t, y[0], y[1]);
    const double s_tth = -(w.w_theta + m.I * s_thth + m.p * s_thq);
    const double s_tq = -(w.w_q + m.I * s_thq + m.p * s_qq);
    const double s_tt = -(w.w_t + m.I * s_tth + m.p * s_tq);
    m.hessian = {{{s_tt, s_tth, s_tq}, {s_tth, s_thth, s_thq}, {s_tq, s_thq, s_qq}}};
    return m;
}

void GridResolution::validate() const {
    if (n_t < 16 || n_theta < 16 || n_q < 32)
        throw DomainError("grid resolution must be at least (16, 16, 32)");
}

std::vector<double> fd_weights(double x0, const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    if (n < 2) throw DomainError("finite-difference stencil needs two nodes");
    // c[i][d]: weight of node i for derivative order d (d = 0, 1).
    std::vector<std::array<double, 2>> c(n, {0.0, 0.0});
    double c1 = 1.0, c4 = x[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, 1);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = c[i][1];
    return w;
}

std::vector<double> periodic_derivative_matrix(int n) {
    if (n < 2) throw DomainError("periodic differentiation needs two samples");
    std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int m = 0; m < n; ++m) {
            if (j == m) continue;
            const int k = j - m;
            const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
            const double arg = kPi * k / n;
            d[static_cast<std::size_t>(j) * n + m] =
                n % 2 == 0 ? kPi * sgn / std::tan(arg) : kPi * sgn / std::sin(arg);
        }
    }
    return d;
}

GeneratingFunctionGrid compute_generating_function(const ModelParams& params, double a, Branch branch,
                                                   const GridResolution& resolution, const ShootingOptions& opt) {
    params.validate();
    resolution.validate();
    GeneratingFunctionGrid g;
    g.params = params;
    g.a = a;
    g.branch = branch;
    g.resolution = resolution;
    const std::size_t total = static_cast<std::size_t>(resolution.n_t) * resolution.n_theta * resolution.n_q;
    g.values.assign(total, 0.0);
    g.momentum_I.assign(total, a);
    g.momentum_p.assign(total, 0.0);

    const double lambda = params.lyapunov();
    const int nq = resolution.n_q;
    // Nodes ordered outward from q = 0 on each side; each solve seeds the next.
    std::vector<int> up, down;
    for (int k = 0; k < nq; ++k) {
        const double q = g.q_node(k);
        if (std::abs(q) < 1e-14) continue;
        (q > 0 ? up : down).push_back(k);
    }
    std::reverse(down.begin(), down.end());

    parallel_for(static_cast<std::size_t>(resolution.n_t) * resolution.n_theta, [&](std::size_t col) {
        const int i = static_cast<int>(col / resolution.n_theta);
        const int j = static_cast<int>(col % resolution.n_theta);
        const double t = g.t_node(i), theta = g.theta_node(j);
        for (const auto* side : {&up, &down}) {
            std::optional<ShootingSeed> seed;
            double prev_flight = 0.0;
            for (int k : *side) {
                const double q = g.q_node(k);
                const double flight = flight_time(lambda, launch_geometry(params, branch, q, opt).delta, q);
                if (seed) {
                    const double dt = flight - prev_flight;
                    seed->duration += dt;
                    seed->launch_theta -= (branch == Branch::Plus ? 1.0 : -1.0) * a * dt;
                }
                const ManifoldPoint m = shoot_manifold_point(params, a, branch, t, theta, q, opt, seed);
                const std::size_t idx = g.index(i, j, k);
                g.values[idx] = m.value;
                g.momentum_I[idx] = m.I;
                g.momentum_p[idx] = m.p;
                seed = m.seed;
                prev_flight = flight;
            }
        }
    });

    const std::vector<double> res = hj_residual_field(g);
    g.hj_residual = 0.0;
    for (double r : res) g.hj_residual = std::max(g.hj_residual, std::abs(r));
    return g;
}

std::vector<double> hj_residual_field(const GeneratingFunctionGrid& g) {
    const int nt = g.resolution.n_t, nth = g.resolution.n_theta, nq = g.resolution.n_q;
    const std::vector<double> dt = periodic_derivative_matrix(nt);
    const std::vector<double> dth = periodic_derivative_matrix(nth);
    const int width = std::min(9, nq);
    std::vector<int> start(nq);
    std::vector<std::vector<double>> wq(nq);
    for (int k = 0; k < nq; ++k) {
        start[k] = std::clamp(k - width / 2, 0, nq - width);
        std::vector<double> nodes(width);
        for (int s = 0; s < width; ++s) nodes[s] = g.q_node(start[k] + s);
        wq[k] = fd_weights(g.q_node(k), nodes);
    }
    std::vector<double> out(g.values.size());
    for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < nth; ++j) {
            for (int k = 0; k < nq; ++k) {
                double s_t = 0.0, s_th = 0.0, s_q = 0.0;
                for (int m = 0; m < nt; ++m) s_t += dt[static_cast<std::size_t>(i) * nt + m] * g.at(m, j, k);
                for (int m = 0; m < nth; ++m) s_th += dth[static_cast<std::size_t>(j) * nth + m] * g.at(i, m, k);
                for (int s = 0; s < width; ++s) s_q += wq[k][s] * g.at(i, j, start[k] + s);
                const double t = g.t_node(i), theta = g.theta_node(j), q = g.q_node(k);
                const double I = g.a + s_th;
                const double w = potential_gradient(g.params, t, theta, q).w;
                out[g.index(i, j, k)] = s_t + 0.5 * I * I + 0.5 * s_q * s_q + w - 0.5 * g.a * g.a;
            }
        }
    }
    return out;
}

double SplittingField::affine(double t, double theta) const {
    return (a - a_prime) * theta - 0.5 * (a * a - a_prime * a_prime) * t;
}

namespace {

struct Cell {
    int i0, i1, j0, j1;
    double x, y;
};

Cell locate(const SplittingField& f, double t, double theta) {
    auto split = [](double v, int n, int& lo, int& hi, double& frac) {
        const double u = v * n;
        const double fl = std::floor(u);
        frac = u - fl;
        long long idx = static_cast<long long>(fl) % n;
        if (idx < 0) idx += n;
        lo = static_cast<int>(idx);
        hi = (lo + 1) % n;
    };
    Cell c{};
    split(t, f.n_t, c.i0, c.i1, c.x);
    split(theta, f.n_theta, c.j0, c.j1, c.y);
    return c;
}

struct Hermite {
    double h0, h1, g0, g1;     // value basis at the two ends: h0 f(0) + h1 f'(0) + g0 f(1) + g1 f'(1)
    double dh0, dh1, dg0, dg1; // derivatives with respect to the local coordinate
};

Hermite hermite(double x) {
    const double x2 = x * x, x3 = x2 * x;
    return {2 * x3 - 3 * x2 + 1, x3 - 2 * x2 + x, -2 * x3 + 3 * x2, x3 - x2,
            6 * x2 - 6 * x,      3 * x2 - 4 * x + 1, -6 * x2 + 6 * x, 3 * x2 - 2 * x};
}

// Returns (value, d/dt, d/dtheta) of the interpolated periodic part.
std::array<double, 3> interpolate(const SplittingField& f, double t, double theta) {
    const Cell c = locate(f, t, theta);
    const double ht = 1.0 / f.n_t, hth = 1.0 / f.n_theta;
    const Hermite bx = hermite(c.x), by = hermite(c.y);
    const std::array<int, 2> is{c.i0, c.i1}, js{c.j0, c.j1};
    const std::array<double, 2> vx{bx.h0, bx.g0}, sx{bx.h1, bx.g1}, dvx{bx.dh0, bx.dg0}, dsx{bx.dh1, bx.dg1};
    const std::array<double, 2> vy{by.h0, by.g0}, sy{by.h1, by.g1}, dvy{by.dh0, by.dg0}, dsy{by.dh1, by.dg1};
    std::array<double, 3> r{0.0, 0.0, 0.0};
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
            const std::size_t k = f.index(is[p], js[q]);
            const double v = f.periodic[k], ft = ht * f.d_t[k], fth = hth * f.d_theta[k];
            const double ftth = ht * hth * f.d_t_theta[k];
            r[0] += v * vx[p] * vy[q] + ft * sx[p] * vy[q] + fth * vx[p] * sy[q] + ftth * sx[p] * sy[q];
            r[1] += (v * dvx[p] * vy[q] + ft * dsx[p] * vy[q] + fth * dvx[p] * sy[q] + ftth * dsx[p] * sy[q]) / ht;
            r[2] += (v * vx[p] * dvy[q] + ft * sx[p] * dvy[q] + fth * vx[p] * dsy[q] + ftth * sx[p] * dsy[q]) / hth;
        }
    }
    return r;
}

}  // namespace

double SplittingField::value(double t, double theta) const { return interpolate(*this, t, theta)[0] + affine(t, theta); }

std::array<double, 2> SplittingField::gradient(double t, double theta) const {
    const std::array<double, 3> r = interpolate(*this, t, theta);
    return {r[1] - 0.5 * (a * a - a_prime * a_prime), r[2] + (a - a_prime)};
}

SigmaJet sigma_jet(const ModelParams& params, double a, double a_prime, double t, double theta,
                   const ShootingOptions& opt, const std::optional<ShootingSeed>& plus_seed,
                   const std::optional<ShootingSeed>& minus_seed) {
    SigmaJet s;
    s.plus = shoot_manifold_point(params, a, Branch::Plus, t, theta, 0.5, opt, plus_seed);
    s.minus = shoot_manifold_point(params, a_prime, Branch::Minus, t, theta, -0.5, opt, minus_seed);
    s.jet.value = s.plus.value - s.minus.value + (a - a_prime) * theta - 0.5 * (a * a - a_prime * a_prime) * t;
    s.jet.grad = {s.minus.energy - s.plus.energy, s.plus.I - s.minus.I};
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) s.jet.hess[r][c] = s.plus.hessian[r][c] - s.minus.hessian[r][c];
    return s;
}

SplittingField sigma(const ModelParams& params, double a, double a_prime, const GridResolution& resolution,
                     const ShootingOptions& opt) {
    params.validate();
    resolution.validate();
    if (!(std::abs(a - a_prime) <= 0.1)) throw DomainError("sigma requires |a - a'| <= 0.1");
    SplittingField f;
    f.params = params;
    f.a = a;
    f.a_prime = a_prime;
    f.n_t = resolution.n_t;
    f.n_theta = resolution.n_theta;
    const std::size_t total = static_cast<std::size_t>(f.n_t) * f.n_theta;
    f.periodic.assign(total, 0.0);
    f.d_t.assign(total, 0.0);
    f.d_theta.assign(total, 0.0);
    f.d_t_theta.assign(total, 0.0);
    f.p_jump.assign(total, 0.0);
    parallel_for(static_cast<std::size_t>(f.n_t), [&](std::size_t row) {
        const int i = static_cast<int>(row);
        const double t = static_cast<double>(i) / f.n_t;
        std::optional<ShootingSeed> ps, ms;
        for (int j = 0; j < f.n_theta; ++j) {
            const double theta = static_cast<double>(j) / f.n_theta;
            const SigmaJet s = sigma_jet(params, a, a_prime, t, theta, opt, ps, ms);
            const std::size_t k = f.index(i, j);
            f.periodic[k] = s.plus.value - s.minus.value;
            f.d_t[k] = (0.5 * a * a - s.plus.energy) - (0.5 * a_prime * a_prime - s.minus.energy);
            f.d_theta[k] = (s.plus.I - a) - (s.minus.I - a_prime);
            f.d_t_theta[k] = s.jet.hess[0][1];
            f.p_jump[k] = std::abs(s.plus.p - s.minus.p);
            ps = s.plus.seed;
            ms = s.minus.seed;
            const double step = 1.0 / f.n_theta;
            ps->launch_theta += step;
            ms->launch_theta += step;
        }
    });
    return f;
}

SplittingField splitting_delta(const ModelParams& params, double a, const GridResolution& resolution,
                               const ShootingOptions& opt) {
    return sigma(params, a, a, resolution, opt);
}

namespace {

using Mat2 = std::array<std::array<double, 2>, 2>;

double hessian_scale(const Mat2& h) {
    return std::max({std::abs(h[0][0]), std::abs(h[0][1]), std::abs(h[1][1])});
}

CriticalClass classify_relative(const Mat2& h) {
    const double s = hessian_scale(h);
    if (s == 0.0) return CriticalClass::Degenerate;
    return classify(h, 1e-6 * s * s);
}

struct ModelSeed {
    double t, theta;
    CriticalClass cls;
};

// Critical points of the first-order model mu M_abar(t, theta) + (a - a') theta - (a^2 - a'^2) t / 2.
std::vector<ModelSeed> model_seeds(const ModelParams& params, double a, double a_prime, int n) {
    const double abar = 0.5 * (a + a_prime);
    const bool closed = params.perturbation.is_arnold();
    auto jet = [&](double t, double th) {
        Jet2 j = closed ? melnikov_closed_form_jet(params.epsilon, abar, t, th)
                        : melnikov_jet(params, abar, t, th);
        Jet2 m;
        m.grad = {params.mu * j.grad[0] - 0.5 * (a * a - a_prime * a_prime), params.mu * j.grad[1] + (a - a_prime)};
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) m.hess[r][c] = params.mu * j.hess[r][c];
        return m;
    };
    std::vector<ModelSeed> out;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            double t = (i + 0.5) / n, th = (k + 0.5) / n;
            bool converged = false;
            Jet2 m;
            for (int it = 0; it < 40; ++it) {
                m = jet(t, th);
                const double gn = std::max(std::abs(m.grad[0]), std::abs(m.grad[1]));
                if (gn <= 1e-13 * std::max(1.0, params.mu)) {
                    converged = true;
                    break;
                }
                const double det = m.hess[0][0] * m.hess[1][1] - m.hess[0][1] * m.hess[1][0];
                if (std::abs(det) < 1e-300) break;
                double dt = -(m.hess[1][1] * m.grad[0] - m.hess[0][1] * m.grad[1]) / det;
                double dth = -(m.hess[0][0] * m.grad[1] - m.hess[1][0] * m.grad[0]) / det;
                const double len = std::hypot(dt, dth);
                if (len > 0.5 / n) {
                    dt *= 0.5 / n / len;
                    dth *= 0.5 / n / len;
                }
                t += dt;
                th += dth;
            }
            if (!converged) continue;
            t = wrap_unit(t);
            th = wrap_unit(th);
            bool dup = false;
            for (const auto& s : out) dup = dup || torus_distance(s.t, s.theta, t, th) < 1e-6;
            if (!dup) out.push_back({t, th, classify_relative(m.hess)});
        }
    }
    auto rank = [](CriticalClass c) { return c == CriticalClass::Minimum ? 0 : c == CriticalClass::Saddle ? 1 : 2; };
    std::stable_sort(out.begin(), out.end(), [&](const ModelSeed& x, const ModelSeed& y) { return rank(x.cls) < rank(y.cls); });
    return out;
}

std::optional<Link> refine(const ModelParams& params, double a, double a_prime, double t, double theta,
                           const LinkOptions& opt) {
    std::optional<ShootingSeed> ps, ms;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        SigmaJet s;
        try {
            s = sigma_jet(params, a, a_prime, t, theta, opt.shooting, ps, ms);
        } catch (const ShootingFailure&) {
            return std::nullopt;
        }
        ps = s.plus.seed;
        ms = s.minus.seed;
        const auto& g = s.jet.grad;
        const auto& h = s.jet.hess;
        const double gn = std::max(std::abs(g[0]), std::abs(g[1]));
        if (gn <= opt.gradient_tolerance) {
            Link l;
            l.a = a;
            l.a_prime = a_prime;
            l.t = t;
            l.theta = theta;
            l.value = s.jet.value;
            l.hessian = h;
            l.gradient_norm = gn;
            l.classification = classify_relative(h);
            l.plus = s.plus;
            l.minus = s.minus;
            return l;
        }
        const double det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if (std::abs(det) < 1e-300) return std::nullopt;
        double dt = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
        double dth = -(h[0][0] * g[1] - h[1][0] * g[0]) / det;
        const double len = std::hypot(dt, dth);
        if (len > 0.05) {
            dt *= 0.05 / len;
            dth *= 0.05 / len;
        }
        // Shift the launch angles with the node so the warm start stays on target.
        ps->launch_theta += dth;
        ms->launch_theta += dth;
        t += dt;
        theta += dth;
    }
    return std::nullopt;
}

// Gradient on a small circle must follow the Hessian, which excludes a second critical point inside.
bool check_isolated(const ModelParams& params, const Link& l, const LinkOptions& opt) {
    if (l.classification == CriticalClass::Degenerate || l.classification == CriticalClass::Maximum) return false;
    const double r = opt.isolation_radius;
    for (int k = 0; k < 4; ++k) {
        const double ang = 0.5 * kPi * k;
        const double dt = r * std::cos(ang), dth = r * std::sin(ang);
        SigmaJet s;
        try {
            s = sigma_jet(params, l.a, l.a_prime, l.t + dt, l.theta + dth, opt.shooting, l.plus.seed, l.minus.seed);
        } catch (const ShootingFailure&) {
            return false;
        }
        const double ht = l.hessian[0][0] * dt + l.hessian[0][1] * dth;
        const double hth = l.hessian[1][0] * dt + l.hessian[1][1] * dth;
        const double dev = std::hypot(s.jet.grad[0] - ht, s.jet.grad[1] - hth);
        if (!(dev <= 0.5 * std::hypot(ht, hth))) return false;
    }
    return true;
}

bool usable(const Link& l) { return l.isolated && l.classification == CriticalClass::Minimum; }

}  // namespace

Link find_link(const ModelParams& params, double a, double a_prime, const LinkOptions& opt) {
    params.validate();
    if (!(std::abs(a - a_prime) <= 0.1)) throw DomainError("find_link requires |a - a'| <= 0.1");
    std::ostringstream where;
    where << "Sigma(" << a << ", " << a_prime << ")";
    if (params.mu == 0.0 || params.perturbation.empty())
        throw NoCriticalPoint(where.str() + " is affine without perturbation");
    const std::vector<ModelSeed> seeds = model_seeds(params, a, a_prime, opt.seed_grid);
    if (seeds.empty()) throw NoCriticalPoint(where.str() + ": first-order model has no critical point");
    std::optional<Link> fallback;
    for (const ModelSeed& s : seeds) {
        if (s.cls == CriticalClass::Maximum || s.cls == CriticalClass::Degenerate) continue;
        std::optional<Link> l = refine(params, a, a_prime, s.t, s.theta, opt);
        if (!l || l->classification == CriticalClass::Maximum || l->classification == CriticalClass::Degenerate)
            continue;
        l->isolated = check_isolated(params, *l, opt);
        if (l->classification == CriticalClass::Minimum) return *l;
        if (!fallback) fallback = l;
    }
    if (fallback) return *fallback;
    throw NoCriticalPoint(where.str() + ": Newton failed from every seed");
}

double ChainSchedule::max_spacing() const {
    double m = 0.0;
    for (std::size_t i = 1; i < levels.size(); ++i) m = std::max(m, levels[i] - levels[i - 1]);
    return m;
}

ChainSchedule build_chain(const ModelParams& params, double a_minus, double a_plus, double c,
                          const LinkOptions& opt) {
    params.validate();
    if (!(a_minus <= a_plus)) throw DomainError("build_chain requires a- <= a+");
    if (!(c > 0.0)) throw DomainError("build_chain requires c > 0");
    ChainSchedule out;
    out.c_used = c;
    if (a_minus == a_plus) {
        out.levels = {a_minus};
        return out;
    }
    if (params.mu == 0.0 || params.perturbation.empty()) throw ChainBroken(1, "no links without perturbation");

    int failed = 0;
    std::string reason;
    for (int attempt = 0; attempt < 4; ++attempt) {
        const double cc = c / std::pow(2.0, attempt);
        const int k = std::max(1, static_cast<int>(std::ceil((a_plus - a_minus) / (cc * params.mu) - 1e-9)));
        std::vector<double> levels(k + 1);
        for (int i = 0; i <= k; ++i) levels[i] = a_minus + (a_plus - a_minus) * i / k;
        levels[k] = a_plus;
        std::vector<std::optional<Link>> links(k);
        std::vector<std::string> errors(k);
        parallel_for(static_cast<std::size_t>(k), [&](std::size_t i) {
            try {
                Link l = find_link(params, levels[i], levels[i + 1], opt);
                if (usable(l)) links[i] = std::move(l);
                else errors[i] = "critical point is not an isolated minimum";
            } catch (const NumericalError& e) {
                errors[i] = e.what();
            }
        });
        failed = 0;
        for (int i = 0; i < k && failed == 0; ++i) {
            if (!links[i]) {
                failed = i + 1;
                reason = errors[i];
            }
        }
        if (failed == 0) {
            out.levels = std::move(levels);
            out.links.reserve(k);
            for (auto& l : links) out.links.push_back(std::move(*l));
            out.c_used = cc;
            return out;
        }
    }
    throw ChainBroken(failed, reason);
}

double link_threshold(const ModelParams& params, double a, double c_lo, double c_hi, int iterations,
                      const LinkOptions& opt) {
    if (!(0.0 < c_lo && c_lo < c_hi)) throw DomainError("link_threshold requires 0 < c_lo < c_hi");
    auto ok = [&](double c) {
        try {
            return usable(find_link(params, a, a + c * params.mu, opt));
        } catch (const NumericalError&) {
            return false;
        }
    };
    if (!ok(c_lo)) return c_lo;
    if (ok(c_hi)) return c_hi;
    double lo = c_lo, hi = c_hi;
    for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? lo : hi) = mid;
    }
    return lo;
}

void write_csv(std::ostream& os, const GeneratingFunctionGrid& g) {
    os << "t,theta,q,S\n" << std::setprecision(17);
    for (int i = 0; i < g.resolution.n_t; ++i)
        for (int j = 0; j < g.resolution.n_theta; ++j)
            for (int k = 0; k < g.resolution.n_q; ++k)
                os << g.t_node(i) << ',' << g.theta_node(j) << ',' << g.q_node(k) << ',' << g.at(i, j, k) << '\n';
}

void write_csv(std::ostream& os, const SplittingField& f) {
    os << "t,theta,sigma\n" << std::setprecision(17);
    for (int i = 0; i < f.n_t; ++i) {
        const double t = static_cast<double>(i) / f.n_t;
        for (int j = -f.n_theta; j <= f.n_theta; ++j) {
            const double theta = static_cast<double>(j) / f.n_theta;
            const int jj = ((j % f.n_theta) + f.n_theta) % f.n_theta;
            os << t << ',' << theta << ',' << f.periodic[f.index(i, jj)] + f.affine(t, theta) << '\n';
        }
    }
}

}  // namespace adiff
