#include "adiff/bessi.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "adiff/errors.hpp"
#include "adiff/parallel.hpp"

namespace adiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using SpMat = Eigen::SparseMatrix<double>;

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Multiple-shooting boundary value problem for one dwell arc.
class Bvp {
public:
    Bvp(const ModelParams& params, double a, const Endpoint& start, const Endpoint& end, double theta_end, int n,
        double step)
        : params_(params), a_(a), start_(start), end_(end), theta_end_(theta_end), n_(n), step_(step) {
        times_.resize(n + 1);
        for (int j = 0; j <= n; ++j) times_[j] = time(j);
    }

    int n() const { return n_; }
    const std::vector<double>& times() const { return times_; }

    double time(int j) const {
        const double w = static_cast<double>(j) / n_;
        return (1.0 - w) * start_.t + w * end_.t;
    }

    // Sum of two separatrix branches joined near the torus, straight in theta.
    std::vector<State4> initial_guess() const {
        const double lambda = params_.lyapunov();
        const double c1 = std::tan(0.5 * kPi * (1.0 - start_.q));
        const double c2 = std::tan(0.5 * kPi * end_.q);
        const double slope = (theta_end_ - start_.theta) / (end_.t - start_.t);
        std::vector<State4> y(n_ + 1);
        for (int j = 0; j <= n_; ++j) {
            const double s = times_[j];
            const double x1 = std::exp(-lambda * (s - start_.t)) * c1;
            const double x2 = std::exp(lambda * (s - end_.t)) * c2;
            const double q = -2.0 / kPi * std::atan(x1) + 2.0 / kPi * std::atan(x2);
            const double p = 2.0 / kPi * lambda * (x1 / (1.0 + x1 * x1) + x2 / (1.0 + x2 * x2));
            y[j] = {start_.theta + slope * (s - start_.t), q, slope, p};
        }
        return y;
    }

    // Piece propagations and the matching residual; false if some piece blew up.
    bool evaluate(const std::vector<State4>& y, std::vector<Propagation>& props, Eigen::VectorXd& r,
                  bool with_phi) const {
        props.resize(n_);
        r.resize(4 * (n_ + 1));
        try {
            for (int j = 0; j < n_; ++j)
                props[j] = propagate_full(params_, a_, times_[j], y[j], times_[j + 1], step_, with_phi);
        } catch (const NumericalError&) {
            return false;
        }
        r[0] = y[0][0] - start_.theta;
        r[1] = y[0][1] - (start_.q - 1.0);
        for (int j = 0; j < n_; ++j)
            for (int c = 0; c < 4; ++c) r[2 + 4 * j + c] = props[j].y[c] - y[j + 1][c];
        r[4 * n_ + 2] = y[n_][0] - theta_end_;
        r[4 * n_ + 3] = y[n_][1] - end_.q;
        return r.allFinite();
    }

    SpMat jacobian(const std::vector<Propagation>& props) const {
        const int dim = 4 * (n_ + 1);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(20 * n_ + 4));
        trip.emplace_back(0, 0, 1.0);
        trip.emplace_back(1, 1, 1.0);
        for (int j = 0; j < n_; ++j) {
            const int row = 2 + 4 * j;
            for (int r = 0; r < 4; ++r) {
                for (int c = 0; c < 4; ++c) trip.emplace_back(row + r, 4 * j + c, props[j].phi(r, c));
                trip.emplace_back(row + r, 4 * (j + 1) + r, -1.0);
            }
        }
        trip.emplace_back(4 * n_ + 2, 4 * n_, 1.0);
        trip.emplace_back(4 * n_ + 3, 4 * n_ + 1, 1.0);
        SpMat J(dim, dim);
        J.setFromTriplets(trip.begin(), trip.end());
        return J;
    }

    // Derivative of the residual with respect to (t1, theta1, t2, theta2).
    Eigen::MatrixXd parameter_jacobian(const std::vector<State4>& y, const std::vector<Propagation>& props) const {
        Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(4 * (n_ + 1), 4);
        dr(0, 1) = -1.0;
        dr(4 * n_ + 2, 3) = -1.0;
        for (int j = 0; j < n_; ++j) {
            const State4 f_end = field4(params_, times_[j + 1], props[j].y);
            const State4 f_start = field4(params_, times_[j], y[j]);
            const Eigen::Vector4d fe(f_end.data());
            const Eigen::Vector4d fs = props[j].phi * Eigen::Vector4d(f_start.data());
            const double w0 = static_cast<double>(j) / n_;
            const double w1 = static_cast<double>(j + 1) / n_;
            dr.block<4, 1>(2 + 4 * j, 0) = fe * (1.0 - w1) - fs * (1.0 - w0);
            dr.block<4, 1>(2 + 4 * j, 2) = fe * w1 - fs * w0;
        }
        return dr;
    }

private:
    const ModelParams& params_;
    double a_;
    Endpoint start_;
    Endpoint end_;
    double theta_end_;
    int n_;
    double step_;
    std::vector<double> times_;
};

DiscreteCurve sample_curve(const ModelParams& params, double a, const std::vector<double>& times,
                           const std::vector<State4>& nodes, const BvpOptions& opt) {
    DiscreteCurve curve;
    curve.a = a;
    const int n = static_cast<int>(nodes.size()) - 1;
    const double piece = times[1] - times[0];
    const int m = std::max(1, static_cast<int>(std::ceil(piece / opt.sample_step - 1e-9)));
    curve.step = piece / m;
    curve.samples.reserve(static_cast<std::size_t>(n) * m + 1);
    for (int j = 0; j < n; ++j) {
        State4 y = nodes[j];
        double s = times[j];
        curve.samples.push_back(to_point(s, y));
        for (int l = 1; l < m; ++l) {
            const double next = times[j] + l * curve.step;
            y = propagate(params, s, y, next, opt.step);
            s = next;
            curve.samples.push_back(to_point(s, y));
        }
    }
    curve.samples.push_back(to_point(times[n], nodes[n]));
    return curve;
}

}  // namespace

double nearest_lift(double theta, double target) { return theta + std::round(target - theta); }

ActionResult action_A(const ModelParams& params, double a, const Endpoint& start, const Endpoint& end,
                      const BvpOptions& opt, const ActionResult* warm, bool with_curve) {
    params.validate();
    if (!std::isfinite(a)) throw DomainError("action_A: level must be finite");
    if (!(end.t > start.t)) throw DomainError("action_A: requires t2 > t1");
    if (!(start.q > 0.0 && start.q <= 1.0)) throw DomainError("action_A: q1 must lie in (0, 1]");
    if (!(end.q >= 0.0 && end.q < 1.0)) throw DomainError("action_A: q2 must lie in [0, 1)");
    if (!(opt.sample_step > 0.0 && opt.sample_step <= 0.05)) throw DomainError("action_A: sample step must be in (0, 1/20]");

    const double span = end.t - start.t;
    const int n = opt.pieces > 0 ? opt.pieces
                                 : std::max(1, static_cast<int>(std::ceil(span / opt.max_piece - 1e-9)));
    const double theta_end = nearest_lift(end.theta, start.theta + a * span);
    Bvp bvp(params, a, start, end, theta_end, n, opt.step);

    std::vector<State4> y;
    if (warm && static_cast<int>(warm->nodes.size()) == n + 1 &&
        std::abs(warm->nodes.back()[0] - theta_end) < 0.5) {
        y = warm->nodes;
    } else {
        y = bvp.initial_guess();
    }

    std::vector<Propagation> props;
    Eigen::VectorXd r;
    if (!bvp.evaluate(y, props, r, true)) {
        y = bvp.initial_guess();
        if (!bvp.evaluate(y, props, r, true))
            throw MinimizationFailure("action_A: initial curve is not finite", kInf, kInf);
    }

    Eigen::SparseLU<SpMat> lu;
    bool analysed = false;
    double res = max_abs(r);
    int it = 0;
    for (;; ++it) {
        const SpMat J = bvp.jacobian(props);
        if (!analysed) {
            lu.analyzePattern(J);
            analysed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success)
            throw MinimizationFailure("action_A: singular matching system", kInf, res);
        if (res <= opt.tolerance) break;
        if (it >= opt.max_iterations)
            throw MinimizationFailure("action_A: matching did not converge", kInf, res);

        const Eigen::VectorXd d = lu.solve(-r);
        double alpha = 1.0;
        bool accepted = false;
        for (int h = 0; h < 30 && !accepted; ++h, alpha *= 0.5) {
            std::vector<State4> trial = y;
            for (int j = 0; j <= n; ++j)
                for (int c = 0; c < 4; ++c) trial[j][c] += alpha * d[4 * j + c];
            std::vector<Propagation> tp;
            Eigen::VectorXd tr;
            if (!bvp.evaluate(trial, tp, tr, true)) continue;
            const double tres = max_abs(tr);
            if (tres < (1.0 - 0.25 * alpha) * res || (tres < res && alpha < 1e-3)) {
                y = std::move(trial);
                props = std::move(tp);
                r = std::move(tr);
                res = tres;
                accepted = true;
            }
        }
        if (!accepted) throw MinimizationFailure("action_A: line search stalled", kInf, res);
    }

    ActionResult out;
    out.iterations = it;
    out.node_times = bvp.times();
    out.nodes = y;
    for (const auto& p : props) out.value += p.action;
    for (int j = 0; j < n; ++j)
        for (int c = 2; c < 4; ++c)
            out.el_residual = std::max(out.el_residual, std::abs(props[j].y[c] - y[j + 1][c]));

    const State4& y0 = y.front();
    const State4& yn = y.back();
    const PotentialJet w0 = potential_gradient(params, start.t, y0[0], y0[1]);
    const PotentialJet wn = potential_gradient(params, end.t, yn[0], yn[1]);
    const double e0 = eval_H(params, to_point(start.t, y0)) - 0.5 * a * a;
    const double en = eval_H(params, to_point(end.t, yn)) - 0.5 * a * a;
    out.gradient = {e0, -(y0[2] - a), -en, yn[2] - a};

    const Eigen::MatrixXd dy = lu.solve(Eigen::MatrixXd(-bvp.parameter_jacobian(y, props)));
    const int last = 4 * n;
    std::array<std::array<double, 4>, 4> h{};
    for (int k = 0; k < 4; ++k) {
        const double de0 = (k == 0 ? w0.w_t : 0.0) + w0.w_theta * dy(0, k) + w0.w_q * dy(1, k) + y0[2] * dy(2, k) +
                           y0[3] * dy(3, k);
        const double den = (k == 2 ? wn.w_t : 0.0) + wn.w_theta * dy(last, k) + wn.w_q * dy(last + 1, k) +
                           yn[2] * dy(last + 2, k) + yn[3] * dy(last + 3, k);
        h[0][k] = de0;
        h[1][k] = -dy(2, k);
        h[2][k] = -den;
        h[3][k] = dy(last + 2, k);
    }
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) out.hessian[i][k] = 0.5 * (h[i][k] + h[k][i]);

    if (with_curve) out.curve = sample_curve(params, a, out.node_times, y, opt);
    return out;
}

double JunctionVariables::absolute_time(std::size_t i) const {
    double s = t.at(i);
    for (std::size_t m = 0; m < i; ++m) s += tau.at(m);
    return s;
}

std::size_t junction_count(const ChainSchedule& schedule) {
    if (schedule.levels.empty()) throw DomainError("chain schedule has no levels");
    return static_cast<std::size_t>(std::max(schedule.k(), 1));
}

namespace {

// Level after junction i; arcs between junctions i and i + 1 live there.
double level_after(const ChainSchedule& s, std::size_t i) {
    return s.levels[std::min<std::size_t>(i + 1, s.levels.size() - 1)];
}
double level_before(const ChainSchedule& s, std::size_t i) {
    return s.levels[std::min<std::size_t>(i, s.levels.size() - 1)];
}

void check_junctions(const ChainSchedule& schedule, const JunctionVariables& jv, const CompositeOptions& opt) {
    const std::size_t J = junction_count(schedule);
    if (jv.t.size() != J || jv.theta.size() != J || jv.tau.size() + 1 != J)
        throw DomainError("junction count does not match the chain schedule");
    for (std::size_t i = 0; i < J; ++i) {
        if (!(std::abs(jv.t[i]) < 1.0 && std::abs(jv.theta[i]) < 1.0))
            throw DomainError("junction variables must lie in (-1, 1)^2");
    }
    for (int tau : jv.tau)
        if (tau < opt.tau_min) throw DomainError("dwell below tau_min");
}

int arc_pieces(int tau, const BvpOptions& bvp) {
    return static_cast<int>(std::ceil((tau + 2.0) / bvp.max_piece - 1e-9));
}

}  // namespace

double CompositeEvaluation::gradient_norm() const {
    double s = 0.0;
    for (double g : gradient) s += g * g;
    return std::sqrt(s);
}

Eigen::MatrixXd CompositeEvaluation::dense_hessian() const {
    const int J = static_cast<int>(diagonal.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2 * J, 2 * J);
    for (int i = 0; i < J; ++i)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) h(2 * i + r, 2 * i + c) = diagonal[i][r][c];
    for (int i = 0; i + 1 < J; ++i)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                h(2 * i + r, 2 * (i + 1) + c) = coupling[i][r][c];
                h(2 * (i + 1) + c, 2 * i + r) = coupling[i][r][c];
            }
    return h;
}

CompositeEvaluation evaluate_composite(const ModelParams& params, const ChainSchedule& schedule,
                                       const JunctionVariables& jv, const CompositeOptions& opt,
                                       const CompositeEvaluation* warm, bool with_curves) {
    params.validate();
    check_junctions(schedule, jv, opt);
    const std::size_t J = junction_count(schedule);
    const std::size_t arcs = J - 1;
    std::vector<double> T(J);
    T[0] = jv.t[0];
    for (std::size_t i = 1; i < J; ++i) T[i] = T[i - 1] + jv.tau[i - 1] + jv.t[i] - jv.t[i - 1];

    CompositeEvaluation ev;
    ev.arcs.resize(arcs);
    const double a_first = schedule.levels.front();
    const double a_last = schedule.levels.back();
    const bool warm_ok = warm && warm->arcs.size() == arcs;

    parallel_for(arcs + 2, [&](std::size_t task) {
        if (task < arcs) {
            BvpOptions bvp = opt.bvp;
            bvp.pieces = arc_pieces(jv.tau[task], bvp);
            const Endpoint s{T[task], jv.theta[task], 0.5};
            const Endpoint e{T[task + 1], jv.theta[task + 1], 0.5};
            ev.arcs[task] = action_A(params, level_after(schedule, task), s, e, bvp,
                                     warm_ok ? &warm->arcs[task] : nullptr, with_curves);
        } else if (task == arcs) {
            std::optional<ShootingSeed> seed;
            if (warm) seed = warm->plus.seed;
            ev.plus = shoot_manifold_point(params, a_first, Branch::Plus, T[0], jv.theta[0], 0.5, opt.shooting, seed);
        } else {
            std::optional<ShootingSeed> seed;
            if (warm) seed = warm->minus.seed;
            ev.minus = shoot_manifold_point(params, a_last, Branch::Minus, T[J - 1], jv.theta[J - 1], -0.5,
                                            opt.shooting, seed);
        }
    });

    ev.gradient.assign(2 * J, 0.0);
    ev.diagonal.assign(J, Mat2{});
    ev.coupling.assign(arcs, Mat2{});

    ev.value = ev.plus.value - ev.minus.value;
    const auto gp = ev.plus.gradient();
    const auto gm = ev.minus.gradient();
    ev.gradient[0] += gp[0];
    ev.gradient[1] += gp[1];
    ev.gradient[2 * (J - 1)] -= gm[0];
    ev.gradient[2 * (J - 1) + 1] -= gm[1];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            ev.diagonal[0][r][c] += ev.plus.hessian[r][c];
            ev.diagonal[J - 1][r][c] -= ev.minus.hessian[r][c];
        }

    for (std::size_t i = 0; i < J; ++i) {
        const double a0 = level_before(schedule, i);
        const double a1 = level_after(schedule, i);
        ev.value += (a0 - a1) * jv.theta[i] - 0.5 * (a0 * a0 - a1 * a1) * T[i];
        ev.gradient[2 * i] -= 0.5 * (a0 * a0 - a1 * a1);
        ev.gradient[2 * i + 1] += a0 - a1;
    }

    for (std::size_t i = 0; i < arcs; ++i) {
        const ActionResult& arc = ev.arcs[i];
        ev.value += arc.value;
        for (int c = 0; c < 2; ++c) {
            ev.gradient[2 * i + c] += arc.gradient[c];
            ev.gradient[2 * (i + 1) + c] += arc.gradient[2 + c];
        }
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                ev.diagonal[i][r][c] += arc.hessian[r][c];
                ev.diagonal[i + 1][r][c] += arc.hessian[2 + r][2 + c];
                ev.coupling[i][r][c] += arc.hessian[r][2 + c];
            }
    }
    return ev;
}

double composite_action(const ModelParams& params, const ChainSchedule& schedule, const JunctionVariables& jv,
                        const CompositeOptions& opt) {
    return evaluate_composite(params, schedule, jv, opt).value;
}

int dwell_heuristic(const ModelParams& params, int tau_min) {
    params.validate();
    if (params.mu <= 0.0 || params.mu >= 1.0) return tau_min;
    return static_cast<int>(std::ceil(tau_min + 4.0 / params.lyapunov() * std::log(1.0 / params.mu)));
}

int choose_dwell(const ModelParams& params, double a, double t0, double theta0, double t1, double theta1,
                 const CompositeOptions& opt) {
    const int base = std::max(opt.tau_min, dwell_heuristic(params, opt.tau_min));
    int best = base;
    double best_gap = kInf;
    for (int tau = base; tau <= base + opt.dwell_window; ++tau) {
        const double m = theta1 - theta0 - a * (tau + t1 - t0);
        const double gap = std::abs(m - std::round(m));
        if (gap <= opt.phase_tolerance) return tau;
        if (gap < best_gap) {
            best_gap = gap;
            best = tau;
        }
    }
    return best;
}

namespace {
double centred(double x) { return x - std::round(x); }
}  // namespace

JunctionVariables seed_junctions(const ModelParams& params, const ChainSchedule& schedule,
                                 const CompositeOptions& opt) {
    const std::size_t J = junction_count(schedule);
    JunctionVariables jv;
    if (schedule.k() == 0) {
        LinkOptions lo;
        lo.shooting = opt.shooting;
        const Link l = find_link(params, schedule.levels[0], schedule.levels[0], lo);
        jv.t.push_back(centred(l.t));
        jv.theta.push_back(centred(l.theta));
        return jv;
    }
    if (schedule.links.size() != J) throw DomainError("chain schedule is missing links");
    for (const Link& l : schedule.links) {
        jv.t.push_back(centred(l.t));
        jv.theta.push_back(centred(l.theta));
    }
    for (std::size_t i = 0; i + 1 < J; ++i)
        jv.tau.push_back(
            choose_dwell(params, level_after(schedule, i), jv.t[i], jv.theta[i], jv.t[i + 1], jv.theta[i + 1], opt));
    return jv;
}

namespace {

SpMat sparse_hessian(const CompositeEvaluation& ev, double shift) {
    const int J = static_cast<int>(ev.diagonal.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(12 * J));
    for (int i = 0; i < J; ++i)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                trip.emplace_back(2 * i + r, 2 * i + c, ev.diagonal[i][r][c] + (r == c ? shift : 0.0));
    for (int i = 0; i + 1 < J; ++i)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                trip.emplace_back(2 * i + r, 2 * (i + 1) + c, ev.coupling[i][r][c]);
                trip.emplace_back(2 * (i + 1) + c, 2 * i + r, ev.coupling[i][r][c]);
            }
    SpMat h(2 * J, 2 * J);
    h.setFromTriplets(trip.begin(), trip.end());
    return h;
}

bool positive_definite(const SpMat& h) {
    Eigen::SimplicialLLT<SpMat> llt(h);
    return llt.info() == Eigen::Success;
}

// Largest sigma with H - sigma I positive definite, by bisection on Cholesky success.
double smallest_eigenvalue(const CompositeEvaluation& ev) {
    double bound = 0.0;
    for (const auto& d : ev.diagonal) bound = std::max(bound, std::abs(d[0][0]) + std::abs(d[0][1]) + std::abs(d[1][1]));
    for (const auto& c : ev.coupling)
        bound += std::abs(c[0][0]) + std::abs(c[0][1]) + std::abs(c[1][0]) + std::abs(c[1][1]);
    bound = std::max(bound, 1.0);
    double lo = -bound, hi = bound;
    for (int it = 0; it < 80 && hi - lo > 1e-12 * bound; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (positive_definite(sparse_hessian(ev, -mid)))
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

std::vector<double> pack(const JunctionVariables& jv) {
    std::vector<double> x(2 * jv.size());
    for (std::size_t i = 0; i < jv.size(); ++i) {
        x[2 * i] = jv.t[i];
        x[2 * i + 1] = jv.theta[i];
    }
    return x;
}

JunctionVariables unpack(const std::vector<double>& x, const std::vector<int>& tau) {
    JunctionVariables jv;
    jv.tau = tau;
    for (std::size_t i = 0; i < x.size() / 2; ++i) {
        jv.t.push_back(x[2 * i]);
        jv.theta.push_back(x[2 * i + 1]);
    }
    return jv;
}

}  // namespace

MinimizationResult minimize_composite(const ModelParams& params, const ChainSchedule& schedule,
                                      const JunctionVariables& seed, const CompositeOptions& opt) {
    check_junctions(schedule, seed, opt);
    std::vector<double> x = pack(seed);
    const std::size_t n = x.size();
    CompositeEvaluation ev = evaluate_composite(params, schedule, seed, opt);
    const double noise = 1e-12 * static_cast<double>(n) * (1.0 + std::abs(ev.value));
    int pinned = 0;
    int it = 0;
    for (;; ++it) {
        const double gn = ev.gradient_norm();
        if (gn <= opt.gradient_tolerance) break;
        if (it >= opt.max_iterations)
            throw MinimizationFailure("composite Newton iteration did not converge", ev.value, gn);

        Eigen::VectorXd g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = ev.gradient[i];
        Eigen::VectorXd d;
        double shift = 0.0;
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::SimplicialLLT<SpMat> llt(sparse_hessian(ev, shift));
            if (llt.info() == Eigen::Success) {
                d = llt.solve(-g);
                break;
            }
            shift = shift == 0.0 ? 1e-6 : 4.0 * shift;
        }
        if (d.size() == 0) throw MinimizationFailure("composite Hessian could not be regularised", ev.value, gn);

        const double cap = 0.1;
        const double big = d.cwiseAbs().maxCoeff();
        if (big > cap) d *= cap / big;
        double alpha_max = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (d[i] > 0.0) alpha_max = std::min(alpha_max, 0.99 * (1.0 - x[i]) / d[i]);
            if (d[i] < 0.0) alpha_max = std::min(alpha_max, 0.99 * (-1.0 - x[i]) / d[i]);
        }
        const double slope = g.dot(d);

        bool accepted = false;
        double alpha = alpha_max;
        for (int h = 0; h < 30 && !accepted; ++h, alpha *= 0.5) {
            std::vector<double> trial(n);
            for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + alpha * d[i];
            CompositeEvaluation te;
            try {
                te = evaluate_composite(params, schedule, unpack(trial, seed.tau), opt, &ev);
            } catch (const NumericalError&) {
                continue;
            }
            const bool armijo = te.value <= ev.value + 1e-4 * alpha * slope + noise;
            if (armijo || te.gradient_norm() < 0.5 * gn) {
                x = std::move(trial);
                ev = std::move(te);
                accepted = true;
            }
        }
        if (!accepted) throw MinimizationFailure("composite line search stalled", ev.value, gn);

        double edge = 0.0;
        for (double xi : x) edge = std::max(edge, std::abs(xi));
        pinned = alpha_max < 1.0 && edge > 0.99 ? pinned + 1 : 0;
        if (pinned >= 3) throw EscapedBox("junction variables pressed against the box boundary");
    }

    MinimizationResult out;
    out.minimizer = unpack(x, seed.tau);
    out.value = ev.value;
    out.gradient_norm = ev.gradient_norm();
    out.iterations = it;
    out.min_eigenvalue = smallest_eigenvalue(ev);
    if (out.min_eigenvalue < opt.hessian_margin)
        throw MinimizationFailure("critical point is not a strict local minimum", out.value, out.gradient_norm);
    return out;
}

namespace {

double deviation(const State4& a, const State4& b) {
    double d = 0.0;
    for (int c = 0; c < 4; ++c) d = std::max(d, std::abs(a[c] - b[c]));
    return d;
}

// Largest gap between samples and a re-integration through them; restarts at the listed sample indices.
double reintegrate(const ModelParams& params, const OrbitSegment& seg, const std::vector<std::size_t>& restarts,
                   double step, bool backward) {
    const auto& s = seg.samples;
    double worst = 0.0;
    if (!backward) {
        std::size_t next_restart = 0;
        State4 y{};
        for (std::size_t j = 0; j + 1 < s.size(); ++j) {
            if (next_restart < restarts.size() && restarts[next_restart] == j) {
                y = to_state(s[j]);
                ++next_restart;
            }
            y = propagate(params, s[j].t, y, s[j + 1].t, step);
            worst = std::max(worst, deviation(y, to_state(s[j + 1])));
        }
    } else {
        State4 y = to_state(s.back());
        for (std::size_t j = s.size() - 1; j > 0; --j) {
            y = propagate(params, s[j].t, y, s[j - 1].t, step);
            worst = std::max(worst, deviation(y, to_state(s[j - 1])));
        }
    }
    return worst;
}

}  // namespace

DiffusionOrbit extract_orbit(const ModelParams& params, const ChainSchedule& schedule,
                             const JunctionVariables& minimizer, const CompositeOptions& opt,
                             const ExtractOptions& extract) {
    const CompositeEvaluation ev = evaluate_composite(params, schedule, minimizer, opt, nullptr, true);
    const std::size_t J = junction_count(schedule);
    const double step = opt.bvp.step;

    DiffusionOrbit orbit;
    orbit.params = params;

    // Unstable leg, integrated backward from junction 0 along the manifold and reversed.
    {
        const PhasePoint x{ev.plus.t, ev.plus.theta, ev.plus.q, ev.plus.I, ev.plus.p};
        OrbitSegment leg = flow_signed(params, x, -ev.plus.seed.duration, step);
        std::reverse(leg.samples.begin(), leg.samples.end());
        orbit.segments.push_back(std::move(leg));
    }
    double theta_shift = 0.0;
    for (std::size_t i = 0; i + 1 < J; ++i) {
        const ActionResult& arc = ev.arcs[i];
        OrbitSegment seg;
        seg.params = params;
        seg.step = arc.curve.step;
        seg.samples = arc.curve.samples;
        for (auto& p : seg.samples) {
            p.theta += theta_shift;
            p.q += static_cast<double>(i + 1);
        }
        theta_shift += arc.nodes.back()[0] - minimizer.theta[i + 1];
        orbit.segments.push_back(std::move(seg));
    }
    {
        const PhasePoint x{ev.minus.t, ev.minus.theta + theta_shift, ev.minus.q + static_cast<double>(J), ev.minus.I,
                           ev.minus.p};
        orbit.segments.push_back(flow_signed(params, x, ev.minus.seed.duration, step));
    }

    for (std::size_t i = 0; i + 1 < orbit.segments.size(); ++i) {
        PhasePoint& in = orbit.segments[i].samples.back();
        PhasePoint& out = orbit.segments[i + 1].samples.front();
        JunctionReport rep;
        rep.t = in.t;
        rep.jump_I = out.I - in.I;
        rep.jump_p = out.p - in.p;
        rep.position_gap = std::max({std::abs(out.t - in.t), std::abs(out.theta - in.theta), std::abs(out.q - in.q)});
        // Shared endpoint: the incoming segment carries the exact junction position.
        out.t = in.t;
        out.theta = in.theta;
        out.q = in.q;
        orbit.max_junction_defect = std::max({orbit.max_junction_defect, std::abs(rep.jump_I), std::abs(rep.jump_p)});
        orbit.junctions.push_back(rep);
    }
    if (orbit.max_junction_defect > extract.junction_tolerance) {
        std::ostringstream os;
        os << "velocity jump " << orbit.max_junction_defect << " exceeds " << extract.junction_tolerance;
        throw JunctionDefect(os.str());
    }

    const double a0 = schedule.levels.front();
    const double ak = schedule.levels.back();
    orbit.margin = 2.0 * schedule.max_spacing();
    orbit.I_min = kInf;
    orbit.I_max = -kInf;
    bool low = false, high = false;
    for (const auto& seg : orbit.segments)
        for (const auto& p : seg.samples) {
            orbit.I_min = std::min(orbit.I_min, p.I);
            orbit.I_max = std::max(orbit.I_max, p.I);
            if (!low && p.I <= a0 + orbit.margin) {
                low = true;
                orbit.t_low = p.t;
            } else if (low && !high && p.I >= ak - orbit.margin) {
                high = true;
                orbit.t_high = p.t;
            }
        }
    if (schedule.k() > 0 && !(low && high)) {
        std::ostringstream os;
        os << "action range [" << orbit.I_min << ", " << orbit.I_max << "] does not cross [" << a0 + orbit.margin
           << ", " << ak - orbit.margin << "]";
        throw NumericalError("DriftShortfall", os.str());
    }

    // Re-integration: the unstable leg backward from its junction, arcs restarted at their shooting nodes,
    // the stable leg forward from its junction.
    std::vector<double> errors(orbit.segments.size(), 0.0);
    parallel_for(orbit.segments.size(), [&](std::size_t i) {
        const OrbitSegment& seg = orbit.segments[i];
        if (i == 0) {
            errors[i] = reintegrate(params, seg, {}, extract.reintegration_step, true);
        } else if (i + 1 == orbit.segments.size()) {
            errors[i] = reintegrate(params, seg, {0}, extract.reintegration_step, false);
        } else {
            const ActionResult& arc = ev.arcs[i - 1];
            const std::size_t per = (seg.samples.size() - 1) / (arc.nodes.size() - 1);
            std::vector<std::size_t> restarts;
            for (std::size_t j = 0; j + 1 < arc.nodes.size(); ++j) restarts.push_back(j * per);
            errors[i] = reintegrate(params, seg, restarts, extract.reintegration_step, false);
        }
    });
    orbit.reintegration_error = *std::max_element(errors.begin(), errors.end());

    // Single integration from the start of the first dwell arc, followed until it departs.
    if (orbit.segments.size() > 2) {
        State4 y = to_state(orbit.segments[1].samples.front());
        const double start = orbit.segments[1].samples.front().t;
        orbit.single_shot_horizon = 0.0;
        bool departed = false;
        for (std::size_t i = 1; i < orbit.segments.size() && !departed; ++i) {
            const auto& s = orbit.segments[i].samples;
            for (std::size_t j = 0; j + 1 < s.size(); ++j) {
                y = propagate(params, s[j].t, y, s[j + 1].t, extract.reintegration_step);
                if (deviation(y, to_state(s[j + 1])) > extract.reintegration_tolerance) {
                    departed = true;
                    break;
                }
                orbit.single_shot_horizon = s[j + 1].t - start;
            }
        }
    }

    if (orbit.reintegration_error > extract.reintegration_tolerance) {
        std::ostringstream os;
        os << "re-integration deviates by " << orbit.reintegration_error;
        throw NumericalError("ReintegrationMismatch", os.str());
    }
    return orbit;
}

void write_csv(std::ostream& os, const DiffusionOrbit& orbit) {
    os << "t,theta,q,I,p\n" << std::setprecision(17);
    for (std::size_t i = 0; i < orbit.segments.size(); ++i) {
        const auto& s = orbit.segments[i].samples;
        for (std::size_t j = i == 0 ? 0 : 1; j < s.size(); ++j)
            os << s[j].t << ',' << s[j].theta << ',' << s[j].q << ',' << s[j].I << ',' << s[j].p << '\n';
    }
}

}  // namespace adiff
