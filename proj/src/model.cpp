#include "adiff/model.hpp"

#include <cmath>
#include <string>

#include "adiff/errors.hpp"

namespace adiff {

Perturbation::Perturbation(std::vector<PerturbationTerm> terms) : terms_(std::move(terms)) {}

Perturbation Perturbation::arnold() {
    return Perturbation({{1, 0, 0, 1.0, 0.0}, {0, 1, 0, 1.0, 0.0}});
}

bool Perturbation::is_arnold() const {
    return *this == arnold() || *this == Perturbation({{0, 1, 0, 1.0, 0.0}, {1, 0, 0, 1.0, 0.0}});
}

double Perturbation::value(double t, double theta, double q) const {
    double f = 0.0;
    for (const auto& m : terms_) {
        f += m.amplitude * std::cos(kTwoPi * (m.k_t * t + m.k_theta * theta + m.k_q * q) + m.phase);
    }
    return f;
}

Jet3 Perturbation::jet(double t, double theta, double q) const {
    Jet3 j;
    for (const auto& m : terms_) {
        const double arg = kTwoPi * (m.k_t * t + m.k_theta * theta + m.k_q * q) + m.phase;
        const double c = m.amplitude * std::cos(arg);
        const double s = m.amplitude * std::sin(arg);
        const std::array<double, 3> k{kTwoPi * m.k_t, kTwoPi * m.k_theta, kTwoPi * m.k_q};
        j.value += c;
        for (int a = 0; a < 3; ++a) {
            j.grad[a] -= s * k[a];
            for (int b = 0; b < 3; ++b) j.hess[a][b] -= c * k[a] * k[b];
        }
    }
    return j;
}

void ModelParams::validate() const {
    if (!std::isfinite(epsilon) || epsilon <= 0.0) {
        throw DomainError("epsilon must be positive, got " + std::to_string(epsilon));
    }
    if (!std::isfinite(mu) || mu < 0.0) throw DomainError("mu must be non-negative, got " + std::to_string(mu));
    for (const auto& m : perturbation.terms()) {
        if (!std::isfinite(m.amplitude) || !std::isfinite(m.phase)) {
            throw DomainError("perturbation term with non-finite amplitude or phase");
        }
    }
}

double ModelParams::sqrt_epsilon() const { return std::sqrt(epsilon); }

double ModelParams::lyapunov() const { return kTwoPi * std::sqrt(epsilon); }

double wrap_unit(double x) {
    double r = x - std::floor(x);
    return r >= 1.0 ? 0.0 : r;
}

PhasePoint wrap(const PhasePoint& x) { return {wrap_unit(x.t), wrap_unit(x.theta), wrap_unit(x.q), x.I, x.p}; }

namespace {

// cos(2 pi q) - 1 written as -2 sin^2(pi q) keeps relative precision near the torus.
struct QFactor {
    double c, dc, ddc;
};

QFactor q_factor(double q) {
    const double s = std::sin(kPi * q);
    return {-2.0 * s * s, -kTwoPi * std::sin(kTwoPi * q), -kTwoPi * kTwoPi * std::cos(kTwoPi * q)};
}

}  // namespace

PotentialJet potential_jet(const ModelParams& params, double t, double theta, double q) {
    const QFactor qf = q_factor(q);
    const double eps = params.epsilon;
    PotentialJet w;
    if (params.mu == 0.0 || params.perturbation.empty()) {
        w.w = eps * qf.c;
        w.w_q = eps * qf.dc;
        w.w_qq = eps * qf.ddc;
        return w;
    }
    const Jet3 f = params.perturbation.jet(t, theta, q);
    const double mu = params.mu;
    const double g = 1.0 + mu * f.value;
    w.w = eps * qf.c * g;
    w.w_t = eps * qf.c * mu * f.grad[0];
    w.w_theta = eps * qf.c * mu * f.grad[1];
    w.w_q = eps * (qf.dc * g + qf.c * mu * f.grad[2]);
    w.w_tt = eps * qf.c * mu * f.hess[0][0];
    w.w_ttheta = eps * qf.c * mu * f.hess[0][1];
    w.w_tq = eps * (qf.dc * mu * f.grad[0] + qf.c * mu * f.hess[0][2]);
    w.w_thth = eps * qf.c * mu * f.hess[1][1];
    w.w_thq = eps * (qf.dc * mu * f.grad[1] + qf.c * mu * f.hess[1][2]);
    w.w_qq = eps * (qf.ddc * g + 2.0 * qf.dc * mu * f.grad[2] + qf.c * mu * f.hess[2][2]);
    return w;
}

PotentialJet potential_gradient(const ModelParams& params, double t, double theta, double q) {
    const double s = std::sin(kPi * q);
    const double c = -2.0 * s * s;
    const double dc = -kTwoPi * std::sin(kTwoPi * q);
    const double eps = params.epsilon;
    PotentialJet w;
    if (params.mu == 0.0 || params.perturbation.empty()) {
        w.w = eps * c;
        w.w_q = eps * dc;
        return w;
    }
    double f = 0.0, ft = 0.0, fth = 0.0, fq = 0.0;
    for (const auto& m : params.perturbation.terms()) {
        const double arg = kTwoPi * (m.k_t * t + m.k_theta * theta + m.k_q * q) + m.phase;
        const double ca = m.amplitude * std::cos(arg);
        const double sa = m.amplitude * std::sin(arg);
        f += ca;
        ft -= sa * kTwoPi * m.k_t;
        fth -= sa * kTwoPi * m.k_theta;
        fq -= sa * kTwoPi * m.k_q;
    }
    const double mu = params.mu;
    const double g = 1.0 + mu * f;
    w.w = eps * c * g;
    w.w_t = eps * c * mu * ft;
    w.w_theta = eps * c * mu * fth;
    w.w_q = eps * (dc * g + c * mu * fq);
    return w;
}

double eval_H(const ModelParams& params, const PhasePoint& x) {
    const double s = std::sin(kPi * x.q);
    const double pot = -2.0 * s * s;
    const double g = 1.0 + params.mu * (params.mu == 0.0 ? 0.0 : params.perturbation.value(x.t, x.theta, x.q));
    return 0.5 * x.p * x.p + 0.5 * x.I * x.I + params.epsilon * pot * g;
}

double eval_L(const ModelParams& params, double t, double theta, double q, double theta_dot, double q_dot) {
    const double s = std::sin(kPi * q);
    const double g = 1.0 + params.mu * (params.mu == 0.0 ? 0.0 : params.perturbation.value(t, theta, q));
    return 0.5 * q_dot * q_dot + 0.5 * theta_dot * theta_dot + params.epsilon * 2.0 * s * s * g;
}

double reduced_lagrangian(const ModelParams& params, double a, double t, double theta, double q, double theta_dot,
                          double q_dot) {
    // (theta_dot - a)^2 / 2 is L's kinetic theta part minus a theta_dot plus a^2/2, written without cancellation.
    const double s = std::sin(kPi * q);
    const double g = 1.0 + params.mu * (params.mu == 0.0 ? 0.0 : params.perturbation.value(t, theta, q));
    const double d = theta_dot - a;
    return 0.5 * q_dot * q_dot + 0.5 * d * d + params.epsilon * 2.0 * s * s * g;
}

Tangent vector_field(const ModelParams& params, const PhasePoint& x) {
    const PotentialJet w = potential_gradient(params, x.t, x.theta, x.q);
    return {1.0, x.I, x.p, -w.w_theta, -w.w_q};
}

}  // namespace adiff
