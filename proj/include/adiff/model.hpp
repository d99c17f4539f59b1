#pragma once

#include <array>
#include <vector>

namespace adiff {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// One trigonometric mode amplitude * cos(2 pi (k_t t + k_theta theta + k_q q) + phase).
struct PerturbationTerm {
    int k_t = 0;
    int k_theta = 0;
    int k_q = 0;
    double amplitude = 0.0;
    double phase = 0.0;

    bool operator==(const PerturbationTerm&) const = default;
};

/// Value and derivatives (up to second order) of a function of (t, theta, q).
struct Jet3 {
    double value = 0.0;
    std::array<double, 3> grad{};                    // d/dt, d/dtheta, d/dq
    std::array<std::array<double, 3>, 3> hess{};     // symmetric
};

/// Finite trigonometric sum f(t, theta, q), 1-periodic in every argument.
class Perturbation {
public:
    Perturbation() = default;
    explicit Perturbation(std::vector<PerturbationTerm> terms);

    /// f = cos(2 pi theta) + cos(2 pi t).
    static Perturbation arnold();

    const std::vector<PerturbationTerm>& terms() const noexcept { return terms_; }
    bool empty() const noexcept { return terms_.empty(); }
    bool is_arnold() const;

    double value(double t, double theta, double q) const;
    Jet3 jet(double t, double theta, double q) const;

    bool operator==(const Perturbation&) const = default;

private:
    std::vector<PerturbationTerm> terms_;
};

struct ModelParams {
    double epsilon = 0.25;
    double mu = 0.0;
    Perturbation perturbation = Perturbation::arnold();

    /// Throws DomainError unless epsilon > 0, mu >= 0 and both finite.
    void validate() const;

    double sqrt_epsilon() const;
    /// Characteristic exponent 2 pi sqrt(eps) of the hyperbolic torus family.
    double lyapunov() const;
};

/// Extended phase-space state. Angles are real lifts.
struct PhasePoint {
    double t = 0.0;
    double theta = 0.0;
    double q = 0.0;
    double I = 0.0;
    double p = 0.0;
};

/// Reduces (t, theta, q) to [0, 1). Idempotent.
PhasePoint wrap(const PhasePoint& x);
double wrap_unit(double x);

/// Tangent vector (dt, dtheta, dq, dI, dp).
using Tangent = std::array<double, 5>;

/// Potential part W = eps (cos 2 pi q - 1)(1 + mu f) of the Hamiltonian with the
/// derivatives needed by the flow and its linearisation.
struct PotentialJet {
    double w = 0.0;
    double w_t = 0.0, w_theta = 0.0, w_q = 0.0;
    double w_tt = 0.0, w_ttheta = 0.0, w_tq = 0.0;
    double w_thth = 0.0, w_thq = 0.0, w_qq = 0.0;
};

PotentialJet potential_jet(const ModelParams& params, double t, double theta, double q);
/// First derivatives only; cheaper path used by the plain flow.
PotentialJet potential_gradient(const ModelParams& params, double t, double theta, double q);

double eval_H(const ModelParams& params, const PhasePoint& x);
double eval_L(const ModelParams& params, double t, double theta, double q, double theta_dot, double q_dot);
/// L - a theta_dot + a^2/2: vanishes on the torus orbit q = 0, theta_dot = a.
double reduced_lagrangian(const ModelParams& params, double a, double t, double theta, double q, double theta_dot,
                          double q_dot);
Tangent vector_field(const ModelParams& params, const PhasePoint& x);

}  // namespace adiff
