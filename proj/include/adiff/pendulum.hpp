#pragma once

namespace adiff::pendulum {

/// Unperturbed generating function (2 sqrt(eps)/pi)(1 - cos(pi q)).
double s0(double epsilon, double q);
/// dS0/dq = 2 sqrt(eps) sin(pi q).
double s0_prime(double epsilon, double q);
/// d2S0/dq2 = 2 pi sqrt(eps) cos(pi q).
double s0_second(double epsilon, double q);

/// Homoclinic orbit through q_anchor at time t_anchor, evaluated at time s. q_anchor in (0, 1).
double separatrix_q(double epsilon, double t_anchor, double q_anchor, double s);
double separatrix_p(double epsilon, double t_anchor, double q_anchor, double s);

/// 1 - cos(2 pi q) along the separatrix through 1/2 at time 0, as 2 sech^2(lambda s).
double separatrix_potential(double epsilon, double s);

}  // namespace adiff::pendulum
