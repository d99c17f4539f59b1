#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "adiff/model.hpp"

namespace adiff {

/// Value, gradient and Hessian of a function of (t, theta).
struct Jet2 {
    double value = 0.0;
    std::array<double, 2> grad{};
    std::array<std::array<double, 2>, 2> hess{};
};

struct MelnikovOptions {
    /// Multiplies the default truncation length max(8, 12 / lambda) on each side.
    double window_scale = 1.0;
    /// Tail bound above which the window is extended; NonConvergence past max_doublings.
    double tail_tolerance = 1e-12;
    int max_doublings = 6;
};

/// eps * integral over (-inf, 0] of F(t + s, theta + a s, q(s)) ds along the separatrix through q at s = 0.
/// q in (0, 1).
double melnikov_plus(const ModelParams& params, double a, double t, double theta, double q,
                     const MelnikovOptions& opt = {});
/// Same over [0, +inf); q in (-1, 0) (the lifted stable branch) or (0, 1).
double melnikov_minus(const ModelParams& params, double a, double t, double theta, double q,
                      const MelnikovOptions& opt = {});
/// Full-line integral on the section q = 1/2.
double melnikov_total(const ModelParams& params, double a, double t, double theta, const MelnikovOptions& opt = {});
/// melnikov_total with first and second derivatives in (t, theta), differentiated under the integral.
Jet2 melnikov_jet(const ModelParams& params, double a, double t, double theta, const MelnikovOptions& opt = {});

/// Coefficients of the closed form for the Arnold perturbation:
/// M = theta_coefficient(a) cos(2 pi theta) + time_coefficient cos(2 pi t).
double melnikov_theta_coefficient(double epsilon, double a);
double melnikov_time_coefficient(double epsilon);
/// Closed form; throws UnsupportedPerturbation unless params.perturbation is the Arnold choice.
double melnikov_closed_form(const ModelParams& params, double a, double t, double theta);
double melnikov_closed_form(double epsilon, double a, double t, double theta);
Jet2 melnikov_closed_form_jet(double epsilon, double a, double t, double theta);

/// M_a(t, theta, 1/2) sampled on an N x N grid over the torus; values[i * N + j] at (i/N, j/N).
struct MelnikovField {
    ModelParams params;
    double a = 0.0;
    int n = 0;
    std::vector<double> values;
    std::vector<double> grad_t;
    std::vector<double> grad_theta;

    double at(int i, int j) const { return values[index(i, j)]; }
    std::size_t index(int i, int j) const;
    double mean() const;
};

MelnikovField melnikov_field(const ModelParams& params, double a, int n, const MelnikovOptions& opt = {});

enum class CriticalClass { Minimum, Maximum, Saddle, Degenerate };
std::string to_string(CriticalClass c);

struct CriticalPoint {
    double t = 0.0;
    double theta = 0.0;
    double value = 0.0;
    std::array<std::array<double, 2>, 2> hessian{};
    double gradient_norm = 0.0;
    CriticalClass classification = CriticalClass::Degenerate;
    bool nondegenerate = false;
};

struct CriticalPointReport {
    std::vector<CriticalPoint> points;
    /// Set when the field is identically zero; points is then empty.
    bool degenerate_field = false;
    /// Seed cells from which Newton refinement failed.
    int newton_divergences = 0;
};

/// Classifies a symmetric 2x2 Hessian; degenerate iff |det| <= det_tolerance.
CriticalClass classify(const std::array<std::array<double, 2>, 2>& h, double det_tolerance = 1e-8);

/// Shortest distance on the unit torus T^2.
double torus_distance(double t1, double th1, double t2, double th2);

CriticalPointReport critical_points(const MelnikovField& field, const MelnikovOptions& opt = {});

void write_csv(std::ostream& os, const MelnikovField& field);

}  // namespace adiff
