#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <vector>

#include "adiff/integrate.hpp"
#include "adiff/manifolds.hpp"
#include "adiff/model.hpp"
#include "adiff/propagate.hpp"

namespace adiff {

/// (t, theta, q) with lifted angles.
struct Endpoint {
    double t = 0.0;
    double theta = 0.0;
    double q = 0.0;
};

struct BvpOptions {
    /// Longest multiple-shooting piece.
    double max_piece = 0.5;
    /// Fixed number of pieces; 0 selects ceil((t2 - t1) / max_piece).
    int pieces = 0;
    /// Integrator step inside a piece.
    double step = 0.01;
    double tolerance = 1e-11;
    int max_iterations = 40;
    /// Output sampling of the minimising curve; at most 1/20.
    double sample_step = 0.05;
};

/// Minimising curve sampled at a uniform step, with velocities (I, p) = (theta', q').
/// The first sample sits at (theta_1, q_1 - 1), the last at (theta_2, q_2).
struct DiscreteCurve {
    double a = 0.0;
    double step = 0.0;
    std::vector<PhasePoint> samples;
};

/// Two-point minimal action at level a and its derivatives with respect to (t1, theta1, t2, theta2).
struct ActionResult {
    double value = 0.0;
    DiscreteCurve curve;
    /// Multiple-shooting nodes: states (theta, q, I, p) at uniformly spaced times.
    std::vector<double> node_times;
    std::vector<State4> nodes;
    std::array<double, 4> gradient{};
    std::array<std::array<double, 4>, 4> hessian{};
    /// Largest momentum jump between consecutive pieces (the discrete Euler-Lagrange defect).
    double el_residual = 0.0;
    int iterations = 0;
};

/// Lift of theta nearest to target.
double nearest_lift(double theta, double target);

/// Minimal reduced action from (t1, theta1, q1 - 1) to (t2, theta2', q2) where theta2' is the lift of theta2
/// nearest theta1 + a (t2 - t1). Requires t2 > t1, q1 in (0, 1] and q2 in [0, 1). The curve is a chain of
/// true orbit pieces matched by Newton's method; warm supplies a previous solution as the starting guess.
/// Throws MinimizationFailure when the matching stalls.
ActionResult action_A(const ModelParams& params, double a, const Endpoint& start, const Endpoint& end,
                      const BvpOptions& opt = {}, const ActionResult* warm = nullptr, bool with_curve = true);

/// Junction times and angles (lifts in (-1, 1)) and integer dwell times. tau[i] separates junction i
/// from junction i + 1, so the absolute time of junction i is t[i] + tau[0] + ... + tau[i - 1].
struct JunctionVariables {
    std::vector<double> t;
    std::vector<double> theta;
    std::vector<int> tau;

    std::size_t size() const { return t.size(); }
    double absolute_time(std::size_t i) const;
};

struct CompositeOptions {
    BvpOptions bvp;
    ShootingOptions shooting;
    double gradient_tolerance = 1e-8;
    int max_iterations = 60;
    /// Lower bound for every dwell.
    int tau_min = 4;
    /// Dwell search: accept the first dwell whose angle mismatch is below phase_tolerance within
    /// dwell_window steps of the heuristic value, else the best one in the window.
    double phase_tolerance = 0.01;
    int dwell_window = 200;
    /// Smallest Hessian eigenvalue accepted at a minimum.
    double hessian_margin = 1e-6;
};

using Mat2 = std::array<std::array<double, 2>, 2>;

/// Composite functional with its gradient and block-tridiagonal Hessian in (t_0, theta_0, t_1, ...).
struct CompositeEvaluation {
    double value = 0.0;
    std::vector<double> gradient;
    std::vector<Mat2> diagonal;
    std::vector<Mat2> coupling;   // coupling[i] = d2/d(x_i) d(x_{i+1})
    ManifoldPoint plus;
    ManifoldPoint minus;
    std::vector<ActionResult> arcs;

    double gradient_norm() const;
    Eigen::MatrixXd dense_hessian() const;
};

/// Number of junctions for a schedule: max(k, 1).
std::size_t junction_count(const ChainSchedule& schedule);

CompositeEvaluation evaluate_composite(const ModelParams& params, const ChainSchedule& schedule,
                                       const JunctionVariables& junctions, const CompositeOptions& opt = {},
                                       const CompositeEvaluation* warm = nullptr, bool with_curves = false);

/// S+_{a_0}(junction 0) + sum of the dwell actions + sum of the coupling terms - S-_{a_k}(last junction).
/// Each junction i contributes (a_i - a_{i+1}) theta_i - (a_i^2 - a_{i+1}^2) t_i / 2.
double composite_action(const ModelParams& params, const ChainSchedule& schedule, const JunctionVariables& junctions,
                        const CompositeOptions& opt = {});

/// ceil(tau_min + 4 ln(1/mu) / (2 pi sqrt(eps))).
int dwell_heuristic(const ModelParams& params, int tau_min);

/// Dwell for the arc at level a between link points (t0, theta0) and (t1, theta1): the first integer at or
/// above the heuristic whose angle mismatch theta1 - theta0 - a (tau + t1 - t0) is within phase_tolerance
/// of an integer.
int choose_dwell(const ModelParams& params, double a, double t0, double theta0, double t1, double theta1,
                 const CompositeOptions& opt);

/// Junction seed at the chain's link points with phase-matched dwells. For k = 0 the homoclinic link of
/// the single level is located first.
JunctionVariables seed_junctions(const ModelParams& params, const ChainSchedule& schedule,
                                 const CompositeOptions& opt = {});

struct MinimizationResult {
    JunctionVariables minimizer;
    double value = 0.0;
    double gradient_norm = 0.0;
    /// Smallest eigenvalue of the exact Hessian at the minimiser.
    double min_eigenvalue = 0.0;
    int iterations = 0;
};

/// Damped Newton iteration on the junction variables with the dwells held fixed; iterates stay inside
/// (-1, 1)^2 by a fraction-to-boundary rule. Throws EscapedBox when pinned to the boundary and
/// MinimizationFailure when the gradient stalls above tolerance or the Hessian is not positive.
MinimizationResult minimize_composite(const ModelParams& params, const ChainSchedule& schedule,
                                      const JunctionVariables& seed, const CompositeOptions& opt = {});

struct JunctionReport {
    double t = 0.0;
    double jump_I = 0.0;
    double jump_p = 0.0;
    double position_gap = 0.0;
};

struct DiffusionOrbit {
    ModelParams params;
    /// Unstable leg from T(a_0), one arc per dwell, stable leg into T(a_k); q is lifted so that it
    /// increases by one across every junction.
    std::vector<OrbitSegment> segments;
    std::vector<JunctionReport> junctions;
    double max_junction_defect = 0.0;
    double I_min = 0.0;
    double I_max = 0.0;
    double margin = 0.0;
    /// First time with I <= a_0 + margin and the first later time with I >= a_k - margin.
    double t_low = 0.0;
    double t_high = 0.0;
    /// Largest deviation between the stored samples and an independent re-integration restarted at
    /// every shooting node (step reintegration_step).
    double reintegration_error = 0.0;
    /// Time over which a single integration from the first sample stays within 1e-5 of the samples.
    double single_shot_horizon = 0.0;

    double duration() const { return segments.back().t1() - segments.front().t0(); }
    double drift_time() const { return t_high - t_low; }
};

struct ExtractOptions {
    double junction_tolerance = 1e-6;
    double reintegration_step = 1e-3;
    double reintegration_tolerance = 1e-5;
};

/// Concatenates the minimising orbit. Throws JunctionDefect when a velocity jump exceeds the tolerance.
DiffusionOrbit extract_orbit(const ModelParams& params, const ChainSchedule& schedule,
                             const JunctionVariables& minimizer, const CompositeOptions& opt = {},
                             const ExtractOptions& extract = {});

/// Samples of all segments with t,theta,q,I,p header; junction samples appear once.
void write_csv(std::ostream& os, const DiffusionOrbit& orbit);

}  // namespace adiff
