#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adiff/melnikov.hpp"
#include "adiff/model.hpp"

namespace adiff {

/// Plus is the unstable manifold of T(a) (orbits asymptotic in the past), Minus the stable one.
enum class Branch { Plus, Minus };
std::string to_string(Branch b);

struct ShootingOptions {
    /// Launch distance from the torus is offset_scale * 2 sqrt(eps).
    double offset_scale = 1e-4;
    /// Maximum integrator step along the shooting orbit.
    double step = 0.01;
    /// Newton stops once the endpoint miss is below tolerance; misses above accept are failures.
    double tolerance = 1e-12;
    double accept = 1e-9;
    int max_iterations = 40;
    int restarts = 8;
};

/// Launch parameters: time of flight from the launch point and the launch angle.
struct ShootingSeed {
    double duration = 0.0;
    double launch_theta = 0.0;
};

/// One point of the graph of S^{+-}_a together with the orbit that realises it.
struct ManifoldPoint {
    double a = 0.0;
    Branch branch = Branch::Plus;
    double t = 0.0, theta = 0.0, q = 0.0;
    double value = 0.0;
    /// Momenta (I, p) = (a + dS/dtheta, dS/dq) on the manifold and the energy H there.
    double I = 0.0, p = 0.0;
    double energy = 0.0;
    ShootingSeed seed;
    double residual = 0.0;
    /// Second derivatives of S in (t, theta, q).
    std::array<std::array<double, 3>, 3> hessian{};

    /// (dS/dt, dS/dtheta, dS/dq) = (a^2/2 - H, I - a, p).
    std::array<double, 3> gradient() const { return {0.5 * a * a - energy, I - a, p}; }
};

/// Solves for the orbit of the stable or unstable manifold of T(a) through (t, theta, q), q in (-1, 1),
/// and returns S with its exact first and second derivatives. q = 0 returns the torus itself.
/// Throws ShootingFailure after the retry ladder.
ManifoldPoint shoot_manifold_point(const ModelParams& params, double a, Branch branch, double t, double theta,
                                   double q, const ShootingOptions& opt = {},
                                   const std::optional<ShootingSeed>& seed = std::nullopt);

/// Unperturbed launch parameters for the node (t, theta, q); used as the default Newton start.
ShootingSeed separatrix_seed(const ModelParams& params, double a, Branch branch, double theta, double q,
                             const ShootingOptions& opt = {});

struct GridResolution {
    int n_t = 32;
    int n_theta = 32;
    /// Odd counts place q = 0 and q = +-1/2 on nodes.
    int n_q = 49;

    /// Throws DomainError below (16, 16, 32).
    void validate() const;
};

/// S^{+-}_a on the nodes t_i = i / n_t, theta_j = j / n_theta, q_k = -3/4 + 3/2 k / (n_q - 1).
struct GeneratingFunctionGrid {
    ModelParams params;
    double a = 0.0;
    Branch branch = Branch::Plus;
    GridResolution resolution;
    std::vector<double> values;
    std::vector<double> momentum_I;
    std::vector<double> momentum_p;
    /// Max over nodes of |S_t + H(t, theta, q, a + S_theta, S_q) - a^2/2| with grid derivatives.
    double hj_residual = 0.0;

    static constexpr double q_min = -0.75;
    static constexpr double q_max = 0.75;

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * resolution.n_theta + j) * resolution.n_q + k;
    }
    double at(int i, int j, int k) const { return values[index(i, j, k)]; }
    double t_node(int i) const { return static_cast<double>(i) / resolution.n_t; }
    double theta_node(int j) const { return static_cast<double>(j) / resolution.n_theta; }
    double q_node(int k) const { return q_min + (q_max - q_min) * k / (resolution.n_q - 1); }
};

GeneratingFunctionGrid compute_generating_function(const ModelParams& params, double a, Branch branch,
                                                   const GridResolution& resolution = {},
                                                   const ShootingOptions& opt = {});

/// Hamilton-Jacobi defect at every node: spectral derivatives in t and theta, eighth-order finite
/// differences in q. Ordered like GeneratingFunctionGrid::values.
std::vector<double> hj_residual_field(const GeneratingFunctionGrid& grid);

/// Finite-difference weights for the first derivative at x0 from the given nodes (Fornberg).
std::vector<double> fd_weights(double x0, const std::vector<double>& nodes);

/// Differentiation matrix for n equispaced samples of a 1-periodic function, row-major.
std::vector<double> periodic_derivative_matrix(int n);

/// Sigma_{a,a'}(t, theta) = S+_a(t, theta, 1/2) - S-_{a'}(t, theta, -1/2) + (a - a') theta - (a^2 - a'^2) t / 2.
/// The periodic part S+ - S- is stored on the section nodes with its exact derivatives and evaluated
/// by bicubic Hermite interpolation; the affine part is exact. a = a' gives the section splitting.
struct SplittingField {
    ModelParams params;
    double a = 0.0;
    double a_prime = 0.0;
    int n_t = 0;
    int n_theta = 0;
    std::vector<double> periodic;
    std::vector<double> d_t;
    std::vector<double> d_theta;
    std::vector<double> d_t_theta;
    /// Matching defect |p+ - p-| at every node.
    std::vector<double> p_jump;

    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_theta + j; }
    double node(int i, int j) const { return periodic[index(i, j)] + affine(static_cast<double>(i) / n_t,
                                                                                static_cast<double>(j) / n_theta); }
    double affine(double t, double theta) const;
    double value(double t, double theta) const;
    std::array<double, 2> gradient(double t, double theta) const;
};

SplittingField splitting_delta(const ModelParams& params, double a, const GridResolution& resolution = {},
                               const ShootingOptions& opt = {});
/// Requires |a - a'| <= 0.1.
SplittingField sigma(const ModelParams& params, double a, double a_prime, const GridResolution& resolution = {},
                     const ShootingOptions& opt = {});

struct LinkOptions {
    /// Seeds come from critical points of the first-order model found from a seed_grid^2 lattice.
    int seed_grid = 12;
    double gradient_tolerance = 1e-10;
    int max_iterations = 30;
    double isolation_radius = 1e-3;
    ShootingOptions shooting;
};

/// Critical point of Sigma_{a,a'} with the two manifold points that meet there.
struct Link {
    double a = 0.0;
    double a_prime = 0.0;
    double t = 0.0;
    double theta = 0.0;
    double value = 0.0;
    std::array<std::array<double, 2>, 2> hessian{};
    double gradient_norm = 0.0;
    CriticalClass classification = CriticalClass::Degenerate;
    bool isolated = false;
    ManifoldPoint plus;
    ManifoldPoint minus;
};

/// Value, gradient and Hessian of Sigma_{a,a'} at one point by direct shooting.
struct SigmaJet {
    Jet2 jet;
    ManifoldPoint plus;
    ManifoldPoint minus;
};
SigmaJet sigma_jet(const ModelParams& params, double a, double a_prime, double t, double theta,
                   const ShootingOptions& opt = {}, const std::optional<ShootingSeed>& plus_seed = std::nullopt,
                   const std::optional<ShootingSeed>& minus_seed = std::nullopt);

/// Refined critical point of Sigma_{a,a'}; a minimum is preferred over a saddle. Throws NoCriticalPoint.
Link find_link(const ModelParams& params, double a, double a_prime, const LinkOptions& opt = {});

/// Levels a_0 < ... < a_k with verified links between neighbours.
struct ChainSchedule {
    std::vector<double> levels;
    /// links[i] joins levels[i] and levels[i + 1].
    std::vector<Link> links;
    double c_used = 0.0;

    int k() const { return static_cast<int>(levels.size()) - 1; }
    double max_spacing() const;
};

/// Uniform levels with spacing at most c mu. When some link fails the whole chain is retried with c/2, c/4
/// and c/8 before ChainBroken is thrown with the 1-based index of the failing link.
ChainSchedule build_chain(const ModelParams& params, double a_minus, double a_plus, double c,
                          const LinkOptions& opt = {});

/// Largest c in [c_lo, c_hi] (to the bisection resolution) for which find_link(a, a + c mu) returns an
/// isolated minimum. Returns c_lo when even c_lo fails.
double link_threshold(const ModelParams& params, double a, double c_lo, double c_hi, int iterations = 12,
                      const LinkOptions& opt = {});

void write_csv(std::ostream& os, const GeneratingFunctionGrid& grid);
/// Rows over the t nodes and the lifted theta window [-1, 1].
void write_csv(std::ostream& os, const SplittingField& field);

}  // namespace adiff
