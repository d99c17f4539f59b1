#pragma once

#include <string>
#include <vector>

#include "adiff/bessi.hpp"
#include "adiff/manifolds.hpp"
#include "adiff/model.hpp"

namespace adiff {

struct DriftOptions {
    /// Chain spacing constant: levels are at most c mu apart.
    double c = 0.8;
    /// Runs above this mu are refused.
    double mu_max = 0.05;
    LinkOptions link;
    CompositeOptions composite;
    ExtractOptions extract;
};

struct DriftResult {
    ChainSchedule schedule;
    JunctionVariables seed;
    MinimizationResult minimum;
    DiffusionOrbit orbit;
};

/// build_chain, seed_junctions, minimize_composite and extract_orbit in sequence. Failures are rethrown
/// as StageError naming the stage ("chain", "seed", "minimize" or "extract").
DriftResult drift_run(const ModelParams& params, double a_minus, double a_plus, const DriftOptions& opt = {});

struct ScalingSample {
    double mu = 0.0;
    /// Drift time between the low and high crossings of the action.
    double T = 0.0;
    /// Whole orbit duration.
    double duration = 0.0;
};

/// Laws T = C1 |ln mu| / mu (law 1) and T = C2 / mu^2 (law 2) fitted by least squares in log space.
struct ScalingFit {
    std::vector<ScalingSample> samples;
    double C1 = 0.0;
    double C2 = 0.0;
    std::vector<double> residuals1;
    std::vector<double> residuals2;
    /// Root mean square of the log residuals.
    double rms1 = 0.0;
    double rms2 = 0.0;
    int preferred = 0;
    /// mu values whose drift run failed, with the error text.
    std::vector<std::pair<double, std::string>> failures;

    bool decreasing() const;
};

/// Fit of both laws; needs at least three samples with mu in (0, 1) and T > 0.
ScalingFit fit_scaling(std::vector<ScalingSample> samples);

/// Drift runs over the mu grid (at least four values spanning a factor of eight). Failed runs are
/// recorded; fewer than three successes throw NumericalError.
ScalingFit time_scaling(const ModelParams& params, const std::vector<double>& mus, double a_minus, double a_plus,
                        const DriftOptions& opt = {});

struct GapRow {
    double mu = 0.0;
    double gap = 0.0;     // sqrt(mu)
    double step = 0.0;    // c mu
    double ratio = 0.0;   // gap / step
};

/// Requires mu > 0 and c > 0.
std::vector<GapRow> gap_report(const std::vector<double>& mus, double c);

/// Exponential fit defect ~ C exp(-rate tau) by least squares on log defect.
struct DecayFit {
    double rate = 0.0;
    double log_prefactor = 0.0;
    double r_squared = 0.0;
};
DecayFit fit_decay(const std::vector<double>& tau, const std::vector<double>& defect);

struct AntiIntegrableSample {
    int tau = 0;
    double composite = 0.0;
    double separated = 0.0;
    double defect = 0.0;
};

/// Composite value minus the sum of per-junction splittings for equal levels a, with every dwell equal to tau.
AntiIntegrableSample anti_integrable_defect(const ModelParams& params, double a, const JunctionVariables& junctions,
                                            int tau, const CompositeOptions& opt = {});

}  // namespace adiff
