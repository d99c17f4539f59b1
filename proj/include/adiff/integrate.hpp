#pragma once

#include <iosfwd>
#include <vector>

#include "adiff/model.hpp"

namespace adiff {

/// Samples of one numerical orbit at a uniform step. Angles are lifts.
struct OrbitSegment {
    ModelParams params;
    std::vector<PhasePoint> samples;
    double step = 0.0;

    double t0() const { return samples.front().t; }
    double t1() const { return samples.back().t; }
    double duration() const { return samples.back().t - samples.front().t; }
};

/// Orbit of the extended flow from x0 over [x0.t, x0.t + duration]. When step does not divide
/// duration the last step is shortened. Throws NonFinite on blow-up.
OrbitSegment flow(const ModelParams& params, const PhasePoint& x0, double duration, double step);

/// Same as flow but allows negative duration (samples ordered by integration, i.e. decreasing t).
OrbitSegment flow_signed(const ModelParams& params, const PhasePoint& x0, double duration, double step);

/// Integral of the reduced Lagrangian at level a along the samples, composite seven-point
/// Newton-Cotes with a Lagrange-interpolated tail.
double action_integral(const OrbitSegment& segment, double a);

/// Quadrature weights (in units of h) for n intervals of uniform width.
std::vector<double> newton_cotes_weights(int n);

/// CSV with header t,theta,q,I,p and 17 significant digits.
void write_csv(std::ostream& os, const OrbitSegment& segment);
void write_csv(std::ostream& os, const std::vector<PhasePoint>& samples);

}  // namespace adiff
