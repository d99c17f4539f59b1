#include "adiff/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "adiff/errors.hpp"
#include "adiff/parallel.hpp"

namespace adiff {

namespace {

template <class F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    }
}

}  // namespace

DriftResult drift_run(const ModelParams& params, double a_minus, double a_plus, const DriftOptions& opt) {
    params.validate();
    if (params.mu > opt.mu_max) throw DomainError("mu exceeds the configured validity threshold");
    DriftResult r;
    r.schedule = stage("chain", [&] { return build_chain(params, a_minus, a_plus, opt.c, opt.link); });
    r.seed = stage("seed", [&] { return seed_junctions(params, r.schedule, opt.composite); });
    r.minimum = stage("minimize", [&] { return minimize_composite(params, r.schedule, r.seed, opt.composite); });
    r.orbit = stage("extract",
                    [&] { return extract_orbit(params, r.schedule, r.minimum.minimizer, opt.composite, opt.extract); });
    return r;
}

bool ScalingFit::decreasing() const {
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        if (!(samples[i + 1].T < samples[i].T)) return false;
    return samples.size() >= 2;
}

ScalingFit fit_scaling(std::vector<ScalingSample> samples) {
    if (samples.size() < 3) throw DomainError("scaling fit needs at least three samples");
    for (const auto& s : samples)
        if (!(s.mu > 0.0 && s.mu < 1.0 && s.T > 0.0)) throw DomainError("scaling samples need mu in (0, 1) and T > 0");
    std::sort(samples.begin(), samples.end(), [](const auto& x, const auto& y) { return x.mu < y.mu; });

    ScalingFit fit;
    fit.samples = samples;
    const std::size_t n = samples.size();
    std::vector<double> g1(n), g2(n), lt(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = samples[i].mu;
        g1[i] = std::log(std::abs(std::log(mu)) / mu);
        g2[i] = std::log(1.0 / (mu * mu));
        lt[i] = std::log(samples[i].T);
    }
    auto solve = [&](const std::vector<double>& g, std::vector<double>& res, double& rms) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += lt[i] - g[i];
        c /= static_cast<double>(n);
        res.resize(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            res[i] = lt[i] - c - g[i];
            ss += res[i] * res[i];
        }
        rms = std::sqrt(ss / static_cast<double>(n));
        return std::exp(c);
    };
    fit.C1 = solve(g1, fit.residuals1, fit.rms1);
    fit.C2 = solve(g2, fit.residuals2, fit.rms2);
    fit.preferred = fit.rms1 <= fit.rms2 ? 1 : 2;
    return fit;
}

ScalingFit time_scaling(const ModelParams& params, const std::vector<double>& mus, double a_minus, double a_plus,
                        const DriftOptions& opt) {
    if (mus.size() < 4) throw DomainError("time scaling needs at least four values of mu");
    const auto [lo, hi] = std::minmax_element(mus.begin(), mus.end());
    if (!(*lo > 0.0) || *hi < 8.0 * *lo) throw DomainError("mu grid must be positive and span a factor of eight");

    std::vector<std::optional<ScalingSample>> runs(mus.size());
    std::vector<std::string> errors(mus.size());
    parallel_for(mus.size(), [&](std::size_t i) {
        ModelParams p = params;
        p.mu = mus[i];
        try {
            const DriftResult r = drift_run(p, a_minus, a_plus, opt);
            runs[i] = ScalingSample{mus[i], r.orbit.drift_time(), r.orbit.duration()};
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });

    std::vector<ScalingSample> ok;
    std::vector<std::pair<double, std::string>> failures;
    for (std::size_t i = 0; i < mus.size(); ++i) {
        if (runs[i])
            ok.push_back(*runs[i]);
        else
            failures.emplace_back(mus[i], errors[i]);
    }
    if (ok.size() < 3) throw NumericalError("ScalingFailure", "fewer than three drift runs succeeded");
    ScalingFit fit = fit_scaling(ok);
    fit.failures = std::move(failures);
    return fit;
}

std::vector<GapRow> gap_report(const std::vector<double>& mus, double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("gap report needs c > 0");
    std::vector<GapRow> rows;
    for (double mu : mus) {
        if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("gap report needs mu > 0");
        GapRow r;
        r.mu = mu;
        r.gap = std::sqrt(mu);
        r.step = c * mu;
        r.ratio = r.gap / r.step;
        rows.push_back(r);
    }
    return rows;
}

DecayFit fit_decay(const std::vector<double>& tau, const std::vector<double>& defect) {
    if (tau.size() != defect.size() || tau.size() < 2) throw DomainError("decay fit needs matching samples");
    const std::size_t n = tau.size();
    double mx = 0.0, my = 0.0;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(defect[i] != 0.0) || !std::isfinite(defect[i])) throw DomainError("decay fit needs nonzero defects");
        y[i] = std::log(std::abs(defect[i]));
        mx += tau[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (tau[i] - mx) * (y[i] - my);
        sxx += (tau[i] - mx) * (tau[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw DomainError("decay fit needs distinct dwell times");
    DecayFit f;
    const double slope = sxy / sxx;
    f.rate = -slope;
    f.log_prefactor = my - slope * mx;
    f.r_squared = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
    return f;
}

AntiIntegrableSample anti_integrable_defect(const ModelParams& params, double a, const JunctionVariables& junctions,
                                            int tau, const CompositeOptions& opt) {
    if (junctions.size() == 0) throw DomainError("anti-integrable defect needs at least one junction");
    ChainSchedule s;
    s.levels.assign(std::max<std::size_t>(junctions.size(), 1) + (junctions.size() > 1 ? 1 : 0), a);
    JunctionVariables jv = junctions;
    jv.tau.assign(junctions.size() - 1, tau);
    AntiIntegrableSample out;
    out.tau = tau;
    out.composite = composite_action(params, s, jv, opt);
    std::vector<double> parts(jv.size());
    parallel_for(jv.size(), [&](std::size_t i) {
        parts[i] = sigma_jet(params, a, a, jv.t[i], jv.theta[i], opt.shooting).jet.value;
    });
    for (double v : parts) out.separated += v;
    out.defect = out.composite - out.separated;
    return out;
}

}  // namespace adiff
