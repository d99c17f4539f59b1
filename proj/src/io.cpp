#include "adiff/io.hpp"

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "adiff/errors.hpp"

namespace adiff {

Json to_json(const ModelParams& params) {
    Json terms = Json::array();
    for (const auto& t : params.perturbation.terms())
        terms.push_back(Json::array({t.k_t, t.k_theta, t.k_q, t.amplitude, t.phase}));
    return Json{{"epsilon", params.epsilon}, {"mu", params.mu}, {"perturbation", terms}};
}

ModelParams params_from_json(const Json& j) {
    if (!j.is_object()) throw DomainError("model parameters must be a JSON object");
    ModelParams p;
    try {
        if (j.contains("epsilon")) p.epsilon = j.at("epsilon").get<double>();
        if (j.contains("mu")) p.mu = j.at("mu").get<double>();
        if (j.contains("perturbation")) {
            std::vector<PerturbationTerm> terms;
            for (const auto& row : j.at("perturbation")) {
                if (!row.is_array() || row.size() != 5) throw DomainError("perturbation rows need five entries");
                terms.push_back({row[0].get<int>(), row[1].get<int>(), row[2].get<int>(), row[3].get<double>(),
                                 row[4].get<double>()});
            }
            p.perturbation = Perturbation(std::move(terms));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("malformed model parameters: ") + e.what());
    }
    p.validate();
    return p;
}

Json to_json(const ChainSchedule& schedule) {
    Json links = Json::array();
    for (std::size_t i = 0; i < schedule.links.size(); ++i) {
        const Link& l = schedule.links[i];
        links.push_back(Json{{"i", i + 1}, {"t", l.t}, {"theta", l.theta}, {"isolated", l.isolated}});
    }
    return Json{{"levels", schedule.levels}, {"links", links}, {"c_used", schedule.c_used}};
}

Json to_json(const CriticalPointReport& report) {
    Json pts = Json::array();
    for (const auto& c : report.points)
        pts.push_back(Json{{"t", c.t},
                           {"theta", c.theta},
                           {"value", c.value},
                           {"class", to_string(c.classification)},
                           {"nondegenerate", c.nondegenerate}});
    return Json{{"points", pts},
                {"degenerate_field", report.degenerate_field},
                {"newton_divergences", report.newton_divergences}};
}

Json summary_json(const DiffusionOrbit& orbit) {
    return Json{{"I_min", orbit.I_min},
                {"I_max", orbit.I_max},
                {"T", orbit.duration()},
                {"max_junction_defect", orbit.max_junction_defect},
                {"drift_time", orbit.drift_time()},
                {"junctions", orbit.junctions.size()},
                {"reintegration_error", orbit.reintegration_error},
                {"single_shot_horizon", orbit.single_shot_horizon}};
}

Json to_json(const ScalingFit& fit) {
    Json samples = Json::array();
    for (std::size_t i = 0; i < fit.samples.size(); ++i) {
        const auto& s = fit.samples[i];
        samples.push_back(Json{{"mu", s.mu},
                               {"T", s.T},
                               {"duration", s.duration},
                               {"residual_log_mu_over_mu", fit.residuals1[i]},
                               {"residual_inverse_mu_squared", fit.residuals2[i]}});
    }
    Json failures = Json::array();
    for (const auto& [mu, what] : fit.failures) failures.push_back(Json{{"mu", mu}, {"error", what}});
    return Json{{"samples", samples},
                {"C1", fit.C1},
                {"C2", fit.C2},
                {"rms1", fit.rms1},
                {"rms2", fit.rms2},
                {"preferred_law", fit.preferred == 1 ? "C|ln mu|/mu" : "C/mu^2"},
                {"decreasing", fit.decreasing()},
                {"failures", failures}};
}

Json to_json(const std::vector<GapRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) out.push_back(Json{{"mu", r.mu}, {"gap", r.gap}, {"step", r.step}, {"ratio", r.ratio}});
    return out;
}

std::string config_hash(const Json& config) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::filesystem::path make_run_directory(const std::filesystem::path& root, const std::string& name,
                                         const Json& config) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    const std::string base = name + "-" + stamp.str() + "-" + config_hash(config);
    std::filesystem::path dir = root / base;
    for (int n = 1; std::filesystem::exists(dir); ++n) dir = root / (base + "-" + std::to_string(n));
    std::filesystem::create_directories(dir);
    write_json(dir / "config.json", config);
    return dir;
}

void write_manifest(const std::filesystem::path& dir, const Json& config, const Json& outcomes) {
    write_json(dir / "manifest.json",
               Json{{"config_hash", config_hash(config)}, {"parameters", config}, {"outcomes", outcomes}});
}

void write_json(const std::filesystem::path& file, const Json& j) {
    std::ofstream os(file);
    if (!os) throw DomainError("cannot write " + file.string());
    os << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw DomainError("cannot read " + file.string());
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError("invalid JSON in " + file.string() + ": " + e.what());
    }
}

}  // namespace adiff
