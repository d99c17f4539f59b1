#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "adiff/bessi.hpp"
#include "adiff/errors.hpp"
#include "adiff/experiments.hpp"
#include "adiff/integrate.hpp"
#include "adiff/io.hpp"
#include "adiff/manifolds.hpp"
#include "adiff/melnikov.hpp"
#include "adiff/parallel.hpp"

namespace fs = std::filesystem;
using namespace adiff;

namespace {

struct Flags {
    std::string config;
    std::optional<double> epsilon, mu, a, a_prime, a_minus, a_plus, step, duration, c;
    std::optional<int> resolution, seed;
    std::optional<std::string> out;
    unsigned threads = 0;
};

Json defaults() {
    Json j = to_json(ModelParams{});
    j["a"] = 0.0;
    j["a_minus"] = 0.0;
    j["a_plus"] = 0.5;
    j["step"] = 1e-3;
    j["duration"] = 100.0;
    j["seed"] = 0;
    j["c"] = 0.8;
    j["mus"] = {4e-4, 8e-4, 1.6e-3, 3.2e-3};
    return j;
}

Json resolve(const std::string& command, const Flags& f) {
    Json j = defaults();
    if (command == "melnikov") j["resolution"] = 64;
    if (command == "manifold" || command == "splitting") j["resolution"] = 32;
    if (command == "gaps") j["mus"] = {1e-2, 1e-3, 1e-4};
    if (!f.config.empty()) {
        const Json file = read_json(f.config);
        if (!file.is_object()) throw DomainError("config must be a JSON object");
        for (const auto& [k, v] : file.items()) j[k] = v;
        if (command == "gaps" && file.contains("c")) j["c_fixed"] = true;
    }
    if (command == "gaps" && f.c) j["c_fixed"] = true;
    auto set = [&](const char* key, const auto& v) {
        if (v) j[key] = *v;
    };
    set("epsilon", f.epsilon);
    set("mu", f.mu);
    set("a", f.a);
    set("a_prime", f.a_prime);
    set("a_minus", f.a_minus);
    set("a_plus", f.a_plus);
    set("step", f.step);
    set("duration", f.duration);
    set("c", f.c);
    set("resolution", f.resolution);
    set("seed", f.seed);
    if (command == "splitting" && !j.contains("a_prime")) j["a_prime"] = j["a"];
    j["command"] = command;
    return j;
}

double num(const Json& j, const char* key) {
    try {
        return j.at(key).get<double>();
    } catch (const nlohmann::json::exception&) {
        throw DomainError(std::string("config entry '") + key + "' must be a number");
    }
}

int integer(const Json& j, const char* key) {
    try {
        return j.at(key).get<int>();
    } catch (const nlohmann::json::exception&) {
        throw DomainError(std::string("config entry '") + key + "' must be an integer");
    }
}

std::ofstream open(const fs::path& file) {
    std::ofstream os(file);
    if (!os) throw DomainError("cannot write " + file.string());
    return os;
}

Json run_simulate(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    const double a = num(cfg, "a");
    PhasePoint x0{0.0, 0.0, 0.0, a, 0.0};
    if (cfg.contains("initial")) {
        const auto& v = cfg.at("initial");
        if (!v.is_array() || v.size() != 5) throw DomainError("initial must be [t, theta, q, I, p]");
        x0 = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>(), v[4].get<double>()};
    }
    const OrbitSegment seg = flow(p, x0, num(cfg, "duration"), num(cfg, "step"));
    auto os = open(dir / "orbit.csv");
    write_csv(os, seg);
    double drift = 0.0;
    for (const auto& s : seg.samples) drift = std::max(drift, std::abs(s.I - x0.I));
    return Json{{"samples", seg.samples.size()}, {"duration", seg.duration()}, {"max_I_change", drift}};
}

Json run_melnikov(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    const MelnikovField field = melnikov_field(p, num(cfg, "a"), integer(cfg, "resolution"));
    const CriticalPointReport report = critical_points(field);
    auto os = open(dir / "melnikov.csv");
    write_csv(os, field);
    const Json j = to_json(report);
    write_json(dir / "critical_points.json", j);
    return Json{{"critical_points", report.points.size()}, {"degenerate_field", report.degenerate_field}};
}

Json run_manifold(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    GridResolution res;
    res.n_t = res.n_theta = integer(cfg, "resolution");
    if (cfg.contains("n_q")) res.n_q = integer(cfg, "n_q");
    Json out = Json::object();
    for (Branch b : {Branch::Plus, Branch::Minus}) {
        const GeneratingFunctionGrid g = compute_generating_function(p, num(cfg, "a"), b, res);
        auto os = open(dir / ("S_" + to_string(b) + ".csv"));
        write_csv(os, g);
        out["hj_residual_" + to_string(b)] = g.hj_residual;
    }
    return out;
}

Json run_splitting(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    GridResolution res;
    res.n_t = res.n_theta = integer(cfg, "resolution");
    const double a = num(cfg, "a");
    const double ap = num(cfg, "a_prime");
    const SplittingField field = sigma(p, a, ap, res);
    auto os = open(dir / "sigma.csv");
    write_csv(os, field);
    Json out{{"a", a}, {"a_prime", ap}};
    try {
        const Link l = find_link(p, a, ap);
        out["link"] = Json{{"t", l.t},
                           {"theta", l.theta},
                           {"value", l.value},
                           {"class", to_string(l.classification)},
                           {"isolated", l.isolated}};
    } catch (const NoCriticalPoint& e) {
        out["link"] = nullptr;
        out["link_error"] = e.what();
    }
    return out;
}

Json run_chain(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    const ChainSchedule s = build_chain(p, num(cfg, "a_minus"), num(cfg, "a_plus"), num(cfg, "c"));
    const Json j = to_json(s);
    write_json(dir / "chain.json", j);
    return Json{{"k", s.k()}, {"c_used", s.c_used}, {"max_spacing", s.max_spacing()}};
}

DriftOptions drift_options(const Json& cfg) {
    DriftOptions opt;
    opt.c = num(cfg, "c");
    return opt;
}

Json run_diffuse(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    const DriftResult r = drift_run(p, num(cfg, "a_minus"), num(cfg, "a_plus"), drift_options(cfg));
    auto os = open(dir / "orbit.csv");
    write_csv(os, r.orbit);
    write_json(dir / "chain.json", to_json(r.schedule));
    const Json summary = summary_json(r.orbit);
    write_json(dir / "summary.json", summary);
    return summary;
}

Json run_scaling(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    const std::vector<double> mus = cfg.at("mus").get<std::vector<double>>();
    const ScalingFit fit = time_scaling(p, mus, num(cfg, "a_minus"), num(cfg, "a_plus"), drift_options(cfg));
    auto os = open(dir / "scaling.csv");
    os << "mu,T,duration\n" << std::setprecision(17);
    for (const auto& s : fit.samples) os << s.mu << ',' << s.T << ',' << s.duration << '\n';
    const Json j = to_json(fit);
    write_json(dir / "scaling.json", j);
    return j;
}

Json run_gaps(const Json& cfg, const ModelParams& p, const fs::path& dir) {
    double c = num(cfg, "c");
    bool measured = false;
    if (!cfg.contains("c_fixed") || !cfg.at("c_fixed").get<bool>()) {
        ModelParams at = p;
        if (!(at.mu > 0.0)) at.mu = 1e-3;
        c = link_threshold(at, num(cfg, "a"), 0.25, 4.0);
        measured = true;
    }
    const std::vector<GapRow> rows = gap_report(cfg.at("mus").get<std::vector<double>>(), c);
    auto os = open(dir / "gaps.csv");
    os << "mu,gap,step,ratio\n" << std::setprecision(17);
    for (const auto& r : rows) os << r.mu << ',' << r.gap << ',' << r.step << ',' << r.ratio << '\n';
    const Json j{{"c", c}, {"c_measured", measured}, {"rows", to_json(rows)}};
    write_json(dir / "gaps.json", j);
    return j;
}

int run(const std::string& command, const Flags& f) {
    const Json cfg = resolve(command, f);
    ModelParams p = params_from_json(cfg);
    fs::path root = "runs";
    if (const char* env = std::getenv("ADIFF_OUTPUT_ROOT"); env && *env) root = env;
    if (f.out) root = *f.out;
    const fs::path dir = make_run_directory(root, command, cfg);

    Json outcome;
    if (command == "simulate") outcome = run_simulate(cfg, p, dir);
    else if (command == "melnikov") outcome = run_melnikov(cfg, p, dir);
    else if (command == "manifold") outcome = run_manifold(cfg, p, dir);
    else if (command == "splitting") outcome = run_splitting(cfg, p, dir);
    else if (command == "chain") outcome = run_chain(cfg, p, dir);
    else if (command == "diffuse") outcome = run_diffuse(cfg, p, dir);
    else if (command == "scaling") outcome = run_scaling(cfg, p, dir);
    else outcome = run_gaps(cfg, p, dir);
    write_manifest(dir, cfg, outcome);
    std::cout << dir.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Arnold diffusion numerical lab"};
    app.fallthrough();
    app.require_subcommand(1, 1);
    Flags f;
    app.add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--epsilon", f.epsilon, "pendulum strength");
    app.add_option("--mu", f.mu, "perturbation size");
    app.add_option("--a", f.a, "torus level");
    app.add_option("--a-prime", f.a_prime, "second torus level (splitting)");
    app.add_option("--a-minus", f.a_minus, "start level of the drift");
    app.add_option("--a-plus", f.a_plus, "end level of the drift");
    app.add_option("--c", f.c, "chain spacing constant");
    app.add_option("--out", f.out, "output root directory");
    app.add_option("--step", f.step, "integrator step");
    app.add_option("--duration", f.duration, "integration time");
    app.add_option("--resolution", f.resolution, "grid resolution");
    app.add_option("--seed", f.seed, "recorded with the run configuration");
    app.add_option("--threads", f.threads, "worker cap (0 = hardware)");
    app.add_subcommand("simulate", "integrate one orbit of the extended flow");
    app.add_subcommand("melnikov", "Melnikov field and its critical points");
    app.add_subcommand("manifold", "stable and unstable generating functions on a grid");
    app.add_subcommand("splitting", "splitting function on the section and its link");
    app.add_subcommand("chain", "transition chain between two levels");
    app.add_subcommand("diffuse", "diffusion orbit from the discrete action functional");
    app.add_subcommand("scaling", "drift time against mu");
    app.add_subcommand("gaps", "gap width against chain step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n' << app.help();
        return 1;
    }

    set_thread_cap(f.threads);
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, f);
    } catch (const StageError& e) {
        std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
        return e.category() == ErrorCategory::Domain ? 2 : 3;
    } catch (const Error& e) {
        std::cerr << "error in stage " << command << ": " << e.what() << '\n';
        return e.category() == ErrorCategory::Domain ? 2 : 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error in stage config: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error in stage output: " << e.what() << '\n';
        return 2;
    }
}
