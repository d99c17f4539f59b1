#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adiff/errors.hpp"
#include "adiff/io.hpp"
#include "doctest.h"

using namespace adiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("adiff-io-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("model parameters round-trip through JSON") {
    ModelParams p;
    p.epsilon = 0.0625;
    p.mu = 1e-3;
    p.perturbation = Perturbation({{1, 2, 0, 0.5, 0.25}, {0, 1, 1, -1.0, 0.0}});
    const ModelParams q = params_from_json(to_json(p));
    CHECK(q.epsilon == p.epsilon);
    CHECK(q.mu == p.mu);
    CHECK(q.perturbation == p.perturbation);
    CHECK(params_from_json(Json::object()).perturbation.is_arnold());
}

TEST_CASE("malformed parameters are domain errors") {
    CHECK_THROWS_AS(params_from_json(Json::array()), DomainError);
    CHECK_THROWS_AS(params_from_json(Json{{"epsilon", "x"}}), DomainError);
    CHECK_THROWS_AS(params_from_json(Json{{"epsilon", -1.0}}), DomainError);
    CHECK_THROWS_AS(params_from_json(Json{{"perturbation", Json::array({Json::array({1, 2})})}}), DomainError);
}

TEST_CASE("config hash is FNV-1a of the compact dump") {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : std::string("{\"mu\":0.001}")) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    CHECK(config_hash(Json{{"mu", 0.001}}) == std::string(buf));
    CHECK(config_hash(Json{{"mu", 0.001}}) != config_hash(Json{{"mu", 0.002}}));
}

TEST_CASE("run directories carry the config and manifest") {
    const fs::path root = scratch("run");
    const Json cfg{{"epsilon", 0.25}, {"mu", 0.0}};
    const fs::path a = make_run_directory(root, "simulate", cfg);
    const fs::path b = make_run_directory(root, "simulate", cfg);
    CHECK(a != b);
    CHECK(a.filename().string().find(config_hash(cfg)) != std::string::npos);
    CHECK(read_json(a / "config.json") == cfg);
    write_manifest(a, cfg, Json{{"ok", true}});
    const Json m = read_json(a / "manifest.json");
    CHECK(m["config_hash"] == config_hash(cfg));
    CHECK(m["outcomes"]["ok"] == true);
    CHECK_THROWS_AS(read_json(root / "missing.json"), DomainError);
    std::ofstream(root / "bad.json") << "{";
    CHECK_THROWS_AS(read_json(root / "bad.json"), DomainError);
}

TEST_CASE("chain and orbit summaries have the documented keys") {
    ChainSchedule s;
    s.levels = {0.0, 0.001};
    Link l;
    l.t = 0.5;
    l.theta = 0.25;
    l.isolated = true;
    s.links = {l};
    s.c_used = 1.0;
    const Json j = to_json(s);
    CHECK(j["levels"].size() == 2);
    CHECK(j["links"][0]["i"] == 1);
    CHECK(j["links"][0]["isolated"] == true);
    CHECK(j["c_used"] == 1.0);

    DiffusionOrbit o;
    OrbitSegment seg;
    seg.samples = {PhasePoint{0, 0, 0, 0, 0}, PhasePoint{2, 0, 0, 0, 0}};
    o.segments = {seg};
    o.I_min = -1e-4;
    o.I_max = 0.5;
    o.max_junction_defect = 1e-12;
    const Json sum = summary_json(o);
    CHECK(sum["I_min"] == -1e-4);
    CHECK(sum["I_max"] == 0.5);
    CHECK(sum["T"] == 2.0);
    CHECK(sum["max_junction_defect"] == 1e-12);
}
