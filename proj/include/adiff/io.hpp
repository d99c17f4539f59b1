#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "adiff/bessi.hpp"
#include "adiff/experiments.hpp"
#include "adiff/manifolds.hpp"
#include "adiff/melnikov.hpp"
#include "adiff/model.hpp"

namespace adiff {

using Json = nlohmann::ordered_json;

/// {"epsilon", "mu", "perturbation": [[k_t, k_theta, k_q, amplitude, phase], ...]}.
Json to_json(const ModelParams& params);
/// Missing keys keep the defaults (eps 0.25, mu 0, Arnold f). Throws DomainError on malformed input.
ModelParams params_from_json(const Json& j);

Json to_json(const ChainSchedule& schedule);
Json to_json(const CriticalPointReport& report);
/// {"I_min", "I_max", "T", "max_junction_defect"} plus drift diagnostics.
Json summary_json(const DiffusionOrbit& orbit);
Json to_json(const ScalingFit& fit);
Json to_json(const std::vector<GapRow>& rows);

/// 64-bit FNV-1a of the compact dump, as 16 hex digits.
std::string config_hash(const Json& config);

/// Creates root/<name>-<UTC timestamp>-<hash> and writes config.json there.
std::filesystem::path make_run_directory(const std::filesystem::path& root, const std::string& name,
                                         const Json& config);

/// manifest.json with the config hash, parameters and outcomes.
void write_manifest(const std::filesystem::path& dir, const Json& config, const Json& outcomes);

void write_json(const std::filesystem::path& file, const Json& j);
Json read_json(const std::filesystem::path& file);

}  // namespace adiff
