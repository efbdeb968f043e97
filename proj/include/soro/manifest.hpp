#pragma once

// Run manifests and optimizer resume files (JSON). Needs nlohmann/json,
// which the build provides as the single header "json.hpp".

#include "soro/error.hpp"
#include "soro/io.hpp"
#include "soro/optimizer.hpp"
#include "soro/scenario.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace soro {

inline constexpr const char* kVersion = "0.1.0";

struct Manifest {
    std::string version = kVersion;
    std::string command;           // optimize | simulate | ...
    std::string scenario_text;     // full scenario echo, defaults included
    int max_iterations = -1;
    bool deterministic = true;
    std::map<std::string, std::string> outputs;  // role -> file name in the output directory
};

inline std::string manifest_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["version"] = m.version;
    j["command"] = m.command;
    j["max_iterations"] = m.max_iterations;
    j["deterministic"] = m.deterministic;
    j["scenario"] = m.scenario_text;
    j["outputs"] = m.outputs;
    return j.dump(2) + "\n";
}

inline Manifest parse_manifest(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Manifest m;
        m.version = j.at("version").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.max_iterations = j.at("max_iterations").get<int>();
        m.deterministic = j.at("deterministic").get<bool>();
        m.scenario_text = j.at("scenario").get<std::string>();
        if (j.contains("outputs")) m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

inline std::string optimizer_state_json(const OptimizerState& s) {
    nlohmann::ordered_json j;
    j["iteration"] = s.iteration;
    j["phi"] = s.phi;
    j["adam"] = {{"m", s.adam.m}, {"v", s.adam.v}, {"step", s.adam.step}, {"alpha", s.adam.alpha},
                 {"beta1", s.adam.beta1}, {"beta2", s.adam.beta2}, {"epsilon", s.adam.epsilon}};
    j["auglag"] = {{"lambda", s.auglag.lambda}, {"rho", s.auglag.rho}, {"growth", s.auglag.growth},
                   {"start_iteration", s.auglag.start_iteration}, {"interval", s.auglag.interval}};
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : s.history.rows)
        rows.push_back({r.iter, r.objective, r.constraint, r.xg, r.mass, r.gravity, r.lambda, r.rho, r.seconds,
                        r.augmented});
    j["history"] = rows;
    j["best_phi"] = s.best_phi;
    j["best_objective"] = s.best_objective;
    j["best_iteration"] = s.best_iteration;
    return j.dump() + "\n";
}

inline OptimizerState parse_optimizer_state(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        OptimizerState s;
        s.iteration = j.at("iteration").get<int>();
        s.phi = j.at("phi").get<std::vector<double>>();
        const auto& a = j.at("adam");
        s.adam.m = a.at("m").get<std::vector<double>>();
        s.adam.v = a.at("v").get<std::vector<double>>();
        s.adam.step = a.at("step").get<long>();
        s.adam.alpha = a.at("alpha").get<double>();
        s.adam.beta1 = a.at("beta1").get<double>();
        s.adam.beta2 = a.at("beta2").get<double>();
        s.adam.epsilon = a.at("epsilon").get<double>();
        const auto& l = j.at("auglag");
        s.auglag.lambda = l.at("lambda").get<double>();
        s.auglag.rho = l.at("rho").get<double>();
        s.auglag.growth = l.at("growth").get<double>();
        s.auglag.start_iteration = l.at("start_iteration").get<int>();
        s.auglag.interval = l.at("interval").get<int>();
        for (const auto& r : j.at("history")) {
            HistoryRow row;
            row.iter = r.at(0).get<int>();
            row.objective = r.at(1).get<double>();
            row.constraint = r.at(2).get<double>();
            row.xg = r.at(3).get<std::array<double, 3>>();
            row.mass = r.at(4).get<double>();
            row.gravity = r.at(5).get<double>();
            row.lambda = r.at(6).get<double>();
            row.rho = r.at(7).get<double>();
            row.seconds = r.at(8).get<double>();
            row.augmented = r.at(9).get<double>();
            s.history.append(row);
        }
        s.best_phi = j.at("best_phi").get<std::vector<double>>();
        s.best_objective = j.at("best_objective").get<double>();
        s.best_iteration = j.at("best_iteration").get<int>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("resume file: ") + e.what());
    }
}

}  // namespace soro
