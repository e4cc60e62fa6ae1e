#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "flq/core/errors.hpp"

namespace flq::pipeline {

// Run manifest: resolved config, per-stage wall clock and artifact paths,
// stages listed in execution order. Stored as JSON next to the artifacts.
class RunManifest {
public:
    explicit RunManifest(std::string path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            std::ifstream in(path_);
            try {
                in >> doc_;
            } catch (const std::exception&) {
                doc_ = nlohmann::json::object(); // corrupt manifest: start over
            }
        }
        if (!doc_.contains("stages")) doc_["stages"] = nlohmann::json::array();
    }

    void set_config(std::uint64_t hash, const std::map<std::string, std::string>& resolved) {
        doc_["config_hash"] = hash;
        doc_["config"] = resolved;
    }

    void record_stage(const std::string& name, double wall_ms,
                      const std::vector<std::string>& artifacts) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["wall_ms"] = wall_ms;
        entry["artifacts"] = artifacts;
        auto& stages = doc_["stages"];
        for (auto& s : stages) {
            if (s.contains("name") && s["name"] == name) {
                s = entry;
                save();
                return;
            }
        }
        stages.push_back(entry);
        save();
    }

    const nlohmann::json& doc() const { return doc_; }

private:
    void save() const {
        std::ofstream out(path_);
        if (!out) throw IoError("manifest: cannot write " + path_);
        out << doc_.dump(2) << "\n";
    }

    std::string path_;
    nlohmann::json doc_;
};

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace flq::pipeline
