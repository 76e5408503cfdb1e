#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "mcm/tensor.hpp"

namespace mcm {

// Flat key=value run configuration. Precedence: command-line flag > config
// file > default. Unknown keys are rejected so typos fail loudly.
class RunConfig {
public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "data",          "train_data",    "test_data",     "embedding_file",
            "model",         "embedding",     "finetune",      "dim",
            "epochs",        "lr",            "batch_size",    "patience",
            "seed",          "lambda",        "min_freq",      "l_max",
            "out",           "jobs",          "honest_validation",
            "filters",       "kernel1",       "kernel2",       "lstm_units",
            "dense1",        "dense2",        "disc_dense1",   "disc_dense2",
            "dropout",       "checkpoint",    "iterations",    "window",
            "negatives",     "resume",        "test_fraction",
        };
        return keys;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key))
            throw error("config: unknown key \"" + key + "\"");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    long get_long(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stol(it->second);
        } catch (const std::exception&) {
            throw error("config: key \"" + key + "\" is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw error("config: key \"" + key + "\" is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "on") return true;
        if (it->second == "false" || it->second == "0" || it->second == "off") return false;
        throw error("config: key \"" + key + "\" is not a boolean: " + it->second);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    // "key = value" lines, '#' comments
    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw error("config: cannot open " + path);
        RunConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw error("config: " + path + ":" + std::to_string(line_no) +
                                ": expected key = value");
                continue;
            }
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                const auto b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw error("config: cannot open " + path + " for writing");
        for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    }

    // file values fill gaps; existing (flag-set) values win
    void merge_defaults_from(const RunConfig& file_cfg) {
        for (const auto& [k, v] : file_cfg.values())
            if (!values_.count(k)) values_[k] = v;
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace mcm
