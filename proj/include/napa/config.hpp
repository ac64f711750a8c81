#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "napa/simulate.hpp"
#include "napa/testing.hpp"

namespace napa {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

[[noreturn]] inline void config_error(std::size_t line, const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& key) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        config_error(line, key + " expects a number, got '" + s + "'");
    return v;
}

inline long parse_integer(const std::string& s, std::size_t line, const std::string& key) {
    double v = parse_number(s, line, key);
    if (v != std::floor(v)) config_error(line, key + " expects an integer, got '" + s + "'");
    return static_cast<long>(v);
}

// box = dim1:lo..hi[,dim2:lo..hi[,dim3:lo..hi]] @ value
inline RegionBox parse_box(const std::string& value, std::size_t line) {
    std::size_t at = value.find('@');
    if (at == std::string::npos) config_error(line, "box expects 'dims @ value'");
    std::string dims = trim(value.substr(0, at));
    std::string val = trim(value.substr(at + 1));
    RegionBox box;
    box.value = parse_number(val, line, "box value");
    std::vector<std::string> parts = split(dims, ',');
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::string expect = "dim" + std::to_string(k + 1);
        std::size_t colon = parts[k].find(':');
        if (colon == std::string::npos || trim(parts[k].substr(0, colon)) != expect)
            config_error(line, "box dimension " + std::to_string(k + 1) + " must be '" + expect +
                                   ":lo..hi'");
        std::string range = trim(parts[k].substr(colon + 1));
        std::size_t dots = range.find("..");
        if (dots == std::string::npos) config_error(line, "box range must be 'lo..hi'");
        long lo = parse_integer(trim(range.substr(0, dots)), line, "box lo");
        long hi = parse_integer(trim(range.substr(dots + 2)), line, "box hi");
        box.ranges.push_back({static_cast<int>(lo), static_cast<int>(hi)});
    }
    return box;
}

}  // namespace detail

// Parses the flat `key = value` experiment config format. '#' starts a
// comment; `box =` may repeat, one signal box per line; `sweep = param: v,...`
// may repeat, each adding a list of sweep points. Errors carry line numbers;
// semantic validation happens afterwards in validate_experiment_config.
inline ExperimentConfig parse_experiment_config(std::istream& in) {
    ExperimentConfig cfg;
    cfg.methods = {Method::napa, Method::laws, Method::bh, Method::gap_lite,
                   Method::gap_then_laws};
    bool have_baseline = false;
    BandwidthMatrix bw;
    bool have_hs = false, have_hu = false, have_rho = false;

    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) detail::config_error(lineno, "expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (value.empty()) detail::config_error(lineno, key + " has no value");

        if (key == "extents") {
            cfg.extents.clear();
            for (const std::string& part : detail::split(value, ','))
                cfg.extents.push_back(static_cast<int>(detail::parse_integer(part, lineno, key)));
        } else if (key == "baseline_pi") {
            cfg.regions.baseline = detail::parse_number(value, lineno, key);
            have_baseline = true;
        } else if (key == "box") {
            cfg.regions.boxes.push_back(detail::parse_box(value, lineno));
        } else if (key == "mu") {
            cfg.mu = detail::parse_number(value, lineno, key);
        } else if (key == "beta1") {
            std::istringstream ss(value);
            std::string mode;
            ss >> mode;
            if (mode == "constant") {
                double v;
                if (!(ss >> v)) detail::config_error(lineno, "beta1 constant expects a value");
                cfg.beta1 = Beta1Spec{Beta1Spec::Mode::constant, v, 0.0, 0.0};
            } else if (mode == "uniform") {
                double lo, hi;
                if (!(ss >> lo >> hi))
                    detail::config_error(lineno, "beta1 uniform expects 'uniform lo hi'");
                cfg.beta1 = Beta1Spec{Beta1Spec::Mode::uniform, 0.0, lo, hi};
            } else {
                detail::config_error(lineno, "beta1 must be 'constant v' or 'uniform lo hi'");
            }
        } else if (key == "var1") {
            cfg.var1 = detail::parse_number(value, lineno, key);
        } else if (key == "var2") {
            cfg.var2 = detail::parse_number(value, lineno, key);
        } else if (key == "n1") {
            cfg.n1 = static_cast<int>(detail::parse_integer(value, lineno, key));
        } else if (key == "n2") {
            cfg.n2 = static_cast<int>(detail::parse_integer(value, lineno, key));
        } else if (key == "alpha") {
            cfg.alpha = detail::parse_number(value, lineno, key);
            if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
                detail::config_error(lineno, "alpha must lie in (0,1)");
        } else if (key == "replications") {
            cfg.replications = static_cast<int>(detail::parse_integer(value, lineno, key));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(detail::parse_integer(value, lineno, key));
        } else if (key == "methods") {
            cfg.methods.clear();
            for (const std::string& name : detail::split(value, ',')) {
                try {
                    cfg.methods.push_back(parse_method(name));
                } catch (const std::exception& e) {
                    detail::config_error(lineno, e.what());
                }
            }
        } else if (key == "sweep") {
            std::size_t colon = value.find(':');
            if (colon == std::string::npos)
                detail::config_error(lineno, "sweep expects 'param: v1,v2,...'");
            SweepSpec sweep;
            sweep.param = detail::trim(value.substr(0, colon));
            for (const std::string& part : detail::split(value.substr(colon + 1), ','))
                sweep.values.push_back(detail::parse_number(part, lineno, "sweep value"));
            cfg.sweeps.push_back(std::move(sweep));
        } else if (key == "screen_level") {
            cfg.screen_level = detail::parse_number(value, lineno, key);
        } else if (key == "xi") {
            cfg.xi = detail::parse_number(value, lineno, key);
        } else if (key == "tau") {
            cfg.tau_override = detail::parse_number(value, lineno, key);
        } else if (key == "hs") {
            bw.h_s = detail::parse_number(value, lineno, key);
            have_hs = true;
        } else if (key == "hu") {
            bw.h_u = detail::parse_number(value, lineno, key);
            have_hu = true;
        } else if (key == "rho") {
            bw.rho = detail::parse_number(value, lineno, key);
            have_rho = true;
        } else if (key == "n_groups") {
            cfg.n_groups = static_cast<int>(detail::parse_integer(value, lineno, key));
        } else if (key == "dump_decisions") {
            if (value == "true") cfg.dump_decisions = true;
            else if (value == "false") cfg.dump_decisions = false;
            else detail::config_error(lineno, "dump_decisions must be true or false");
        } else if (key == "threads") {
            cfg.threads = static_cast<int>(detail::parse_integer(value, lineno, key));
        } else {
            detail::config_error(lineno, "unknown key '" + key + "'");
        }
    }
    if (!have_baseline && cfg.regions.boxes.empty() && cfg.extents.empty())
        throw std::runtime_error("config is empty");
    if (have_hs || have_hu || have_rho) {
        if (!(have_hs && have_hu))
            throw std::runtime_error("config: hs and hu must be given together");
        if (!have_rho) bw.rho = 0.0;
        cfg.bw_override = bw;
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    ExperimentConfig cfg = parse_experiment_config(f);
    validate_experiment_config(cfg);
    return cfg;
}

}  // namespace napa
