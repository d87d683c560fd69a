#pragma once

// JSON (de)serialization of MarketSpec. Unknown keys are rejected and every
// problem is reported with its field path.

#include "rsmerton/core_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rsmerton {

namespace detail {

class JsonReader {
public:
    explicit JsonReader(std::vector<std::string>& errors) : errors_(errors) {}

    void reject_unknown(const nlohmann::json& obj, const std::string& path,
                        const std::set<std::string>& allowed) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (!allowed.count(it.key())) errors_.push_back(join(path, it.key()) + ": unknown key");
        }
    }

    bool number(const nlohmann::json& obj, const std::string& path, const std::string& key,
                double& out, bool required = true) {
        if (!obj.contains(key)) {
            if (required) errors_.push_back(join(path, key) + ": missing");
            return false;
        }
        const auto& v = obj.at(key);
        if (!v.is_number()) {
            errors_.push_back(join(path, key) + ": expected a number");
            return false;
        }
        out = v.get<double>();
        return true;
    }

    bool count(const nlohmann::json& obj, const std::string& path, const std::string& key,
               std::uint64_t& out, bool required = true) {
        if (!obj.contains(key)) {
            if (required) errors_.push_back(join(path, key) + ": missing");
            return false;
        }
        const auto& v = obj.at(key);
        if (!v.is_number_unsigned()) {
            errors_.push_back(join(path, key) + ": expected a non-negative integer");
            return false;
        }
        out = v.get<std::uint64_t>();
        return true;
    }

    bool vector(const nlohmann::json& obj, const std::string& path, const std::string& key,
                std::vector<double>& out, bool required = true) {
        if (!obj.contains(key)) {
            if (required) errors_.push_back(join(path, key) + ": missing");
            return false;
        }
        return vector_value(obj.at(key), join(path, key), out);
    }

    bool vector_value(const nlohmann::json& v, const std::string& where, std::vector<double>& out) {
        if (!v.is_array()) {
            errors_.push_back(where + ": expected an array of numbers");
            return false;
        }
        out.clear();
        bool ok = true;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                errors_.push_back(where + "[" + std::to_string(i) + "]: expected a number");
                ok = false;
            } else {
                out.push_back(v[i].get<double>());
            }
        }
        return ok;
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

private:
    std::vector<std::string>& errors_;
};

} // namespace detail

/// Parses a MarketSpec object located at `path` (used as an error prefix).
/// Throws SpecError with every parse and validation problem.
inline MarketSpec market_spec_from_json(const nlohmann::json& j, const std::string& path = "") {
    std::vector<std::string> errors;
    detail::JsonReader rd(errors);
    MarketSpec s;
    if (!j.is_object()) throw SpecError({(path.empty() ? std::string("spec") : path) + ": expected an object"});

    rd.reject_unknown(j, path, {"states", "r", "alpha", "sigma", "generator", "rho", "gamma",
                                "horizon", "schedule"});
    std::uint64_t states = 0;
    rd.count(j, path, "states", states);
    s.states = static_cast<std::size_t>(states);
    rd.vector(j, path, "r", s.r);
    rd.vector(j, path, "alpha", s.alpha);
    rd.vector(j, path, "sigma", s.sigma);
    rd.vector(j, path, "rho", s.rho);
    rd.number(j, path, "gamma", s.gamma);
    rd.number(j, path, "horizon", s.horizon);

    const std::string gpath = detail::JsonReader::join(path, "generator");
    if (!j.contains("generator")) {
        errors.push_back(gpath + ": missing");
    } else if (!j.at("generator").is_array()) {
        errors.push_back(gpath + ": expected an array of rows");
    } else {
        const auto& rows = j.at("generator");
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<double> row;
            rd.vector_value(rows[i], gpath + "[" + std::to_string(i) + "]", row);
            s.generator.rates.push_back(std::move(row));
        }
    }

    if (j.contains("schedule")) {
        const std::string spath = detail::JsonReader::join(path, "schedule");
        const auto& sched = j.at("schedule");
        if (!sched.is_array()) {
            errors.push_back(spath + ": expected an array");
        } else {
            for (std::size_t k = 0; k < sched.size(); ++k) {
                const std::string ppath = spath + "[" + std::to_string(k) + "]";
                if (!sched[k].is_object()) {
                    errors.push_back(ppath + ": expected an object");
                    continue;
                }
                CoefficientPiece p;
                rd.reject_unknown(sched[k], ppath, {"t_start", "r", "alpha", "sigma"});
                rd.number(sched[k], ppath, "t_start", p.t_start);
                rd.vector(sched[k], ppath, "r", p.r);
                rd.vector(sched[k], ppath, "alpha", p.alpha);
                rd.vector(sched[k], ppath, "sigma", p.sigma);
                s.schedule.push_back(std::move(p));
            }
        }
    }

    if (errors.empty()) {
        for (auto& v : spec_violations(s)) errors.push_back(path.empty() ? v : path + ": " + v);
    }
    if (!errors.empty()) throw SpecError(std::move(errors));
    return s;
}

inline nlohmann::json to_json(const MarketSpec& s) {
    nlohmann::json j;
    j["states"] = s.states;
    j["r"] = s.r;
    j["alpha"] = s.alpha;
    j["sigma"] = s.sigma;
    j["generator"] = s.generator.rates;
    j["rho"] = s.rho;
    j["gamma"] = s.gamma;
    j["horizon"] = s.horizon;
    if (!s.schedule.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& p : s.schedule) {
            arr.push_back({{"t_start", p.t_start}, {"r", p.r}, {"alpha", p.alpha}, {"sigma", p.sigma}});
        }
        j["schedule"] = std::move(arr);
    }
    return j;
}

inline MarketSpec load_market_spec(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw SpecError({file + ": cannot open"});
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw SpecError({file + ": " + e.what()});
    }
    return market_spec_from_json(j);
}

/// 64-bit FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string spec_hash(const MarketSpec& s) {
    const std::string text = to_json(s).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace rsmerton
