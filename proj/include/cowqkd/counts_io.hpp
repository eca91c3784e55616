#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cowqkd/channel.hpp"

namespace cowqkd::channel {

// JSON schema for CountsRecord. Field names follow the record definition;
// the refined vacuum counts are optional.
inline nlohmann::ordered_json counts_to_json(const CountsRecord& r) {
    nlohmann::ordered_json j;
    j["N"] = r.N;
    j["mu"] = r.mu;
    j["n_z"] = r.n_z;
    j["E_z"] = r.E_z;
    j["n_00_D0"] = r.n_00_d0;
    j["n_00_D1"] = r.n_00_d1;
    j["n_00_D2"] = r.n_00_d2;
    if (r.n_00_d1_refined) j["n_00_D1p"] = *r.n_00_d1_refined;
    if (r.n_00_d2_refined) j["n_00_D2p"] = *r.n_00_d2_refined;
    if (r.n_00_d1_raw) j["n_00_D1_raw"] = *r.n_00_d1_raw;
    if (r.n_00_d2_raw) j["n_00_D2_raw"] = *r.n_00_d2_raw;
    j["n_0a_D1"] = r.n_0a_d1;
    j["n_0a_D2"] = r.n_0a_d2;
    j["n_a0_D1"] = r.n_a0_d1;
    j["n_a0_D2"] = r.n_a0_d2;
    j["n_aa_D1"] = r.n_aa_d1;
    j["n_aa_D2"] = r.n_aa_d2;
    j["P_00"] = r.P_00;
    j["P_aa"] = r.P_aa;
    return j;
}

inline CountsRecord counts_from_json(const nlohmann::json& j) {
    static const char* required[] = {"N",       "mu",      "n_z",     "E_z",
                                     "n_00_D0", "n_00_D1", "n_00_D2", "n_0a_D1",
                                     "n_0a_D2", "n_a0_D1", "n_a0_D2", "n_aa_D1",
                                     "n_aa_D2", "P_00",    "P_aa"};
    static const char* optional[] = {"n_00_D1p", "n_00_D2p", "n_00_D1_raw", "n_00_D2_raw"};
    for (const char* f : required)
        if (!j.contains(f))
            throw std::invalid_argument(std::string("counts: missing field '") + f + "'");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* f : required) known |= it.key() == f;
        for (const char* f : optional) known |= it.key() == f;
        if (!known)
            throw std::invalid_argument("counts: unknown field '" + it.key() + "'");
    }
    auto u64 = [&](const char* f) -> std::uint64_t {
        const auto& v = j.at(f);
        if (!v.is_number_unsigned() && !v.is_number_integer())
            throw std::invalid_argument(std::string("counts: field '") + f +
                                        "' must be a non-negative integer");
        if (v.is_number_integer() && v.get<std::int64_t>() < 0)
            throw std::invalid_argument(std::string("counts: field '") + f +
                                        "' must be non-negative");
        return v.get<std::uint64_t>();
    };
    auto dbl = [&](const char* f) -> double {
        const auto& v = j.at(f);
        if (!v.is_number())
            throw std::invalid_argument(std::string("counts: field '") + f +
                                        "' must be a number");
        return v.get<double>();
    };
    CountsRecord r;
    r.N = u64("N");
    r.mu = dbl("mu");
    r.n_z = u64("n_z");
    r.E_z = dbl("E_z");
    r.n_00_d0 = u64("n_00_D0");
    r.n_00_d1 = u64("n_00_D1");
    r.n_00_d2 = u64("n_00_D2");
    if (j.contains("n_00_D1p")) r.n_00_d1_refined = u64("n_00_D1p");
    if (j.contains("n_00_D2p")) r.n_00_d2_refined = u64("n_00_D2p");
    if (j.contains("n_00_D1_raw")) r.n_00_d1_raw = u64("n_00_D1_raw");
    if (j.contains("n_00_D2_raw")) r.n_00_d2_raw = u64("n_00_D2_raw");
    r.n_0a_d1 = u64("n_0a_D1");
    r.n_0a_d2 = u64("n_0a_D2");
    r.n_a0_d1 = u64("n_a0_D1");
    r.n_a0_d2 = u64("n_a0_D2");
    r.n_aa_d1 = u64("n_aa_D1");
    r.n_aa_d2 = u64("n_aa_D2");
    r.P_00 = dbl("P_00");
    r.P_aa = dbl("P_aa");
    r.validate();
    return r;
}

inline void store_counts(const CountsRecord& r, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("store_counts: cannot open " + path);
    f << counts_to_json(r).dump(2) << '\n';
}

inline CountsRecord load_counts(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_counts: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_counts: malformed JSON in " + path + ": " +
                                    e.what());
    }
    return counts_from_json(j);
}

} // namespace cowqkd::channel
