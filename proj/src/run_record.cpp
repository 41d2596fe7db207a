#include "scw/run_record.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace scw::run {

nlohmann::json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config: " + path + ": not a JSON object");
    return j;
}

void require_keys(const nlohmann::json& cfg, const std::string& context,
                  const std::vector<std::string>& required,
                  const std::vector<std::string>& optional) {
    for (const std::string& k : required)
        if (!cfg.contains(k))
            throw std::runtime_error(context + ": missing required key \"" + k + "\"");
    for (const auto& [k, v] : cfg.items()) {
        if (std::find(required.begin(), required.end(), k) != required.end()) continue;
        if (std::find(optional.begin(), optional.end(), k) != optional.end()) continue;
        throw std::runtime_error(context + ": unknown key \"" + k + "\"");
    }
}

void write_run_record(const std::string& out_dir, const std::string& subcommand,
                      const nlohmann::json& config, uint64_t seed,
                      const nlohmann::json& metrics) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["config"] = config;
    j["metrics"] = metrics;
    const std::string path = out_dir + "/run_record.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace scw::run
