#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace scw::run {

inline constexpr const char* kVersion = "scw-0.1.0";

// parses the file, throwing with the path in the message
nlohmann::json load_config(const std::string& path);

// every key must be known and every required key present
void require_keys(const nlohmann::json& cfg, const std::string& context,
                  const std::vector<std::string>& required,
                  const std::vector<std::string>& optional);

// <out_dir>/run_record.json: {subcommand, version, seed, config, metrics};
// no wall-clock fields, records of identical runs are byte-identical
void write_run_record(const std::string& out_dir, const std::string& subcommand,
                      const nlohmann::json& config, uint64_t seed,
                      const nlohmann::json& metrics);

}  // namespace scw::run
