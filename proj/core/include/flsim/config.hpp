#pragma once

#include <string>
#include <vector>

#include "flsim/federation.hpp"

namespace flsim {

// Parses a JSON experiment config into a fully-resolved SimConfig: defaults
// filled (including the stock CNN when no model is given for a blobs
// dataset), unknown keys rejected with a JSON pointer to the offending field,
// and dot-path overrides like "attack.alpha=0.7" applied before validation.
// Override values are parsed as JSON when possible, else taken as strings.
SimConfig parse_config_text(const std::string& json_text,
                            const std::vector<std::string>& overrides = {});
SimConfig parse_config_file(const std::string& path,
                            const std::vector<std::string>& overrides = {});

// Emits every resolved field; feeding the result back through
// parse_config_text reproduces the same configuration.
std::string serialize_config(const SimConfig& config);

}  // namespace flsim
