#pragma once

#include <string>

#include "ddpm/targets.hpp"

namespace ddpm {

/// Parse a target from a JSON document:
///   {"kind":"gaussian_mixture","dim":d,
///    "components":[{"weight":w,"mean":[...],"cov":[[...]]}]}
///   {"kind":"atom_cloud","dim":d,"atoms":[{"weight":w,"x":[...]}]}
/// Throws ContractError with a descriptive message on any violation.
Target parse_target_json(const std::string& text);

/// Load and parse a target from a file path.
Target load_target_file(const std::string& path);

/// Serialize a target back to a JSON string (round-trips through
/// parse_target_json).
std::string target_to_json(const Target& target);

}  // namespace ddpm
