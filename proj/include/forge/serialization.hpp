#pragma once

#include <json.hpp>

#include "forge/blend.hpp"
#include "forge/compositor.hpp"
#include "forge/metrics.hpp"

namespace forge {

/// {"kind":"jpeg","quality":70} or {"kind":"scale","ratio":0.5}. Unknown keys
/// and out-of-range values throw std::invalid_argument.
AttackSpec attack_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttackSpec& spec);

nlohmann::json to_json(const LossBreakdown& losses);

/// Fixed field order; every real rounded to 6 decimals.
nlohmann::ordered_json to_json(const EvalReport& report);

double round6(double v);

}  // namespace forge
