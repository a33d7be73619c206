#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace entsim::reference {

/// The embedded reference table (data/reference_values.json).
const nlohmann::json& table();
int version();

/// Throws std::out_of_range for an unknown id.
double value(std::string_view id);
/// 0 when the entry states no uncertainty.
double sigma(std::string_view id);
std::vector<double> values(std::string_view id);
std::string note(std::string_view id);

}  // namespace entsim::reference
