#include "entsim/reference.hpp"

#include <stdexcept>

#include "entsim/reference_data.hpp"

namespace entsim::reference {

namespace {

const nlohmann::json& entry(std::string_view id) {
  const auto& v = table().at("values");
  auto it = v.find(std::string(id));
  if (it == v.end()) throw std::out_of_range("unknown reference value '" + std::string(id) + "'");
  return *it;
}

}  // namespace

const nlohmann::json& table() {
  static const nlohmann::json parsed = nlohmann::json::parse(detail::kReferenceJson);
  return parsed;
}

int version() { return table().at("version").get<int>(); }

double value(std::string_view id) { return entry(id).at("value").get<double>(); }

double sigma(std::string_view id) {
  const auto& e = entry(id);
  return e.contains("sigma") ? e["sigma"].get<double>() : 0.0;
}

std::vector<double> values(std::string_view id) { return entry(id).at("values").get<std::vector<double>>(); }

std::string note(std::string_view id) { return entry(id).at("note").get<std::string>(); }

}  // namespace entsim::reference
