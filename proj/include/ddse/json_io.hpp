#pragma once

#include <complex>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

namespace ddse {

// Complex numbers are serialized as {"re": float, "im": float} everywhere.
inline nlohmann::json to_json(const std::complex<double>& c) {
  return nlohmann::json{{"re", c.real()}, {"im", c.imag()}};
}

inline std::complex<double> complex_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("re") || !j.contains("im")) {
    throw std::invalid_argument("complex value must be an object {\"re\", \"im\"}");
  }
  return {j.at("re").get<double>(), j.at("im").get<double>()};
}

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& x : j) v[i++] = x.get<double>();
  return v;
}

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace ddse
