#pragma once

// Eigen <-> JSON helpers shared by the model persistence code. Matrices are
// stored row-major as {"rows", "cols", "data"}.

#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectorplus/errors.hpp"

namespace vectorplus::json_io {

inline nlohmann::json from_matrix(const Eigen::MatrixXd& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline nlohmann::json from_vector(const Eigen::VectorXd& v) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v(i));
  return data;
}

inline Eigen::MatrixXd to_matrix(const nlohmann::json& j) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
      throw SchemaError("matrix data does not match its shape");
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad matrix: ") + e.what());
  }
}

inline Eigen::VectorXd to_vector(const nlohmann::json& j) {
  try {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad vector: ") + e.what());
  }
}

}  // namespace vectorplus::json_io
