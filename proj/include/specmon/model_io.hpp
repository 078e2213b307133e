#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "specmon/io_util.hpp"
#include "specmon/lstm.hpp"
#include "specmon/spectrum.hpp"

namespace specmon {

inline constexpr int kModelFormatVersion = 1;

/// A trained model plus the normalization it was trained under.
struct ModelFile {
  LstmParams params;
  NormalizationParams norm;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int rows,
                                        int cols, const std::string& name) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw IoError("model field " + name + ": expected " +
                  std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw IoError("model field " + name + ": expected " +
                    std::to_string(cols) + " columns");
    for (int c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, int size,
                                        const std::string& name) {
  if (!j.is_array() || static_cast<int>(j.size()) != size)
    throw IoError("model field " + name + ": expected length " +
                  std::to_string(size));
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelFile& model) {
  const LstmParams& p = model.params;
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["h"] = p.h;
  j["d"] = p.d;
  j["R"] = p.R;
  j["squash"] = to_string(p.squash);
  j["norm"] = {{"a", model.norm.a}, {"b", model.norm.b}};
  j["W_c"] = detail::matrix_to_json(p.W_c);
  j["W_f"] = detail::matrix_to_json(p.W_f);
  j["W_i"] = detail::matrix_to_json(p.W_i);
  j["W_o"] = detail::matrix_to_json(p.W_o);
  j["U_c"] = detail::matrix_to_json(p.U_c);
  j["U_f"] = detail::matrix_to_json(p.U_f);
  j["U_i"] = detail::matrix_to_json(p.U_i);
  j["U_o"] = detail::matrix_to_json(p.U_o);
  j["b_c"] = detail::vector_to_json(p.b_c);
  j["b_f"] = detail::vector_to_json(p.b_f);
  j["b_i"] = detail::vector_to_json(p.b_i);
  j["b_o"] = detail::vector_to_json(p.b_o);
  j["primary_W"] = detail::matrix_to_json(p.primary_W);
  j["primary_b"] = detail::vector_to_json(p.primary_b);
  j["secondary_W"] = detail::matrix_to_json(p.secondary_W);
  j["secondary_b"] = detail::vector_to_json(p.secondary_b);
  return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
  if (j.value("format_version", -1) != kModelFormatVersion)
    throw IoError("unsupported model format_version");
  ModelFile model;
  LstmParams& p = model.params;
  p.h = j.at("h").get<int>();
  p.d = j.at("d").get<int>();
  p.R = j.at("R").get<int>();
  const std::string squash = j.at("squash").get<std::string>();
  if (squash == "sigmoid") p.squash = Squash::Sigmoid;
  else if (squash == "tanh") p.squash = Squash::Tanh;
  else throw IoError("unknown squash '" + squash + "'");
  model.norm.a = j.at("norm").at("a").get<double>();
  model.norm.b = j.at("norm").at("b").get<double>();
  p.W_c = detail::matrix_from_json(j.at("W_c"), p.h, p.d, "W_c");
  p.W_f = detail::matrix_from_json(j.at("W_f"), p.h, p.d, "W_f");
  p.W_i = detail::matrix_from_json(j.at("W_i"), p.h, p.d, "W_i");
  p.W_o = detail::matrix_from_json(j.at("W_o"), p.h, p.d, "W_o");
  p.U_c = detail::matrix_from_json(j.at("U_c"), p.h, p.h, "U_c");
  p.U_f = detail::matrix_from_json(j.at("U_f"), p.h, p.h, "U_f");
  p.U_i = detail::matrix_from_json(j.at("U_i"), p.h, p.h, "U_i");
  p.U_o = detail::matrix_from_json(j.at("U_o"), p.h, p.h, "U_o");
  p.b_c = detail::vector_from_json(j.at("b_c"), p.h, "b_c");
  p.b_f = detail::vector_from_json(j.at("b_f"), p.h, "b_f");
  p.b_i = detail::vector_from_json(j.at("b_i"), p.h, "b_i");
  p.b_o = detail::vector_from_json(j.at("b_o"), p.h, "b_o");
  p.primary_W = detail::matrix_from_json(j.at("primary_W"), p.d, p.h, "primary_W");
  p.primary_b = detail::vector_from_json(j.at("primary_b"), p.d, "primary_b");
  p.secondary_W =
      detail::matrix_from_json(j.at("secondary_W"), p.R, p.h, "secondary_W");
  p.secondary_b = detail::vector_from_json(j.at("secondary_b"), p.R, "secondary_b");
  p.validate();
  model.norm.validate();
  return model;
}

inline void save_model(const std::filesystem::path& path, const ModelFile& model) {
  write_text_file(path, model_to_json(model).dump(1) + "\n");
}

inline ModelFile load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse model " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace specmon
