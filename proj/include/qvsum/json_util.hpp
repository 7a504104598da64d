#pragma once

#include "qvsum/common.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

namespace qvsum {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Rejects keys outside `allowed`.
template <class J>
void require_known_keys(const J& obj, std::initializer_list<std::string_view> allowed, const std::string& context) {
  if (!obj.is_object()) throw InputError(context + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw InputError(context + ": unknown key '" + it.key() + "'");
  }
}

// Typed lookup with a readable error.
template <class T, class J>
T get_field(const J& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw InputError(context + ": missing field '" + key + "'");
  try {
    return obj.at(key).template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(context + ": field '" + key + "' has the wrong type");
  }
}

template <class T, class J>
T get_field_or(const J& obj, const std::string& key, T fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  return get_field<T>(obj, key, context);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace qvsum
