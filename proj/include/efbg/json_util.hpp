#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

#include "efbg/error.hpp"

namespace efbg {

/// Throws SchemaError naming the first key of `j` not in `allowed`.
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view context) {
  if (!j.is_object()) throw SchemaError(std::string(context) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw SchemaError(std::string(context) + ": unknown key '" + key + "'");
  }
}

/// Reads j[key] into out when present, wrapping type errors as SchemaError.
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string(context) + "." + key + ": " + e.what());
  }
}

}  // namespace efbg
