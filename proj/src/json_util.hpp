#pragma once
// Strict JSON reading shared by the config mappings: unknown keys are
// errors, absent keys keep the default already in the target.
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "snerf/errors.hpp"

namespace snerf::json_util {

inline void require_object(const nlohmann::json& j, const char* what, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError(std::string(what) + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace snerf::json_util
