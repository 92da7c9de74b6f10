// SPDX-License-Identifier: Apache-2.0
#include "ata/schema.hpp"

namespace ata::schema {

using nlohmann::json;

namespace {

bool has_type(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  if (type == "number") return value.is_number();
  if (type == "integer") {
    if (value.is_number_integer()) return true;
    return value.is_number_float() && value.get<double>() == static_cast<double>(static_cast<long long>(value.get<double>()));
  }
  return false;
}

void check(const json& value, const json& schema, const std::string& path,
           std::vector<std::string>& errors) {
  if (!schema.is_object()) return;
  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = has_type(value, it->get<std::string>());
    } else if (it->is_array()) {
      for (const auto& t : *it) ok = ok || has_type(value, t.get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected type " + it->dump());
      return;
    }
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    bool found = false;
    for (const auto& candidate : *it) found = found || candidate == value;
    if (!found) errors.push_back(path + ": value not in " + it->dump());
  }
  if (value.is_number()) {
    const double x = value.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>()) {
      errors.push_back(path + ": below minimum " + it->dump());
    }
    if (auto it = schema.find("maximum"); it != schema.end() && x > it->get<double>()) {
      errors.push_back(path + ": above maximum " + it->dump());
    }
  }
  if (value.is_string()) {
    if (auto it = schema.find("minLength"); it != schema.end() &&
        value.get_ref<const std::string&>().size() < it->get<std::size_t>()) {
      errors.push_back(path + ": shorter than " + it->dump());
    }
  }
  if (value.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && value.size() < it->get<std::size_t>()) {
      errors.push_back(path + ": fewer than " + it->dump() + " items");
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && value.size() > it->get<std::size_t>()) {
      errors.push_back(path + ": more than " + it->dump() + " items");
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        check(value[i], *it, path + "/" + std::to_string(i), errors);
      }
    }
  }
  if (value.is_object()) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        if (!value.contains(key.get<std::string>())) {
          errors.push_back(path + ": missing required field " + key.dump());
        }
      }
    }
    const json* props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end()) props = &*it;
    for (const auto& [key, child] : value.items()) {
      if (props && props->contains(key)) {
        check(child, props->at(key), path + "/" + key, errors);
      } else if (auto ap = schema.find("additionalProperties"); ap != schema.end()) {
        if (ap->is_boolean() && !ap->get<bool>()) {
          errors.push_back(path + ": unexpected field \"" + key + "\"");
        } else if (ap->is_object()) {
          check(child, *ap, path + "/" + key, errors);
        }
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate(const json& instance, const json& schema) {
  std::vector<std::string> errors;
  check(instance, schema, "", errors);
  return errors;
}

json extract_json(const std::string& text) {
  json direct = json::parse(text, nullptr, false);
  if (!direct.is_discarded() && direct.is_object()) return direct;
  // Scan for balanced {...} candidates, honoring string literals.
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        json candidate = json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!candidate.is_discarded()) return candidate;
        break;
      }
    }
  }
  return json(json::value_t::discarded);
}

}  // namespace ata::schema
