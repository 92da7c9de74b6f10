// SPDX-License-Identifier: Apache-2.0
//
// Validator for the JSON-Schema subset used by structured model outputs and
// the report schema: type, required, properties, additionalProperties (bool),
// items, enum, minimum, maximum, minItems, maxItems, minLength.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ata::schema {

/// Empty when `instance` conforms; otherwise one message per violation,
/// each prefixed with a JSON pointer to the offending value.
std::vector<std::string> validate(const nlohmann::json& instance, const nlohmann::json& schema);

/// Pulls the first JSON object out of a model reply, tolerating code fences
/// and surrounding prose. Returns a discarded value when none parses.
nlohmann::json extract_json(const std::string& text);

}  // namespace ata::schema
