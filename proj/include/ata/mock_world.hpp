// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-in for every model role. It reads the task tag and the
// <context> block of a request and synthesizes a schema-valid reply, so a
// whole run works offline. Paired with the scripted agents it forms a closed
// world: personas state their difficulty, boundary agents answer with a
// quality marker, and the judge turns that marker back into scores.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "ata/llm_gateway.hpp"

namespace ata {

MockBackend::Responder make_reference_responder(std::uint64_t seed = 0);

/// Mock backend preloaded with `<dir>/script.json` (if present) in front of
/// the reference responder.
std::shared_ptr<MockBackend> make_mock_backend(const std::filesystem::path& dir, std::uint64_t seed);

/// Criterion score the mock judge gives a reply of quality `q` in [1, 10];
/// aggregating equal criterion scores returns `q`.
double criterion_score_for_quality(double quality);

}  // namespace ata
