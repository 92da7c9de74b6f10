// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

#include "ata/llm_gateway.hpp"
#include "ata/mock_world.hpp"
#include "ata/types.hpp"

#ifndef ATA_SOURCE_DIR
#error "ATA_SOURCE_DIR must be defined"
#endif

namespace testing_support {

inline std::filesystem::path source_dir() { return ATA_SOURCE_DIR; }
inline std::filesystem::path fixtures() { return source_dir() / "fixtures"; }

/// Gateway with every role on the reference mock.
inline std::unique_ptr<ata::LlmGateway> mock_gateway(std::uint64_t seed = 0, ata::json script = ata::json::object()) {
  auto gateway = std::make_unique<ata::LlmGateway>();
  gateway->register_backend("mock", std::make_shared<ata::MockBackend>(std::move(script),
                                                                       ata::make_reference_responder(seed)));
  gateway->route_all("mock");
  return gateway;
}

inline ata::Weakness sample_weakness(const std::string& id = "W1") {
  ata::Weakness w;
  w.weakness_id = id;
  w.name = "Constraint drift";
  w.trigger_conditions = "User adds a constraint late.";
  w.expected_failure = "Earlier constraints are dropped.";
  w.manifestation = "Contradicting an early requirement.";
  w.example_tests = {{"easy", "Two constraints, restated."},
                     {"medium", "Four constraints over several turns."},
                     {"hard", "Six interlocking constraints, two revised."}};
  w.status = ata::WeaknessStatus::approved;
  return w;
}

inline ata::Rubric sample_rubric(int criteria = 3) {
  ata::Rubric r;
  r.rubric_id = "sample";
  for (int i = 0; i < criteria; ++i) {
    ata::RubricCriterion c;
    c.name = "criterion " + std::to_string(i + 1);
    for (int s = 1; s <= 5; ++s) c.levels.push_back({"level " + std::to_string(s), double(s), "", double(s)});
    r.criteria.push_back(c);
  }
  return r;
}

/// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ata-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
