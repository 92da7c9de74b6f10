// SPDX-License-Identifier: Apache-2.0
//
// Model-as-judge scoring of one finished dialogue.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "ata/llm_gateway.hpp"
#include "ata/types.hpp"

namespace ata {

inline constexpr double kCriterionMin = 1.0;
inline constexpr double kCriterionMax = 5.0;

/// Weighted mean of 1-5 criterion scores mapped affinely onto 1-10:
/// s = (mean - 1) * 9/4 + 1. A criterion score of 3 lands on 5.5.
/// Empty input, a score outside [1, 5] or a non-positive weight throw
/// domain_error. `weights` may be empty (uniform).
double aggregate(const std::vector<double>& scores, const std::vector<double>& weights = {});

/// Aggregates by criterion name using the rubric's weights. Every rubric
/// criterion must be present exactly once.
double aggregate(const std::map<std::string, CriterionScore>& scores, const Rubric& rubric);

/// One line naming the first failed agent turn, empty when none failed.
std::string failure_status_line(const TestScenario& scenario);

/// JSON schema the judge reply must satisfy for this rubric.
json judge_schema(const Rubric& rubric);

/// Scores `scenario` against `rubric`. `thread_context` is the persona
/// generator's conversation for this weakness; the judge continues it so it
/// knows what the test was built to probe. The overall score is computed
/// here, never taken from the model.
JudgeResult evaluate(const TestScenario& scenario, const Rubric& rubric,
                     const std::vector<ChatMessage>& thread_context, const ModelClient& model);

}  // namespace ata
