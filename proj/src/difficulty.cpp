// SPDX-License-Identifier: Apache-2.0
#include "ata/difficulty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ata/error.hpp"

namespace ata {
namespace {

void require_in_scale(double value, std::string_view what,
                      const DifficultyParams& params) {
  if (!std::isfinite(value) || value < params.clip_lo || value > params.clip_hi) {
    throw Error(ErrorCode::domain_error,
                std::string(what) + " " + std::to_string(value) +
                    " outside [" + std::to_string(params.clip_lo) + ", " +
                    std::to_string(params.clip_hi) + "]");
  }
}

}  // namespace

DifficultyHistory::DifficultyHistory(DifficultyParams params) : params_(params) {
  if (!(params_.eta > 0.0)) {
    throw Error(ErrorCode::domain_error, "eta must be positive");
  }
  if (!(params_.weight_scale > 0.0) || !(params_.clip_lo < params_.clip_hi)) {
    throw Error(ErrorCode::domain_error, "invalid difficulty parameters");
  }
}

void DifficultyHistory::append(double difficulty, double score) {
  require_in_scale(difficulty, "difficulty", params_);
  require_in_scale(score, "score", params_);
  entries_.push_back({difficulty, score});
}

DifficultyHistory DifficultyHistory::without_last() const {
  DifficultyHistory copy = *this;
  if (!copy.entries_.empty()) copy.entries_.pop_back();
  return copy;
}

double step(double difficulty, double score, const DifficultyParams& params) {
  require_in_scale(difficulty, "difficulty", params);
  require_in_scale(score, "score", params);
  // 2 * logistic(x) - 1 == tanh(x / 2); tanh keeps full precision near zero.
  const double x = (score - params.anchor) / 2.0;
  const double moved = difficulty + params.eta * std::tanh(x / 2.0);
  return std::clamp(moved, params.clip_lo, params.clip_hi);
}

double weight(double score, const DifficultyParams& params) {
  require_in_scale(score, "score", params);
  return std::exp(-std::abs(score - params.anchor) / params.weight_scale);
}

double posterior(const DifficultyHistory& history) {
  if (history.empty()) {
    throw Error(ErrorCode::empty_history, "posterior needs at least one entry");
  }
  const auto& params = history.params();
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& entry : history.entries()) {
    const double w = weight(entry.score, params);
    weighted += w * step(entry.difficulty, entry.score, params);
    total += w;
  }
  // Rounding can push a weighted mean of identical values one ulp outside
  // the range of its terms.
  double lo = params.clip_hi;
  double hi = params.clip_lo;
  for (const auto& entry : history.entries()) {
    const double q = step(entry.difficulty, entry.score, params);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  return std::clamp(weighted / total, lo, hi);
}

bool converged(const DifficultyHistory& history, double epsilon) {
  if (history.size() < 2) {
    throw Error(ErrorCode::insufficient_history,
                "convergence needs at least two entries");
  }
  return std::abs(posterior(history) - posterior(history.without_last())) < epsilon;
}

std::string_view to_string(Band band) {
  switch (band) {
    case Band::easy: return "easy";
    case Band::medium: return "medium";
    case Band::hard: return "hard";
  }
  return "medium";
}

Band band_from_string(std::string_view name) {
  if (name == "easy") return Band::easy;
  if (name == "medium") return Band::medium;
  if (name == "hard") return Band::hard;
  throw Error(ErrorCode::domain_error, "unknown band '" + std::string(name) + "'");
}

DifficultyBand band_of(double difficulty) {
  require_in_scale(difficulty, "difficulty", DifficultyParams{});
  if (difficulty < 4.0) return {Band::easy, 1.0, 4.0};
  if (difficulty < 7.0) return {Band::medium, 4.0, 7.0};
  return {Band::hard, 7.0, 10.0};
}

int turn_limit_for(double difficulty) {
  const auto band = band_of(difficulty);
  const double t = (difficulty - band.lo) / (band.hi - band.lo);
  switch (band.name) {
    case Band::easy: return static_cast<int>(std::lround(6.0 + t * 1.0));
    case Band::medium: return static_cast<int>(std::lround(8.0 + t * 2.0));
    case Band::hard: return static_cast<int>(std::lround(11.0 + t * 1.0));
  }
  return 9;
}

}  // namespace ata
