// SPDX-License-Identifier: Apache-2.0
//
// Adaptive difficulty posterior. A test at difficulty d that earns judge
// score s proposes the next difficulty
//
//   step(d, s)  = clip(d + eta * (2 * logistic((s - anchor) / 2) - 1), lo, hi)
//   weight(s)   = exp(-|s - anchor| / weight_scale)
//   posterior   = sum_i weight(s_i) * step(d_i, s_i) / sum_j weight(s_j)
//
// Scores far from the anchor are treated as less reliable and get less weight.
#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace ata {

struct DifficultyParams {
  double eta = 3.0;
  double anchor = 5.5;
  double weight_scale = 3.0;
  double clip_lo = 1.0;
  double clip_hi = 10.0;
};

inline constexpr double kInitialDifficulty = 5.5;
inline constexpr double kDefaultEpsilon = 0.25;

struct DifficultyEntry {
  double difficulty;
  double score;

  friend bool operator==(const DifficultyEntry&, const DifficultyEntry&) = default;
};

/// Ordered (d, s) pairs for one weakness. Append-only.
class DifficultyHistory {
 public:
  explicit DifficultyHistory(DifficultyParams params = {});

  void append(double difficulty, double score);

  std::span<const DifficultyEntry> entries() const { return entries_; }
  const DifficultyParams& params() const { return params_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Copy of this history with the last entry removed.
  DifficultyHistory without_last() const;

 private:
  DifficultyParams params_;
  std::vector<DifficultyEntry> entries_;
};

double step(double difficulty, double score, const DifficultyParams& params = {});
double weight(double score, const DifficultyParams& params = {});
double posterior(const DifficultyHistory& history);

/// True iff dropping the newest entry moves the posterior by less than epsilon.
bool converged(const DifficultyHistory& history, double epsilon = kDefaultEpsilon);

enum class Band { easy, medium, hard };

struct DifficultyBand {
  Band name;
  double lo;
  double hi;
};

std::string_view to_string(Band band);
Band band_from_string(std::string_view name);

/// easy = [1,4), medium = [4,7), hard = [7,10]; 4 and 7 go to the higher band.
DifficultyBand band_of(double difficulty);

/// Dialogue turn budget: easy 6-7, medium 8-10, hard 11-12, linear in d
/// within each band.
int turn_limit_for(double difficulty);

}  // namespace ata
