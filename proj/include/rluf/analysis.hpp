#pragma once

// Retention regression, offline-online backtests and behavior-shift
// (reward hacking) reports.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rluf/conversation_log.hpp"
#include "rluf/policy.hpp"
#include "rluf/reward.hpp"
#include "rluf/traffic.hpp"
#include "rluf/world.hpp"

namespace rluf {

struct IrlsOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 100;
  /// A coefficient beyond this magnitude is treated as diverging.
  double divergence_bound = 50.0;
};

struct LogisticFit {
  std::vector<std::string> names;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  std::size_t iterations = 0;
  double log_likelihood = 0.0;

  std::vector<double> odds_ratios() const;
};

/// Maximum-likelihood logistic regression by IRLS. x is row-major n x p and
/// must contain its own intercept column. Errors: PreconditionError for one
/// outcome class or rank deficiency (message names the collinear columns),
/// NumericalError for separation or non-convergence.
LogisticFit fit_logistic(std::span<const double> x, std::span<const std::uint8_t> y, std::size_t p,
                         std::vector<std::string> names, const IrlsOptions& options = {});

/// Columns: intercept, love_count, thumbs_up_count, thumbs_down_count,
/// prompt_count, image_gen_count.
LogisticFit fit_retention_regression(std::span<const UserDaySummary> summaries, const IrlsOptions& options = {});

/// Sample Pearson r. Throws PreconditionError on size mismatch or n < 2 and
/// UndefinedMetricError on zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct BacktestPoint {
  std::string candidate_name;
  double offline_mean_score = 0.0;
  double online_love_rate = 0.0;
  std::uint64_t online_prompts = 0;
  std::uint64_t online_loves = 0;
};

struct BacktestResult {
  std::vector<BacktestPoint> points;
  /// Empty when either coordinate has zero variance.
  std::optional<double> r;
};

struct NamedPolicy {
  std::string name;
  Policy policy;
};

/// Offline: exact expected value of `offline_table` (category x library) on
/// a fixed prompt set of prompt_set_size draws from the production mix.
/// Online: love rate over n_online simulated prompts per candidate.
BacktestResult backtest(const World& world, std::span<const double> offline_table,
                        std::span<const NamedPolicy> candidates, std::size_t prompt_set_size, std::uint64_t n_online,
                        std::uint64_t seed);
/// Offline scorer = the reward model's p_love.
BacktestResult backtest(const World& world, const RewardModel& rm, std::span<const NamedPolicy> candidates,
                        std::size_t prompt_set_size, std::uint64_t n_online, std::uint64_t seed);

/// p_love of every (category, response) cell.
std::vector<double> p_love_table(const RewardModel& rm, const World& world);
/// World's expected love probability of every cell.
std::vector<double> true_love_table(const World& world);

struct HackingReport {
  std::string name;
  std::uint64_t n = 0;
  double bye_rate = 0.0;
  double followup_rate = 0.0;
  double refusal_rate = 0.0;
  double mean_length = 0.0;
  double mean_tone = 0.0;
};

/// Throws PreconditionError on an empty log.
HackingReport hacking_report(std::span<const ConversationTurn> log, std::string name = "");
HackingReport hacking_report(const TrafficTally& tally, std::string name = "");

struct HackingDelta {
  std::string name;
  std::string baseline;
  /// value / baseline value; empty when the baseline value is zero.
  std::optional<double> bye_ratio, followup_ratio, refusal_ratio, length_ratio, tone_ratio;
};

/// Relative changes of every report against the report named `baseline`.
std::vector<HackingDelta> compare_hacking(std::span<const HackingReport> reports, std::string_view baseline);

nlohmann::json to_json(const LogisticFit& fit);
nlohmann::json to_json(const BacktestResult& r);
std::string backtest_csv(const BacktestResult& r);
nlohmann::json to_json(const HackingReport& r);
nlohmann::json to_json(const HackingDelta& d);
std::string hacking_csv(std::span<const HackingReport> reports);

}  // namespace rluf
