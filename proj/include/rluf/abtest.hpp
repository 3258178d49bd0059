#pragma once

// Simulated A/B tests and the difference-of-proportions statistics.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rluf/policy.hpp"
#include "rluf/traffic.hpp"
#include "rluf/world.hpp"

namespace rluf {

struct ArmSummary {
  std::string arm_name;
  std::uint64_t n_prompts = 0;
  std::uint64_t successes = 0;
  double rate = 0.0;
  std::array<std::uint64_t, kNumCategories> category_prompts{};
  std::array<std::uint64_t, kNumCategories> category_successes{};
  /// Full traffic aggregate (absent for summaries built from bare counts).
  std::optional<TrafficTally> tally;
};

/// Summary from bare counts; rate = successes / n.
ArmSummary make_arm_summary(std::string name, std::uint64_t successes, std::uint64_t n);
ArmSummary make_arm_summary(std::string name, const TrafficTally& tally);

struct ABTestResult {
  double p_control = 0.0;
  double p_treatment = 0.0;
  double delta = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_pooled = 0.0;
  double se_pooled = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

struct SegmentResult {
  Category category = Category::kCasualChat;
  /// Empty when either arm saw no traffic in the category.
  std::optional<ABTestResult> result;
  std::uint64_t n_control = 0;
  std::uint64_t n_treatment = 0;
};

/// Standard normal CDF via erfc.
double normal_cdf(double z);

/// Unpooled SE for the interval, pooled SE for z. The pooled rate is the
/// plain average of the two arm rates when n_c == n_t and the
/// count-weighted rate otherwise. Throws PreconditionError on bad counts.
ABTestResult two_proportion_test(std::uint64_t successes_c, std::uint64_t n_c, std::uint64_t successes_t,
                                 std::uint64_t n_t);
ABTestResult two_proportion_test(const ArmSummary& control, const ArmSummary& treatment);

/// Independent traffic per arm; arm i uses stream derive_seed(seed, "ab_arm", i).
std::vector<ArmSummary> run_ab(const World& world, std::span<const std::pair<std::string, Policy>> arms,
                               std::uint64_t n_per_arm, std::uint64_t seed);

/// One test per category, sorted by delta descending; undefined segments last.
std::vector<SegmentResult> segment_report(const ArmSummary& control, const ArmSummary& treatment);

inline constexpr std::string_view kNoCorrectionNote =
    "no multiple-comparison correction applied to segment p-values";

nlohmann::json to_json(const ABTestResult& r);
nlohmann::json to_json(const ArmSummary& a);
/// Full report: every treatment arm against arms[0], with segments.
nlohmann::json ab_report_json(std::span<const ArmSummary> arms, bool with_segments);
std::string ab_report_csv(std::span<const ArmSummary> arms);
std::string segment_report_csv(std::string_view treatment, std::span<const SegmentResult> segments);

}  // namespace rluf
