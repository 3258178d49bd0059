#pragma once

// Simulated production traffic: a policy deployed against the world's users.

#include <array>
#include <cstdint>
#include <vector>

#include "rluf/conversation_log.hpp"
#include "rluf/policy.hpp"
#include "rluf/world.hpp"

namespace rluf {

struct CategoryTally {
  std::uint64_t n = 0;
  std::uint64_t love = 0;
  std::uint64_t thumbs_up = 0;
  std::uint64_t thumbs_down = 0;

  bool operator==(const CategoryTally&) const = default;
};

/// Streaming aggregate of a traffic simulation; equal to recounting the
/// corresponding log.
struct TrafficTally {
  std::array<CategoryTally, kNumCategories> per_category{};
  std::uint64_t bye = 0;
  std::uint64_t followup = 0;
  std::uint64_t refusal = 0;
  std::uint64_t length_sum = 0;
  double tone_sum = 0.0;

  std::uint64_t total() const;
  std::uint64_t loves() const;
  void add(Category c, const ResponseFeatures& f, const FeedbackLabels& l);
  void merge(const TrafficTally& other);

  bool operator==(const TrafficTally&) const = default;
};

/// n_prompts turns; category mix from the world's prompt distribution.
/// Identical (world, policy, n_prompts, seed) yields an identical log
/// regardless of thread count. Throws DataError on a library mismatch.
ConversationLog simulate_traffic(const World& world, const Policy& policy, std::uint64_t n_prompts,
                                 std::uint64_t seed);

/// Same draws as simulate_traffic, aggregated without materializing turns.
TrafficTally tally_traffic(const World& world, const Policy& policy, std::uint64_t n_prompts, std::uint64_t seed);

TrafficTally tally_log(std::span<const ConversationTurn> log);

/// First-day summaries with retention draws for n_users users deployed on
/// `policy`.
std::vector<UserDaySummary> simulate_user_days(const World& world, const Policy& policy, std::uint64_t n_users,
                                               std::uint64_t seed);

}  // namespace rluf
